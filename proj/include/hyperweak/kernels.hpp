#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "hyperweak/error.hpp"
#include "hyperweak/fields.hpp"
#include "hyperweak/group.hpp"

namespace hyperweak {

// Geometric scale grid with constant log-weight.
struct TGrid {
  std::vector<double> t;
  double dlog = 0;  // weight per node in dt/t

  static TGrid geometric(double t_ref, double octaves_below, double octaves_above,
                         int per_octave) {
    require(t_ref > 0 && per_octave >= 1 && octaves_below >= 0 && octaves_above >= 0,
            ErrorCode::InvalidParams, "bad t-grid parameters");
    TGrid g;
    const int lo = static_cast<int>(std::lround(-octaves_below * per_octave));
    const int hi = static_cast<int>(std::lround(octaves_above * per_octave));
    for (int j = lo; j <= hi; ++j) g.t.push_back(t_ref * std::exp2(static_cast<double>(j) / per_octave));
    g.dlog = std::numbers::ln2 / per_octave;
    return g;
  }
  std::size_t size() const { return t.size(); }
};

enum class KernelKind { Heat, Poisson, ConjPoisson, Partner, GradPoisson };

// b(r) = (1 - r^2)^m on r < 1; the partner is (Laplacian of b) / K.
inline constexpr int kBumpPower = 4;

namespace detail {

inline double bump_profile(double r2) {
  if (r2 >= 1) return 0;
  return std::pow(1 - r2, kBumpPower);
}

// Radial Fourier transform of (1-|x|^2)_+^m on R^n at |xi| = s.
inline double bump_fourier(int n, double s) {
  const double m = kBumpPower;
  const double nu = n / 2.0 + m;
  if (s < 1e-8) {
    // limit: Gamma(m+1) pi^{-m} (pi)^{nu} / Gamma(nu+1)
    return std::tgamma(m + 1) * std::pow(std::numbers::pi, nu - m) / std::tgamma(nu + 1);
  }
  return std::tgamma(m + 1) * std::pow(std::numbers::pi, -m) * std::pow(s, -nu) *
         std::cyl_bessel_j(nu, 2 * std::numbers::pi * s);
}

// Laplacian of b(|x|) in R^n, written through r^2.
inline double bump_laplacian(int n, double r2) {
  if (r2 >= 1) return 0;
  const double m = kBumpPower;
  const double u = 1 - r2;
  return -2 * m * n * std::pow(u, m - 1) + 4 * m * (m - 1) * r2 * std::pow(u, m - 2);
}

inline double bump_derivative_1d(double x) {
  if (std::abs(x) >= 1) return 0;
  return -2.0 * kBumpPower * x * std::pow(1 - x * x, kBumpPower - 1);
}

}  // namespace detail

class KernelFamily {
 public:
  KernelFamily(GroupModel model, KernelKind kind, int component = -1)
      : model_(model), kind_(kind), component_(component) {
    const double nu = model_.nu();
    const double V = model_.unit_ball_volume();
    heat_c_ = 1.0 / (nu * V * std::pow(2.0, nu - 1) * std::tgamma(nu / 2));
    // integral of r^{nu-1} (1+r^2)^{-(nu+1)/2} over (0, inf) is B(nu/2, 1/2) / 2
    const double beta = std::tgamma(nu / 2) * std::tgamma(0.5) / std::tgamma((nu + 1) / 2);
    poisson_c_ = 1.0 / (nu * V * 0.5 * beta);
    if (kind_ == KernelKind::GradPoisson)
      require(component_ >= 0 && component_ <= model_.horizontal_dim(), ErrorCode::InvalidKernel,
              "gradient component out of range");
    if (kind_ == KernelKind::Partner) partner_k_ = partner_constant();
  }

  const GroupModel& model() const { return model_; }
  KernelKind kind() const { return kind_; }
  int component() const { return component_; }
  double heat_constant() const { return heat_c_; }
  double poisson_constant() const { return poisson_c_; }
  double partner_normalization() const { return partner_k_; }

  double eval(const GroupPoint& g, double t) const {
    const double s = model_.hom_norm_sq(g);
    if (!std::isfinite(s)) return 0;
    const double nu = model_.nu();
    switch (kind_) {
      case KernelKind::Heat:
        return heat_c_ * std::pow(t, -nu / 2) * std::exp(-s / (4 * t));
      case KernelKind::Poisson:
        return poisson_c_ * t * std::pow(t * t + s, -(nu + 1) / 2);
      case KernelKind::ConjPoisson:
        return poisson_c_ * t * (s - nu * t * t) * std::pow(t * t + s, -(nu + 3) / 2);
      case KernelKind::Partner: {
        const GroupPoint u = model_.dilate(g, 1.0 / t);
        return std::pow(t, -nu) * partner_profile(u);
      }
      case KernelKind::GradPoisson: {
        if (component_ == model_.horizontal_dim())
          return poisson_c_ * t * (s - nu * t * t) * std::pow(t * t + s, -(nu + 3) / 2);
        const double dpds = -poisson_c_ * t * (nu + 1) / 2 * std::pow(t * t + s, -(nu + 3) / 2);
        return t * dpds * horizontal_derivative_of_s(g, component_);
      }
    }
    return 0;
  }
  KernelFn at(double t) const {
    require(t > 0, ErrorCode::InvalidInput, "kernel scale must be positive");
    return [self = *this, t](const GroupPoint& g) { return self.eval(g, t); };
  }

  // Antiderivative in x on Abelian(1); differences give exact cell masses.
  bool has_primitive() const { return model_.is_abelian() && model_.dim() == 1; }
  double primitive(double x, double t) const {
    const double pi = std::numbers::pi;
    switch (kind_) {
      case KernelKind::Heat: return 0.5 * std::erf(x / std::sqrt(4 * t));
      case KernelKind::Poisson: return std::atan(x / t) / pi;
      case KernelKind::ConjPoisson: return -x * t / (pi * (t * t + x * x));
      case KernelKind::Partner: return detail::bump_derivative_1d(x / t) / partner_k_;
      case KernelKind::GradPoisson:
        if (component_ == 1) return -x * t / (pi * (t * t + x * x));
        return t * t / (pi * (t * t + x * x));  // t * p_t
    }
    return 0;
  }
  // Mass of the t-kernel on the cell [x - h/2, x + h/2] (1-d), or midpoint value times
  // the cell measure elsewhere.
  double cell_mass(const GroupPoint& g, double t, double cell_measure, double h1d) const {
    if (has_primitive()) return primitive(g[0] + h1d / 2, t) - primitive(g[0] - h1d / 2, t);
    return eval(g, t) * cell_measure;
  }

  // Exact Fourier symbol on R^1 (convention e^{-2 pi i x xi}); purely real for even
  // kernels. Used by spectral oracles.
  double symbol_1d(double xi, double t) const {
    const double a = 2 * std::numbers::pi * std::abs(xi) * t;
    switch (kind_) {
      case KernelKind::Heat: return std::exp(-t * 4 * std::numbers::pi * std::numbers::pi * xi * xi);
      case KernelKind::Poisson: return std::exp(-a);
      case KernelKind::ConjPoisson: return -a * std::exp(-a);
      case KernelKind::Partner: {
        const double s = std::abs(xi) * t;
        return -4 * std::numbers::pi * std::numbers::pi * s * s * detail::bump_fourier(1, s) /
               partner_k_;
      }
      default: break;
    }
    throw Error(ErrorCode::InvalidKernel, "no real symbol for this kernel");
  }

 private:
  double horizontal_derivative_of_s(const GroupPoint& g, int j) const {
    if (model_.is_abelian()) return 2 * g[j];
    const double x = g[0], y = g[1], z = g[2];
    const double r2 = x * x + y * y;
    const double s = std::sqrt(r2 * r2 + 16 * z * z);
    if (s == 0) return 0;
    return j == 0 ? (2 * x * r2 - 8 * y * z) / s : (2 * y * r2 + 8 * x * z) / s;
  }

  // Unnormalized partner profile at scale 1 divided by the Calderon constant.
  double partner_profile(const GroupPoint& u) const {
    if (model_.is_abelian()) {
      double r2 = 0;
      for (int i = 0; i < model_.dim(); ++i) r2 += u[i] * u[i];
      return detail::bump_laplacian(model_.dim(), r2) / partner_k_;
    }
    // Heisenberg: sub-Laplacian of (1 - rho^4)^m, in closed form.
    const double m = kBumpPower;
    const double r2 = u[0] * u[0] + u[1] * u[1];
    const double P = r2 * r2 + 16 * u[2] * u[2];
    if (P >= 1) return 0;
    const double lap = 16 * m * (m - 1) * r2 * P * std::pow(1 - P, m - 2) -
                       24 * m * r2 * std::pow(1 - P, m - 1);
    return lap / partner_k_;
  }

  // K = int_0^inf qhat(s) phihat0(s) ds / s for the abelian radial symbols. On the
  // Heisenberg group the constant is fitted later; start from the abelian R^2 value.
  double partner_constant() const {
    const int n = model_.is_abelian() ? model_.dim() : 2;
    const double pi = std::numbers::pi;
    auto integrand = [n, pi](double s) {
      const double q = -2 * pi * s * std::exp(-2 * pi * s);
      const double phi0 = -4 * pi * pi * s * s * detail::bump_fourier(n, s);
      return q * phi0 / s;
    };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, 20.0, 15,
                                                                          1e-14);
  }

 public:
  // Rescale the partner so that its reproducing formula has unit gain (Heisenberg fit).
  void rescale_partner(double factor) {
    require(kind_ == KernelKind::Partner && factor != 0, ErrorCode::InvalidKernel,
            "rescale applies to partner kernels only");
    partner_k_ /= factor;
  }

 private:
  GroupModel model_;
  KernelKind kind_;
  int component_ = -1;
  double heat_c_ = 0, poisson_c_ = 0, partner_k_ = 1;
};

inline KernelFamily heat_kernel(const GroupModel& m) { return {m, KernelKind::Heat}; }
inline KernelFamily poisson_kernel(const GroupModel& m) { return {m, KernelKind::Poisson}; }
inline KernelFamily conj_poisson_kernel(const GroupModel& m) { return {m, KernelKind::ConjPoisson}; }
inline KernelFamily reproducing_partner(const GroupModel& m) { return {m, KernelKind::Partner}; }

// Components of the scaled gradient (t X_1 p_t, ..., t X_d p_t, t d_t p_t).
inline std::vector<KernelFamily> grad_poisson_components(const GroupModel& m) {
  std::vector<KernelFamily> out;
  for (int j = 0; j <= m.horizontal_dim(); ++j) out.emplace_back(m, KernelKind::GradPoisson, j);
  return out;
}

// Pairs (i, j) indexing the tensor of factor-1 and factor-2 gradient components.
struct TensorComponent {
  KernelFamily first;
  KernelFamily second;
};
inline std::vector<TensorComponent> grad_poisson_tensor(const GroupModel& m1, const GroupModel& m2) {
  std::vector<TensorComponent> out;
  for (const auto& a : grad_poisson_components(m1))
    for (const auto& b : grad_poisson_components(m2)) out.push_back({a, b});
  return out;
}

// p_t by subordination of the heat kernel:
//   p_t = (1 / (2 sqrt(pi))) int_0^inf t e^{-t^2/4v} v^{-1/2} h_v dv / v,
// trapezoid rule in log v.
struct SubordinationGrid {
  double below = 10;       // octaves of v below t^2
  double above = 26;       // octaves above t^2
  int per_octave = 16;
};

inline double subordinated_poisson(const GroupModel& m, const GroupPoint& g, double t,
                                   const SubordinationGrid& sg = {}) {
  const KernelFamily heat = heat_kernel(m);
  const double dlog = std::numbers::ln2 / sg.per_octave;
  const int lo = static_cast<int>(-sg.below * sg.per_octave);
  const int hi = static_cast<int>(sg.above * sg.per_octave);
  double s = 0;
  for (int j = lo; j <= hi; ++j) {
    const double v = t * t * std::exp2(static_cast<double>(j) / sg.per_octave);
    const double w = (j == lo || j == hi) ? 0.5 : 1.0;
    s += w * t * std::exp(-t * t / (4 * v)) / std::sqrt(v) * heat.eval(g, v);
  }
  return s * dlog / (2 * std::sqrt(std::numbers::pi));
}

// ---- envelope constants ------------------------------------------------------

enum class EnvelopeKind { Heat, HeatGradient, Poisson, PoissonGradient };

struct EnvelopeFit {
  double upper = 0;                                      // sup kernel / envelope
  double lower = std::numeric_limits<double>::infinity();  // inf, two-sided bound only
};

// Envelopes: heat t^{-nu/2} e^{-rho^2/(c t)}, heat gradient t^{-(nu+1)/2} e^{-rho^2/(c t)},
// Poisson t / (t^2+rho^2)^{(nu+1)/2}, Poisson gradient t / (t^2+rho^2)^{(nu+2)/2}.
// The heat gradient uses the scale variable s = sqrt(t).
inline EnvelopeFit fit_envelope(const GroupModel& m, EnvelopeKind kind, double c_gauss,
                                int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double nu = m.nu();
  const KernelFamily heat = heat_kernel(m);
  const KernelFamily pois = poisson_kernel(m);
  const auto grads = grad_poisson_components(m);
  EnvelopeFit fit;
  for (int i = 0; i < samples; ++i) {
    const double t = std::exp2(-4 + 8 * u01(rng));
    const double r = std::sqrt(t) * 8 * u01(rng) + (kind == EnvelopeKind::Poisson ||
                                                    kind == EnvelopeKind::PoissonGradient
                                                ? t * 64 * std::pow(u01(rng), 3)
                                                : 0);
    const GroupPoint g = random_point_at_norm(m, r, rng);
    const double s = m.hom_norm_sq(g);
    double val = 0, env = 1;
    switch (kind) {
      case EnvelopeKind::Heat:
        val = heat.eval(g, t);
        env = std::pow(t, -nu / 2) * std::exp(-s / (c_gauss * t));
        break;
      case EnvelopeKind::HeatGradient: {
        // spatial horizontal gradient and d/d(sqrt t)
        const double h = heat.eval(g, t);
        double grad2 = 0;
        const double dhds = -h / (4 * t);
        for (int j = 0; j < m.horizontal_dim(); ++j) {
          double ds;
          if (m.is_abelian()) {
            ds = 2 * g[j];
          } else {
            const double x = g[0], y = g[1], z = g[2], r2 = x * x + y * y;
            const double sq = std::sqrt(r2 * r2 + 16 * z * z);
            ds = sq == 0 ? 0 : (j == 0 ? (2 * x * r2 - 8 * y * z) / sq : (2 * y * r2 + 8 * x * z) / sq);
          }
          grad2 += (dhds * ds) * (dhds * ds);
        }
        const double tau = std::sqrt(t);
        const double dtau = h * (-nu / tau + s / (2 * tau * tau * tau));
        grad2 += dtau * dtau;
        val = std::sqrt(grad2);
        env = std::pow(t, -(nu + 1) / 2) * std::exp(-s / (c_gauss * t));
        break;
      }
      case EnvelopeKind::Poisson:
        val = pois.eval(g, t);
        env = t * std::pow(t * t + s, -(nu + 1) / 2);
        break;
      case EnvelopeKind::PoissonGradient: {
        double g2 = 0;
        for (const auto& k : grads) {
          const double v = k.eval(g, t) / t;  // unscaled component
          g2 += v * v;
        }
        val = std::sqrt(g2);
        env = t * std::pow(t * t + s, -(nu + 2) / 2);
        break;
      }
    }
    if (env <= 0 || !std::isfinite(env)) continue;
    const double ratio = val / env;
    fit.upper = std::max(fit.upper, ratio);
    if (kind == EnvelopeKind::Poisson) fit.lower = std::min(fit.lower, ratio);
  }
  return fit;
}

}  // namespace hyperweak
