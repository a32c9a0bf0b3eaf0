#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "hyperweak/cubes.hpp"
#include "hyperweak/error.hpp"
#include "hyperweak/fft.hpp"
#include "hyperweak/kernels.hpp"
#include "hyperweak/orlicz.hpp"
#include "hyperweak/product.hpp"

namespace hyperweak {

// Radii for the strong maximal function: geometric, per_octave points from half a
// cell to the factor diameter. Duplicated discrete balls are dropped later.
inline std::vector<double> default_radii(const Grid& g, int per_octave) {
  const TGrid tg = operator_tgrid(g, per_octave);
  std::vector<double> r;
  const double diam = [&] {
    double d = 0;
    const auto pts = g.points();
    for (const auto& p : {pts.front(), pts.back()})
      for (const auto& q : pts) d = std::max(d, g.model().distance(p, q));
    return d;
  }();
  for (double t : tg.t)
    if (t <= 1.01 * diam) r.push_back(t);
  r.push_back(1.01 * diam);
  return r;
}

namespace detail {

inline std::vector<FactorBalls> distinct_balls(const Grid& g, const std::vector<double>& radii,
                                               bool closed) {
  std::vector<FactorBalls> out;
  for (double r : radii) {
    FactorBalls b = factor_balls(g, r, closed);
    bool empty = false;
    for (int c : b.count)
      if (c == 0) empty = true;
    if (empty) continue;
    if (std::find(out.begin(), out.end(), b) == out.end()) out.push_back(std::move(b));
  }
  return out;
}

}  // namespace detail

// M_s f(g) = sup over products of balls P(c, r1, r2) containing g of the average of |f|,
// with c over grid cells and radii from the supplied lists.
inline ProductFunction strong_maximal(const ProductFunction& f, const std::vector<double>& radii1,
                                      const std::vector<double>& radii2) {
  const Mat A = f.v.cwiseAbs();
  const auto b1 = detail::distinct_balls(f.grid.g1, radii1, false);
  const auto b2 = detail::distinct_balls(f.grid.g2, radii2, false);
  Mat M = Mat::Zero(A.rows(), A.cols());
  for (const auto& x : b1)
    for (const auto& y : b2) M = M.cwiseMax(ball_max(ball_average(A, x, y), x, y));
  return ProductFunction(f.grid, M);
}

inline ProductFunction strong_maximal(const ProductFunction& f, int per_octave = 8) {
  return strong_maximal(f, default_radii(f.grid.g1, per_octave), default_radii(f.grid.g2, per_octave));
}

// sup over dyadic rectangles Q1 x Q2 of the two systems containing g.
inline ProductFunction pseudodyadic_strong_maximal(const ProductFunction& f, const CubeSystem& s1,
                                                   const CubeSystem& s2) {
  require(static_cast<int>(s1.samples().size()) == f.grid.n1() &&
              static_cast<int>(s2.samples().size()) == f.grid.n2(),
          ErrorCode::InvalidInput, "cube systems do not match the grid");
  const Mat A = f.v.cwiseAbs();
  const int n1 = f.grid.n1(), n2 = f.grid.n2();
  Mat M = Mat::Zero(n1, n2);
  for (int k2 = s2.coarsest_level(); k2 <= s2.finest_level(); ++k2) {
    const auto& as2 = s2.assignment(k2);
    const auto& lev2 = s2.level(k2);
    std::vector<int> slot2(s2.cubes().size(), -1);
    for (std::size_t i = 0; i < lev2.size(); ++i) slot2[lev2[i]] = static_cast<int>(i);
    Mat T = Mat::Zero(n1, static_cast<int>(lev2.size()));
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < n2; ++j) T(i, slot2[as2[j]]) += A(i, j);
    for (int k1 = s1.coarsest_level(); k1 <= s1.finest_level(); ++k1) {
      const auto& as1 = s1.assignment(k1);
      const auto& lev1 = s1.level(k1);
      std::vector<int> slot1(s1.cubes().size(), -1);
      for (std::size_t i = 0; i < lev1.size(); ++i) slot1[lev1[i]] = static_cast<int>(i);
      Mat S = Mat::Zero(static_cast<int>(lev1.size()), T.cols());
      for (int i = 0; i < n1; ++i) S.row(slot1[as1[i]]) += T.row(i);
      for (int a = 0; a < S.rows(); ++a)
        for (int b = 0; b < S.cols(); ++b)
          S(a, b) /= static_cast<double>(s1.cube(lev1[a]).members.size()) * s2.cube(lev2[b]).members.size();
      for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) M(i, j) = std::max(M(i, j), S(slot1[as1[i]], slot2[as2[j]]));
    }
  }
  return ProductFunction(f.grid, M);
}

// Sum over all pairs of systems from two adjacent families.
inline ProductFunction pseudodyadic_sum(const ProductFunction& f, const std::vector<CubeSystem>& a1,
                                        const std::vector<CubeSystem>& a2) {
  Mat acc = Mat::Zero(f.v.rows(), f.v.cols());
  for (const auto& s1 : a1)
    for (const auto& s2 : a2) acc += pseudodyadic_strong_maximal(f, s1, s2).v;
  return ProductFunction(f.grid, acc);
}

// ---- cone operators ----------------------------------------------------------

struct ConeOptions {
  double eta = 1.0;
  TGrid t1, t2;
};

inline ConeOptions default_cone(const ProductGrid& g, double eta = 1.0, int per_octave = 8) {
  return {eta, operator_tgrid(g.g1, per_octave), operator_tgrid(g.g2, per_octave)};
}

namespace detail {

inline void check_cone(const ConeOptions& o) {
  require(o.eta >= 0 && std::isfinite(o.eta), ErrorCode::InvalidAperture, "aperture must be >= 0");
  require(!o.t1.t.empty() && !o.t2.t.empty(), ErrorCode::InvalidParams, "empty t-grid");
}

inline std::vector<Mat> kernel_stack(const KernelFamily& k, const TGrid& tg, const Grid& g) {
  std::vector<Mat> out;
  out.reserve(tg.size());
  for (double t : tg.t) out.push_back(kernel_matrix(k, t, g, g));
  return out;
}

inline std::vector<FactorBalls> cone_balls(const Grid& g, const TGrid& tg, double eta) {
  std::vector<FactorBalls> out;
  for (double t : tg.t) out.push_back(factor_balls(g, eta * t, true));
  return out;
}

// sum over t of w * average over P(g, eta t) of |f * (k1 x k2)_t|^2
inline Mat cone_energy(const Mat& f, const KernelFamily& k1, const KernelFamily& k2,
                       const ProductGrid& g, const ConeOptions& o) {
  const auto K1 = kernel_stack(k1, o.t1, g.g1);
  const auto K2 = kernel_stack(k2, o.t2, g.g2);
  const auto B1 = cone_balls(g.g1, o.t1, o.eta);
  const auto B2 = cone_balls(g.g2, o.t2, o.eta);
  const double w = o.t1.dlog * o.t2.dlog;
  Mat acc = Mat::Zero(f.rows(), f.cols());
  for (std::size_t a = 0; a < K1.size(); ++a) {
    const Mat G = K1[a] * f;
    for (std::size_t b = 0; b < K2.size(); ++b) {
      const Mat F = G * K2[b].transpose();
      const Mat E = F.cwiseAbs2();
      if (o.eta == 0) acc += w * E;
      else acc += w * ball_average(E, B1[a], B2[b]);
    }
  }
  return acc.cwiseMax(0.0);  // prefix-sum rounding can dip below zero
}

}  // namespace detail

inline ProductFunction area_function(const ProductFunction& f, const KernelFamily& psi1,
                                     const KernelFamily& psi2, const ConeOptions& o) {
  detail::check_cone(o);
  require(o.eta > 0, ErrorCode::InvalidAperture, "area function needs eta > 0; use square_function");
  return ProductFunction(f.grid, detail::cone_energy(f.v, psi1, psi2, f.grid, o).cwiseSqrt());
}

inline ProductFunction square_function(const ProductFunction& f, const KernelFamily& psi1,
                                       const KernelFamily& psi2, ConeOptions o) {
  o.eta = 0;
  detail::check_cone(o);
  return ProductFunction(f.grid, detail::cone_energy(f.v, psi1, psi2, f.grid, o).cwiseSqrt());
}

// S_{grad p}: sum over all tensor components of the scaled Poisson gradients.
inline ProductFunction area_function_grad_poisson(const ProductFunction& f, const ConeOptions& o) {
  detail::check_cone(o);
  require(o.eta > 0, ErrorCode::InvalidAperture, "area function needs eta > 0");
  Mat acc = Mat::Zero(f.v.rows(), f.v.cols());
  for (const auto& c : grad_poisson_tensor(f.grid.g1.model(), f.grid.g2.model()))
    acc += detail::cone_energy(f.v, c.first, c.second, f.grid, o);
  return ProductFunction(f.grid, acc.cwiseSqrt());
}

inline ProductFunction nontangential_maximal(const ProductFunction& f, const KernelFamily& phi1,
                                             const KernelFamily& phi2, const ConeOptions& o) {
  detail::check_cone(o);
  for (const KernelFamily* k : {&phi1, &phi2})
    require(k->kind() == KernelKind::Heat || k->kind() == KernelKind::Poisson, ErrorCode::InvalidKernel,
            "nontangential maximal function needs a unit-mass kernel");
  const auto K1 = detail::kernel_stack(phi1, o.t1, f.grid.g1);
  const auto K2 = detail::kernel_stack(phi2, o.t2, f.grid.g2);
  const auto B1 = detail::cone_balls(f.grid.g1, o.t1, o.eta);
  const auto B2 = detail::cone_balls(f.grid.g2, o.t2, o.eta);
  Mat M = Mat::Zero(f.v.rows(), f.v.cols());
  for (std::size_t a = 0; a < K1.size(); ++a) {
    const Mat G = K1[a] * f.v;
    for (std::size_t b = 0; b < K2.size(); ++b) {
      const Mat F = (G * K2[b].transpose()).cwiseAbs();
      M = M.cwiseMax(o.eta == 0 ? F : ball_max(F, B1[a], B2[b]));
    }
  }
  return ProductFunction(f.grid, M);
}

// ---- double Riesz transform --------------------------------------------------

enum class RieszMultiplier {
  Analytic,     // -i xi_j / |xi| sampled on the padded frequency grid
  Interpolant,  // 1-D factors: exact transform of the piecewise-linear interpolant
};

struct RieszOptions {
  int j1 = 0, j2 = 0;
  int pad = 4;
  RieszMultiplier multiplier = RieszMultiplier::Interpolant;
};

namespace detail {

// (1/pi) PV int hat(s) / (d - s) ds, hat the unit tent on [-1, 1]
inline double hilbert_tent_weight(int d) {
  if (d == 0) return 0;
  auto xlog = [](double a, double b) { return a == 0 ? 0.0 : a * std::log(std::abs(b)); };
  const double x = d;
  const double r = xlog(1 + x, (x + 1) / x) + (d == 1 ? 0.0 : xlog(1 - x, x / (x - 1)));
  return r / std::numbers::pi;
}

// Full-spectrum multiplier of one factor on its padded grid, row-major over the
// padded dims with signed frequencies.
inline std::vector<std::complex<double>> factor_riesz_multiplier(const Grid& g, int j, int pad,
                                                                 RieszMultiplier kind) {
  const int d = g.ndims();
  std::vector<int> P(d);
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(P[a] = pad * g.dims()[a]);
  std::vector<std::complex<double>> m(total, 0.0);
  if (d == 1 && kind == RieszMultiplier::Interpolant) {
    const int n = P[0];
    // circular lags; pad >= 2 makes the convolution on the box exact
    std::vector<double> kr(n);
    for (int i = 0; i < n; ++i) kr[i] = hilbert_tent_weight(i <= n / 2 ? i : i - n);
    RealFFT fft({n});
    const auto K = fft.forward(kr);
    for (int i = 0; i < n; ++i) m[i] = i <= n / 2 ? K[i] : std::conj(K[n - i]);
    if (n % 2 == 0) m[n / 2] = 0;
    return m;
  }
  std::vector<int> idx(d, 0);
  for (std::size_t p = 0; p < total; ++p) {
    std::size_t r = p;
    for (int a = d - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(r % P[a]);
      r /= P[a];
    }
    double xi[kMaxDim], n2 = 0;
    bool nyq = false;
    for (int a = 0; a < d; ++a) {
      int k = idx[a];
      if (k > P[a] / 2) k -= P[a];
      if (a == j && P[a] % 2 == 0 && k == P[a] / 2) nyq = true;
      xi[a] = k / ((g.hi()[a] - g.lo()[a]) * pad);
      n2 += xi[a] * xi[a];
    }
    if (n2 > 0 && !nyq) m[p] = std::complex<double>(0, -xi[j] / std::sqrt(n2));
  }
  return m;
}

}  // namespace detail

// R_{j1} (x) R_{j2} on a product of abelian factors (Hilbert (x) Hilbert for 1-D
// factors), by a separable multiplier on the zero-extended, `pad`-times larger box.
inline ProductFunction double_riesz(const ProductFunction& f, const RieszOptions& o) {
  const Grid& g1 = f.grid.g1;
  const Grid& g2 = f.grid.g2;
  require(g1.model().is_abelian() && g2.model().is_abelian(), ErrorCode::UnsupportedModel,
          "double Riesz needs abelian factors");
  require(o.j1 >= 0 && o.j1 < g1.ndims() && o.j2 >= 0 && o.j2 < g2.ndims(), ErrorCode::InvalidInput,
          "Riesz direction out of range");
  require(o.pad >= 1, ErrorCode::InvalidParams, "padding factor must be >= 1");
  const int d1 = g1.ndims(), d2 = g2.ndims(), d = d1 + d2;
  const int pad = o.pad;
  std::vector<int> dims(d);
  for (int a = 0; a < d1; ++a) dims[a] = pad * g1.dims()[a];
  for (int a = 0; a < d2; ++a) dims[d1 + a] = pad * g2.dims()[a];
  const auto m1 = detail::factor_riesz_multiplier(g1, o.j1, pad, o.multiplier);
  const auto m2 = detail::factor_riesz_multiplier(g2, o.j2, pad, o.multiplier);
  std::size_t N2 = 1;
  for (int a = d1; a < d; ++a) N2 *= dims[a];

  RealFFT fft(dims);
  std::vector<double> buf(fft.real_size(), 0.0);
  auto padded_index = [&](int i, int j) {
    const auto a = g1.unravel(i);
    const auto b = g2.unravel(j);
    std::size_t p1 = 0, p2 = 0;
    for (int t = 0; t < d1; ++t) p1 = p1 * dims[t] + a[t];
    for (int t = 0; t < d2; ++t) p2 = p2 * dims[d1 + t] + b[t];
    return p1 * N2 + p2;
  };
  for (int i = 0; i < f.grid.n1(); ++i)
    for (int j = 0; j < f.grid.n2(); ++j) buf[padded_index(i, j)] = f.v(i, j);
  auto F = fft.forward(buf);
  // half-spectrum: last axis runs over [0, dims.back()/2]
  const int last = dims.back(), half = last / 2 + 1;
  std::vector<int> idx(d, 0);
  for (std::size_t p = 0; p < F.size(); ++p) {
    std::size_t r = p;
    idx[d - 1] = static_cast<int>(r % half);
    r /= half;
    for (int a = d - 2; a >= 0; --a) {
      idx[a] = static_cast<int>(r % dims[a]);
      r /= dims[a];
    }
    std::size_t q1 = 0, q2 = 0;
    for (int a = 0; a < d1; ++a) q1 = q1 * dims[a] + idx[a];
    for (int a = d1; a < d; ++a) q2 = q2 * dims[a] + idx[a];
    F[p] *= m1[q1] * m2[q2];
  }
  const auto out = fft.backward(F);
  ProductFunction res(f.grid);
  for (int i = 0; i < f.grid.n1(); ++i)
    for (int j = 0; j < f.grid.n2(); ++j) res.v(i, j) = out[padded_index(i, j)];
  return res;
}

inline ProductFunction double_riesz(const ProductFunction& f, int j1 = 0, int j2 = 0, int pad = 4) {
  return double_riesz(f, RieszOptions{j1, j2, pad, RieszMultiplier::Interpolant});
}

// ---- distribution curves -----------------------------------------------------

struct DistributionRow {
  double lambda, superlevel, F_phi, ratio;
};

// |{F > lambda}| against F_Phi(f / lambda).
inline std::vector<DistributionRow> distribution_curve(const ProductFunction& F, const ProductFunction& f,
                                                       const std::vector<double>& lambdas) {
  std::vector<DistributionRow> rows;
  const double cm = F.grid.cell_measure();
  for (double lam : lambdas) {
    require(lam > 0, ErrorCode::InvalidInput, "lambda must be positive");
    long cnt = 0;
    for (int i = 0; i < F.v.rows(); ++i)
      for (int j = 0; j < F.v.cols(); ++j)
        if (F.v(i, j) > lam) ++cnt;
    double fp = 0;
    for (int i = 0; i < f.v.rows(); ++i)
      for (int j = 0; j < f.v.cols(); ++j) fp += orlicz::phi(std::abs(f.v(i, j)) / lam);
    fp *= f.grid.cell_measure();
    const double sl = cnt * cm;
    rows.push_back({lam, sl, fp, fp > 0 ? sl / fp : (sl > 0 ? INFINITY : 0.0)});
  }
  return rows;
}

inline std::vector<double> geometric_lambdas(double lo, double hi, int n) {
  require(lo > 0 && hi > lo && n >= 2, ErrorCode::InvalidInput, "bad lambda range");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  return out;
}

}  // namespace hyperweak
