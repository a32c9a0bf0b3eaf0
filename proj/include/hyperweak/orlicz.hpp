#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "hyperweak/error.hpp"

namespace hyperweak::orlicz {

inline constexpr double kExpGuard = 700.0;

// Phi(s) = s log(e + s)
inline double phi(double s) {
  require(s >= 0, ErrorCode::InvalidInput, "Phi takes nonnegative arguments");
  return s * std::log(std::numbers::e + s);
}

// Psi(t) = e^t - 1, guarded against overflow.
inline double psi(double t) {
  require(t >= 0, ErrorCode::InvalidInput, "Psi takes nonnegative arguments");
  if (t > kExpGuard) throw Error(ErrorCode::DivergentInput, "Psi argument exceeds overflow guard");
  return std::expm1(t);
}

// F_Phi(f) = sum Phi(|f|) * cell measure
inline double modular_phi(const std::vector<double>& f, double cell) {
  double s = 0;
  for (double v : f) s += phi(std::abs(v));
  return s * cell;
}

inline double modular_psi(const std::vector<double>& f, double cell) {
  double s = 0;
  for (double v : f) s += psi(std::abs(v));
  return s * cell;
}

// Smallest lambda with modular(f / lambda) <= 1, by bisection on a bracket that is
// expanded until it straddles the root. Relative tolerance on lambda.
template <class Modular>
double luxemburg_norm(const std::vector<double>& f, double cell, Modular modular, double rtol) {
  double maxabs = 0;
  for (double v : f) maxabs = std::max(maxabs, std::abs(v));
  if (maxabs == 0) return 0;
  auto scaled = [&](double lam) {
    std::vector<double> g(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) g[i] = f[i] / lam;
    return modular(g, cell);
  };
  const double F = modular(f, cell);
  double lo = F / (1 + F), hi = std::max(1.0, F) * std::numbers::e;
  for (int i = 0; i < 200 && scaled(lo) <= 1; ++i) lo *= 0.5;
  for (int i = 0; i < 200 && scaled(hi) > 1; ++i) hi *= 2;
  require(scaled(lo) > 1 && scaled(hi) <= 1, ErrorCode::DivergentInput,
          "could not bracket the Luxemburg norm");
  while ((hi - lo) > rtol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (scaled(mid) > 1) lo = mid; else hi = mid;
  }
  return hi;
}

inline double norm_phi(const std::vector<double>& f, double cell, double rtol = 1e-8) {
  return luxemburg_norm(f, cell, modular_phi, rtol);
}

// Psi's modular can overflow for small lambda; treat overflow as "too large".
inline double norm_psi(const std::vector<double>& f, double cell, double rtol = 1e-8) {
  auto safe = [](const std::vector<double>& g, double c) -> double {
    for (double v : g)
      if (std::abs(v) > kExpGuard) return INFINITY;
    return modular_psi(g, c);
  };
  return luxemburg_norm(f, cell, safe, rtol);
}

struct HolderReport {
  double lhs = 0;             // int |f h|
  double modular_bound = 0;   // F_Phi(f) + F_Psi(h)
  double norm_bound = 0;      // 2 ||f||_Phi ||h||_Psi
};

inline HolderReport holder_pair(const std::vector<double>& f, const std::vector<double>& h,
                                double cell) {
  require(f.size() == h.size(), ErrorCode::InvalidInput, "size mismatch");
  HolderReport r;
  for (std::size_t i = 0; i < f.size(); ++i) r.lhs += std::abs(f[i] * h[i]);
  r.lhs *= cell;
  r.modular_bound = modular_phi(f, cell) + modular_psi(h, cell);
  r.norm_bound = 2 * norm_phi(f, cell) * norm_psi(h, cell);
  return r;
}

// f * chi_{|f| <= N}
inline std::vector<double> truncate(const std::vector<double>& f, double N) {
  require(N > 0, ErrorCode::InvalidInput, "truncation level must be positive");
  std::vector<double> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = std::abs(f[i]) <= N ? f[i] : 0.0;
  return out;
}

}  // namespace hyperweak::orlicz
