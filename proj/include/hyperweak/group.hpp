#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hyperweak/error.hpp"

namespace hyperweak {

inline constexpr int kMaxDim = 4;

// Coordinates of a group element. Abelian(n) uses n slots, Heisenberg (x, y, z).
struct GroupPoint {
  std::array<double, kMaxDim> c{};
  int n = 0;

  GroupPoint() = default;
  explicit GroupPoint(int dim) : n(dim) {}
  GroupPoint(std::initializer_list<double> xs) : n(static_cast<int>(xs.size())) {
    int i = 0;
    for (double x : xs) c[i++] = x;
  }
  double& operator[](int i) { return c[i]; }
  double operator[](int i) const { return c[i]; }
  int size() const { return n; }
  bool operator==(const GroupPoint& o) const {
    if (n != o.n) return false;
    for (int i = 0; i < n; ++i)
      if (c[i] != o.c[i]) return false;
    return true;
  }
};

class GroupModel {
 public:
  enum class Kind { Abelian, Heisenberg1 };

  static GroupModel abelian(int n, double eps = 1.0) {
    require(n >= 1 && n <= kMaxDim, ErrorCode::UnsupportedModel,
            "abelian dimension must be in 1..4");
    require(eps > 0, ErrorCode::InvalidParams, "epsilon must be positive");
    return GroupModel(Kind::Abelian, n, eps);
  }
  static GroupModel heisenberg(double eps = 1.0) {
    require(eps > 0, ErrorCode::InvalidParams, "epsilon must be positive");
    return GroupModel(Kind::Heisenberg1, 3, eps);
  }
  // "abelian<n>" or "heisenberg1"
  static GroupModel parse(std::string_view s) {
    if (s == "heisenberg1" || s == "heisenberg") return heisenberg();
    if (s.rfind("abelian", 0) == 0 && s.size() == 8 && s[7] >= '1' && s[7] <= '4')
      return abelian(s[7] - '0');
    throw Error(ErrorCode::UnsupportedModel, "unknown group model '" + std::string(s) + "'");
  }

  Kind kind() const { return kind_; }
  bool is_abelian() const { return kind_ == Kind::Abelian; }
  int dim() const { return dim_; }
  // homogeneous dimension
  int nu() const { return kind_ == Kind::Abelian ? dim_ : 4; }
  int horizontal_dim() const { return kind_ == Kind::Abelian ? dim_ : 2; }
  // dilation weight of coordinate i
  int weight(int i) const { return (kind_ == Kind::Heisenberg1 && i == 2) ? 2 : 1; }
  double epsilon() const { return eps_; }
  std::string name() const {
    return kind_ == Kind::Abelian ? "abelian" + std::to_string(dim_) : "heisenberg1";
  }
  bool operator==(const GroupModel& o) const { return kind_ == o.kind_ && dim_ == o.dim_; }

  GroupPoint identity() const { return GroupPoint(dim_); }

  GroupPoint multiply(const GroupPoint& g, const GroupPoint& h) const {
    GroupPoint r(dim_);
    for (int i = 0; i < dim_; ++i) r[i] = g[i] + h[i];
    if (kind_ == Kind::Heisenberg1) r[2] += 0.5 * (g[0] * h[1] - g[1] * h[0]);
    return r;
  }
  GroupPoint invert(const GroupPoint& g) const {
    GroupPoint r(dim_);
    for (int i = 0; i < dim_; ++i) r[i] = -g[i];
    return r;
  }
  // g^{-1} h without building the inverse
  GroupPoint left_difference(const GroupPoint& g, const GroupPoint& h) const {
    GroupPoint r(dim_);
    for (int i = 0; i < dim_; ++i) r[i] = h[i] - g[i];
    if (kind_ == Kind::Heisenberg1) r[2] -= 0.5 * (g[0] * h[1] - g[1] * h[0]);
    return r;
  }
  GroupPoint dilate(const GroupPoint& g, double t) const {
    GroupPoint r(dim_);
    for (int i = 0; i < dim_; ++i) r[i] = g[i] * (weight(i) == 2 ? t * t : t);
    return r;
  }

  // Squared gauge: |x|^2 for abelian, sqrt((x^2+y^2)^2 + 16 z^2) for Heisenberg.
  double hom_norm_sq(const GroupPoint& g) const {
    if (kind_ == Kind::Abelian) {
      double s = 0;
      for (int i = 0; i < dim_; ++i) s += g[i] * g[i];
      return s;
    }
    const double r2 = g[0] * g[0] + g[1] * g[1];
    return std::sqrt(r2 * r2 + 16.0 * g[2] * g[2]);
  }
  double hom_norm(const GroupPoint& g) const { return std::sqrt(hom_norm_sq(g)); }
  double distance(const GroupPoint& g, const GroupPoint& h) const {
    return hom_norm(left_difference(g, h));
  }
  // Euclidean lower bound on distance using horizontal coordinates; used for pruning.
  double horizontal_gap(const GroupPoint& g, const GroupPoint& h) const {
    double s = 0;
    for (int i = 0; i < horizontal_dim(); ++i) s += (g[i] - h[i]) * (g[i] - h[i]);
    return std::sqrt(s);
  }

  double unit_ball_volume() const {
    if (kind_ == Kind::Abelian)
      return std::pow(std::numbers::pi, dim_ / 2.0) / std::tgamma(dim_ / 2.0 + 1.0);
    return heisenberg_unit_ball_volume();
  }
  double ball_volume(double r) const {
    require(r >= 0, ErrorCode::InvalidInput, "negative radius");
    return unit_ball_volume() * std::pow(r, nu());
  }

  // Midpoint rule in (x, y) on [-1,1]^2 with the exact z-extent sqrt(1 - r^4)/2.
  static double heisenberg_unit_ball_volume() {
    static const double v = [] {
      const int n = 2000;
      const double h = 2.0 / n;
      double s = 0;
      for (int i = 0; i < n; ++i) {
        const double x = -1 + (i + 0.5) * h;
        for (int j = 0; j < n; ++j) {
          const double y = -1 + (j + 0.5) * h;
          const double r2 = x * x + y * y;
          if (r2 < 1) s += 0.5 * std::sqrt(1 - r2 * r2);
        }
      }
      return s * h * h;
    }();
    return v;
  }

 private:
  GroupModel(Kind k, int d, double eps) : kind_(k), dim_(d), eps_(eps) {}
  Kind kind_ = Kind::Abelian;
  int dim_ = 1;
  double eps_ = 1.0;
};

// Monte-Carlo estimate of |B(o,1)|, sampling the box that contains the ball.
inline double monte_carlo_unit_ball_volume(const GroupModel& m, std::uint64_t seed,
                                           std::size_t samples) {
  std::mt19937_64 rng(seed);
  GroupPoint g(m.dim());
  double box = 1;
  std::vector<double> half(m.dim());
  for (int i = 0; i < m.dim(); ++i) {
    half[i] = (m.weight(i) == 2) ? 0.25 : 1.0;
    box *= 2 * half[i];
  }
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::size_t hit = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    for (int i = 0; i < m.dim(); ++i) g[i] = u(rng) * half[i];
    if (m.hom_norm_sq(g) < 1.0) ++hit;
  }
  return box * static_cast<double>(hit) / static_cast<double>(samples);
}

// Geometric doubling estimate: largest greedy r-net inside B(x, 2r) over the given
// centers and radii. A maximal r-net covers by r-balls.
inline int estimate_doubling_constant(const GroupModel& m, const std::vector<GroupPoint>& pts,
                                      const std::vector<double>& radii, int n_centers,
                                      std::uint64_t seed) {
  require(!pts.empty(), ErrorCode::InvalidInput, "empty sample set");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  int best = 1;
  std::vector<std::size_t> inside;
  std::vector<std::size_t> net;
  for (int c = 0; c < n_centers; ++c) {
    const GroupPoint& x = pts[pick(rng)];
    for (double r : radii) {
      inside.clear();
      for (std::size_t i = 0; i < pts.size(); ++i)
        if (m.distance(x, pts[i]) < 2 * r) inside.push_back(i);
      net.clear();
      for (std::size_t i : inside) {
        bool far = true;
        for (std::size_t j : net)
          if (m.distance(pts[i], pts[j]) < r) { far = false; break; }
        if (far) net.push_back(i);
      }
      best = std::max(best, static_cast<int>(net.size()));
    }
  }
  return best;
}

}  // namespace hyperweak
