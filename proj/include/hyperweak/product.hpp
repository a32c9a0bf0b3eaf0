#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "hyperweak/error.hpp"
#include "hyperweak/fields.hpp"
#include "hyperweak/kernels.hpp"

namespace hyperweak {

using Mat = Eigen::MatrixXd;

struct ProductGrid {
  Grid g1, g2;
  ProductGrid() = default;
  ProductGrid(Grid a, Grid b) : g1(std::move(a)), g2(std::move(b)) {}
  int n1() const { return static_cast<int>(g1.size()); }
  int n2() const { return static_cast<int>(g2.size()); }
  double cell_measure() const { return g1.cell_measure() * g2.cell_measure(); }
  double measure() const { return g1.measure() * g2.measure(); }
  const Grid& factor(int i) const { return i == 0 ? g1 : g2; }
  int nu1() const { return g1.model().nu(); }
  int nu2() const { return g2.model().nu(); }
};

// Values indexed (cell of factor 1, cell of factor 2).
struct ProductFunction {
  ProductGrid grid;
  Mat v;
  ProductFunction() = default;
  explicit ProductFunction(ProductGrid g) : grid(std::move(g)), v(Mat::Zero(grid.n1(), grid.n2())) {}
  ProductFunction(ProductGrid g, Mat values) : grid(std::move(g)), v(std::move(values)) {
    require(v.rows() == grid.n1() && v.cols() == grid.n2(), ErrorCode::InvalidInput,
            "product values do not match the grid");
    require(v.allFinite(), ErrorCode::InvalidInput, "non-finite sample");
  }
  template <class F>
  static ProductFunction sample(const ProductGrid& g, F f) {
    ProductFunction out(g);
    const auto p1 = g.g1.points();
    const auto p2 = g.g2.points();
    for (int i = 0; i < g.n1(); ++i)
      for (int j = 0; j < g.n2(); ++j) out.v(i, j) = f(p1[i], p2[j]);
    return out;
  }
  double integral() const { return v.sum() * grid.cell_measure(); }
  double l2() const { return std::sqrt(v.squaredNorm() * grid.cell_measure()); }
};

inline ProductFunction tensor(const ProductGrid& g, const KernelFn& a, const KernelFn& b) {
  return ProductFunction::sample(g, [&](const GroupPoint& x, const GroupPoint& y) { return a(x) * b(y); });
}

// M(i, j) = mass of the t-kernel at in_j^{-1} out_i on the input cell.
inline Mat kernel_matrix(const KernelFamily& k, double t, const Grid& in, const Grid& out) {
  require(in.model() == out.model() && in.model() == k.model(), ErrorCode::InvalidInput,
          "kernel and grids use different models");
  const int no = static_cast<int>(out.size()), ni = static_cast<int>(in.size());
  Mat M(no, ni);
  const double cm = in.cell_measure();
  if (k.has_primitive() && std::abs(in.spacing(0) - out.spacing(0)) < 1e-15 * in.spacing(0)) {
    // Toeplitz: the value depends on the lag only
    const double h = in.spacing(0);
    const double off = out.coord(0, 0) - in.coord(0, 0);
    std::vector<double> taps(no + ni - 1);
    for (int d = -(ni - 1); d <= no - 1; ++d) {
      const double x = off + d * h;
      taps[d + ni - 1] = k.primitive(x + h / 2, t) - k.primitive(x - h / 2, t);
    }
    for (int i = 0; i < no; ++i)
      for (int j = 0; j < ni; ++j) M(i, j) = taps[i - j + ni - 1];
    return M;
  }
  const auto pin = in.points();
  const auto pout = out.points();
  const GroupModel& m = in.model();
  const double h1 = in.spacing(0);
  for (int i = 0; i < no; ++i)
    for (int j = 0; j < ni; ++j) M(i, j) = k.cell_mass(m.left_difference(pin[j], pout[i]), t, cm, h1);
  return M;
}

// (K1 (x) K2) f
inline Mat apply_tensor(const Mat& K1, const Mat& f, const Mat& K2) { return K1 * f * K2.transpose(); }

// ---- balls on a factor, as runs of consecutive cell indices -------------------

struct Run {
  int a, b;  // [a, b)
  bool operator==(const Run& o) const { return a == o.a && b == o.b; }
};

struct FactorBalls {
  std::vector<std::vector<Run>> runs;
  std::vector<int> count;
  bool operator==(const FactorBalls& o) const { return runs == o.runs; }
};

// Balls around every cell; closed uses d <= r, open d < r, both with a relative
// slack of 1e-12 so radii that land on a lattice distance are not split by rounding.
inline FactorBalls factor_balls(const Grid& g, double r, bool closed) {
  r = closed ? r * (1 + 1e-12) : r * (1 - 1e-12);
  const int n = static_cast<int>(g.size());
  const auto pts = g.points();
  const auto& m = g.model();
  FactorBalls fb;
  fb.runs.resize(n);
  fb.count.assign(n, 0);
  if (m.is_abelian() && m.dim() == 1) {
    const double h = g.spacing(0);
    // largest lag w with w h <= r (closed) or w h < r (open)
    int w;
    if (closed) {
      w = static_cast<int>(std::floor(r / h));
      while ((w + 1) * h <= r) ++w;
      while (w > 0 && w * h > r) --w;
    } else {
      w = static_cast<int>(std::ceil(r / h)) - 1;
      while ((w + 1) * h < r) ++w;
      while (w >= 0 && w * h >= r) --w;
    }
    for (int i = 0; i < n; ++i) {
      if (w < 0) continue;
      const int a = std::max(0, i - w), b = std::min(n, i + w + 1);
      fb.runs[i] = {{a, b}};
      fb.count[i] = b - a;
    }
    return fb;
  }
  for (int i = 0; i < n; ++i) {
    int start = -1;
    for (int j = 0; j <= n; ++j) {
      bool in = false;
      if (j < n) {
        const double d = m.distance(pts[i], pts[j]);
        in = closed ? d <= r : d < r;
      }
      if (in && start < 0) start = j;
      if (!in && start >= 0) {
        fb.runs[i].push_back({start, j});
        fb.count[i] += j - start;
        start = -1;
      }
    }
  }
  return fb;
}

// Radii just past every distance between cells: one per distinct open ball.
inline std::vector<double> distinct_radii(const Grid& g) {
  const auto pts = g.points();
  std::vector<double> d;
  for (std::size_t j = 0; j < pts.size(); ++j)
    for (std::size_t i = 0; i < pts.size(); ++i) d.push_back(g.model().distance(pts[j], pts[i]));
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end(), [](double a, double b) { return std::abs(a - b) < 1e-12 * (1 + b); }), d.end());
  std::vector<double> r;
  for (double x : d) r.push_back(x * (1 + 1e-9) + 1e-12);  // open ball just past x
  return r;
}

struct PrefixSum2D {
  Mat P;
  explicit PrefixSum2D(const Mat& A) : P(Mat::Zero(A.rows() + 1, A.cols() + 1)) {
    for (int i = 0; i < A.rows(); ++i)
      for (int j = 0; j < A.cols(); ++j) P(i + 1, j + 1) = A(i, j) + P(i, j + 1) + P(i + 1, j) - P(i, j);
  }
  double rect(int a1, int b1, int a2, int b2) const {
    return P(b1, b2) - P(a1, b2) - P(b1, a2) + P(a1, a2);
  }
};

// Average of A over B1(g1) x B2(g2) for every g.
inline Mat ball_average(const Mat& A, const FactorBalls& b1, const FactorBalls& b2) {
  PrefixSum2D ps(A);
  Mat out(A.rows(), A.cols());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) {
      double s = 0;
      for (const Run& r1 : b1.runs[i])
        for (const Run& r2 : b2.runs[j]) s += ps.rect(r1.a, r1.b, r2.a, r2.b);
      out(i, j) = s / (static_cast<double>(b1.count[i]) * b2.count[j]);
    }
  return out;
}

class SparseMax {
 public:
  explicit SparseMax(const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    int levels = 1;
    while ((1 << levels) <= n) ++levels;
    t_.assign(levels, v);
    for (int l = 1; l < levels; ++l)
      for (int i = 0; i + (1 << l) <= n; ++i)
        t_[l][i] = std::max(t_[l - 1][i], t_[l - 1][i + (1 << (l - 1))]);
  }
  double query(int a, int b) const {  // [a, b), nonempty
    int l = 0;
    while ((1 << (l + 1)) <= b - a) ++l;
    return std::max(t_[l][a], t_[l][b - (1 << l)]);
  }

 private:
  std::vector<std::vector<double>> t_;
};

// max of A over B1(g1) x B2(g2) for every g, separably.
inline Mat ball_max(const Mat& A, const FactorBalls& b1, const FactorBalls& b2) {
  const int n1 = static_cast<int>(A.rows()), n2 = static_cast<int>(A.cols());
  Mat tmp(n1, n2), out(n1, n2);
  std::vector<double> line(n2);
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) line[j] = A(i, j);
    SparseMax sm(line);
    for (int j = 0; j < n2; ++j) {
      double m = -INFINITY;
      for (const Run& r : b2.runs[j]) m = std::max(m, sm.query(r.a, r.b));
      tmp(i, j) = m;
    }
  }
  line.assign(n1, 0);
  for (int j = 0; j < n2; ++j) {
    for (int i = 0; i < n1; ++i) line[i] = tmp(i, j);
    SparseMax sm(line);
    for (int i = 0; i < n1; ++i) {
      double m = -INFINITY;
      for (const Run& r : b1.runs[i]) m = std::max(m, sm.query(r.a, r.b));
      out(i, j) = m;
    }
  }
  return out;
}

// Scale grid for operators on a factor: per_octave points from spacing/4 to 2*diameter.
inline TGrid operator_tgrid(const Grid& g, int per_octave) {
  double hmin = INFINITY, diam = 0;
  for (int a = 0; a < g.ndims(); ++a) {
    const double h = g.spacing(a), L = g.hi()[a] - g.lo()[a];
    if (g.model().weight(a) == 2) {
      hmin = std::min(hmin, 2 * std::sqrt(h));
      diam = std::max(diam, 2 * std::sqrt(L));
    } else {
      hmin = std::min(hmin, h);
      diam = std::max(diam, L);
    }
  }
  const double ref = std::sqrt(hmin * diam);
  const double below = std::log2(ref / (hmin / 4)), above = std::log2(2 * diam / ref);
  return TGrid::geometric(ref, std::ceil(below), std::ceil(above), per_octave);
}

}  // namespace hyperweak
