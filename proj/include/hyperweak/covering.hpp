#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include "hyperweak/cubes.hpp"
#include "hyperweak/error.hpp"
#include "hyperweak/operators.hpp"
#include "hyperweak/orlicz.hpp"
#include "hyperweak/product.hpp"

namespace hyperweak {

// Rectangle = pair of cube ids, one per factor system.
struct Rect {
  int q1 = -1, q2 = -1;
  bool operator==(const Rect& o) const { return q1 == o.q1 && q2 == o.q2; }
};

// Set of product cells, row-major (cell of factor 1, cell of factor 2).
struct CellSet {
  int n1 = 0, n2 = 0;
  std::vector<std::uint8_t> in;
  CellSet() = default;
  CellSet(int a, int b) : n1(a), n2(b), in(static_cast<std::size_t>(a) * b, 0) {}
  std::uint8_t& at(int i, int j) { return in[static_cast<std::size_t>(i) * n2 + j]; }
  std::uint8_t at(int i, int j) const { return in[static_cast<std::size_t>(i) * n2 + j]; }
  long count() const { return std::accumulate(in.begin(), in.end(), 0L); }
  Mat indicator() const {
    Mat m(n1, n2);
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < n2; ++j) m(i, j) = at(i, j);
    return m;
  }
};

// Two cube systems on the factors of a product grid.
struct RectSpace {
  ProductGrid grid;
  CubeSystem s1, s2;

  RectSpace() = default;
  RectSpace(ProductGrid g, CubeSystem a, CubeSystem b) : grid(std::move(g)), s1(std::move(a)), s2(std::move(b)) {
    require(static_cast<int>(s1.samples().size()) == grid.n1() &&
                static_cast<int>(s2.samples().size()) == grid.n2(),
            ErrorCode::InvalidInput, "cube systems do not match the grid");
  }
  long cells(const Rect& r) const {
    return static_cast<long>(s1.cube(r.q1).members.size()) * static_cast<long>(s2.cube(r.q2).members.size());
  }
  double measure(const Rect& r) const { return cells(r) * grid.cell_measure(); }
  template <class F>
  void for_each_cell(const Rect& r, F f) const {
    for (int i : s1.cube(r.q1).members)
      for (int j : s2.cube(r.q2).members) f(i, j);
  }
  CellSet cellset(const Rect& r) const {
    CellSet c(grid.n1(), grid.n2());
    for_each_cell(r, [&](int i, int j) { c.at(i, j) = 1; });
    return c;
  }
  // C(G) = (c / 6C)^{nu1 + nu2}
  double geometric_constant() const {
    const auto& p = s1.params();
    const auto& q = s2.params();
    return std::pow(p.c / (6 * p.C), grid.nu1()) * std::pow(q.c / (6 * q.C), grid.nu2());
  }
};

// [0,1)^2 with 2^L cells per axis and dyadic intervals of levels 0..L.
inline RectSpace dyadic_unit_square(int L, int shift1 = 0, int shift2 = 0) {
  require(L >= 1 && L <= 12, ErrorCode::InvalidParams, "dyadic depth out of range");
  const Grid g = Grid::cube(GroupModel::abelian(1), 0, 1, 1 << L);
  const auto p = default_cube_params(g.model(), 0, L);
  return RectSpace(ProductGrid(g, g), build_dyadic_system(g, p, shift1, 0), build_dyadic_system(g, p, shift2, 1));
}

// ---- Cordoba-Fefferman selection ----------------------------------------------

enum class SelectOrder { Input, DecreasingMeasure };

struct SelectionResult {
  std::vector<int> first_pass;  // input indices kept by the forward pass
  std::vector<int> selected;    // input indices of the final rectangles
  double E = 0;                 // |union of the family|
  double E_tilde = 0;           // |union of the selection|
  double recovery_ratio = 0;    // |E| / |E_tilde|
  std::vector<int> multiplicity;       // sum of indicators per cell
  std::vector<double> overlap_hist;    // [n] = |{multiplicity >= n}|, [0] = |grid|
  double max_overlap_fraction = 0;     // max over selected of |R ∩ others| / |R|
  double sum_measures = 0;             // sum |R~|
  double sum_private = 0;              // sum |R~ minus the others|
};

namespace detail {

inline std::vector<int> greedy_quarter(const RectSpace& sp, const std::vector<Rect>& rects,
                                       const std::vector<int>& order) {
  CellSet covered(sp.grid.n1(), sp.grid.n2());
  std::vector<int> keep;
  for (int idx : order) {
    const Rect& r = rects[idx];
    long hit = 0;
    sp.for_each_cell(r, [&](int i, int j) { hit += covered.at(i, j); });
    if (4 * hit <= sp.cells(r)) {
      keep.push_back(idx);
      sp.for_each_cell(r, [&](int i, int j) { covered.at(i, j) = 1; });
    }
  }
  return keep;
}

}  // namespace detail

// Two greedy passes at overlap 1/4; the second runs over the first pass reversed.
// A finite family always terminates, so the forward pass keeps every admissible rectangle.
inline SelectionResult cf_select(const RectSpace& sp, const std::vector<Rect>& rects,
                                 SelectOrder order = SelectOrder::DecreasingMeasure) {
  SelectionResult res;
  const int n1 = sp.grid.n1(), n2 = sp.grid.n2();
  const double cm = sp.grid.cell_measure();
  res.multiplicity.assign(static_cast<std::size_t>(n1) * n2, 0);
  res.overlap_hist = {n1 * n2 * cm};
  if (rects.empty()) return res;

  std::vector<int> idx(rects.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (order == SelectOrder::DecreasingMeasure)
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return sp.cells(rects[a]) > sp.cells(rects[b]); });

  res.first_pass = detail::greedy_quarter(sp, rects, idx);
  std::vector<int> rev(res.first_pass.rbegin(), res.first_pass.rend());
  res.selected = detail::greedy_quarter(sp, rects, rev);

  CellSet E(n1, n2);
  for (const Rect& r : rects) sp.for_each_cell(r, [&](int i, int j) { E.at(i, j) = 1; });
  res.E = E.count() * cm;
  for (int s : res.selected)
    sp.for_each_cell(rects[s], [&](int i, int j) { ++res.multiplicity[static_cast<std::size_t>(i) * n2 + j]; });
  const int mmax = *std::max_element(res.multiplicity.begin(), res.multiplicity.end());
  res.overlap_hist.assign(mmax + 1, 0.0);
  for (int m : res.multiplicity)
    for (int n = 0; n <= m; ++n) res.overlap_hist[n] += cm;
  res.overlap_hist[0] = n1 * n2 * cm;
  res.E_tilde = res.overlap_hist.size() > 1 ? res.overlap_hist[1] : 0.0;
  res.recovery_ratio = res.E / res.E_tilde;
  for (int s : res.selected) {
    long others = 0, priv = 0;
    sp.for_each_cell(rects[s], [&](int i, int j) {
      if (res.multiplicity[static_cast<std::size_t>(i) * n2 + j] > 1) ++others;
      else ++priv;
    });
    const double c = static_cast<double>(sp.cells(rects[s]));
    res.max_overlap_fraction = std::max(res.max_overlap_fraction, others / c);
    res.sum_measures += c * cm;
    res.sum_private += priv * cm;
  }
  return res;
}

struct OverlapFit {
  double exponent = INFINITY;  // -slope of log2(hist(n) / |E|) in n
  double C = 0;                // max_n hist(n) 2^{n/2} / |E|
  int points = 0;
};

// Least squares over n >= 1 with hist(n) > 0; fewer than two points leaves the
// exponent infinite (nothing overlaps).
inline OverlapFit fit_overlap_decay(const SelectionResult& s) {
  OverlapFit f;
  std::vector<double> xs, ys;
  for (std::size_t n = 1; n < s.overlap_hist.size(); ++n)
    if (s.overlap_hist[n] > 0) {
      xs.push_back(static_cast<double>(n));
      ys.push_back(std::log2(s.overlap_hist[n] / s.E));
      f.C = std::max(f.C, s.overlap_hist[n] * std::pow(2.0, n / 2.0) / s.E);
    }
  f.points = static_cast<int>(xs.size());
  if (xs.size() >= 2) {
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    f.exponent = -sxy / sxx;
  }
  return f;
}

struct ExpNorm {
  double modular = 0;     // int Psi(sum chi / lambda)
  double luxemburg = 0;   // e^L norm of sum chi
};

inline ExpNorm exp_norm_of_overlap(const RectSpace& sp, const SelectionResult& s, double lambda) {
  require(lambda > 0, ErrorCode::InvalidInput, "lambda must be positive");
  std::vector<double> vals, scaled;
  for (int m : s.multiplicity)
    if (m > 0) {
      vals.push_back(m);
      scaled.push_back(m / lambda);
    }
  const double cm = sp.grid.cell_measure();
  return {orlicz::modular_psi(scaled, cm), orlicz::norm_psi(vals, cm)};
}

// Exhaustive recount of the overlap histogram from the selected rectangles, cell by cell.
inline std::vector<double> recount_overlap(const RectSpace& sp, const std::vector<Rect>& rects,
                                           const std::vector<int>& selected) {
  std::vector<double> hist(1, sp.grid.n1() * sp.grid.n2() * sp.grid.cell_measure());
  const auto p1 = sp.grid.g1.points(), p2 = sp.grid.g2.points();
  for (int i = 0; i < sp.grid.n1(); ++i)
    for (int j = 0; j < sp.grid.n2(); ++j) {
      int m = 0;
      for (int s : selected) {
        const auto& a = sp.s1.cube(rects[s].q1).members;
        const auto& b = sp.s2.cube(rects[s].q2).members;
        if (std::find(a.begin(), a.end(), i) != a.end() && std::find(b.begin(), b.end(), j) != b.end()) ++m;
      }
      if (static_cast<int>(hist.size()) <= m) hist.resize(m + 1, 0.0);
      for (int n = 1; n <= m; ++n) hist[n] += sp.grid.cell_measure();
    }
  return hist;
}

// Random dyadic rectangles with k1 + k2 uniform in [min_sum, max_sum], so areas sit
// between 2^-max_sum and 2^-min_sum, and each side at least min_level deep.
struct FamilyParams {
  int min_sum = 7, max_sum = 12;
  int min_level = 1;
};

inline std::vector<Rect> random_dyadic_family(const RectSpace& sp, int count, std::uint64_t seed,
                                              FamilyParams fp = {}) {
  require(count >= 0, ErrorCode::InvalidInput, "negative family size");
  const int c1 = sp.s1.coarsest_level(), f1 = sp.s1.finest_level();
  const int c2 = sp.s2.coarsest_level(), f2 = sp.s2.finest_level();
  const int lo1 = std::max(c1, fp.min_level), lo2 = std::max(c2, fp.min_level);
  require(fp.min_sum <= fp.max_sum && fp.min_sum >= lo1 + lo2 && fp.max_sum <= f1 + f2,
          ErrorCode::InvalidParams, "family level range does not fit the systems");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> S(fp.min_sum, fp.max_sum);
  std::vector<Rect> out;
  for (int c = 0; c < count; ++c) {
    const int s = S(rng);
    const int k1 = std::uniform_int_distribution<int>(std::max(lo1, s - f2), std::min(f1, s - lo2))(rng);
    const auto& l1 = sp.s1.level(k1);
    const auto& l2 = sp.s2.level(s - k1);
    const int a = l1[std::uniform_int_distribution<int>(0, static_cast<int>(l1.size()) - 1)(rng)];
    const int b = l2[std::uniform_int_distribution<int>(0, static_cast<int>(l2.size()) - 1)(rng)];
    out.push_back({a, b});
  }
  return out;
}

// ---- maximal rectangles ---------------------------------------------------------

namespace detail {

// first ancestor that is a strictly larger set, or -1
inline int strict_parent(const CubeSystem& s, int q) {
  const std::size_t n = s.cube(q).members.size();
  int p = s.cube(q).parent;
  while (p >= 0 && s.cube(p).members.size() == n) p = s.cube(p).parent;
  return p;
}

// coarsest id carrying the same set
inline bool canonical(const CubeSystem& s, int q) {
  const int p = s.cube(q).parent;
  return p < 0 || s.cube(p).members.size() > s.cube(q).members.size();
}

}  // namespace detail

// full(q1, q2) = (Q1 x Q2 ⊆ U) for every pair of cubes.
class ContainmentTable {
 public:
  ContainmentTable(const RectSpace& sp, const CellSet& U) : n2_(sp.s2.cubes().size()) {
    const int N2 = sp.grid.n2();
    full_.assign(sp.s1.cubes().size() * n2_, 0);
    rowcount_.assign(sp.s1.cubes().size(), std::vector<int>(N2, 0));
    for (const auto& q1 : sp.s1.cubes()) {
      auto& cnt = rowcount_[q1.id];
      for (int i : q1.members)
        for (int j = 0; j < N2; ++j) cnt[j] += U.at(i, j);
      const int need = static_cast<int>(q1.members.size());
      for (const auto& q2 : sp.s2.cubes()) {
        bool all = true;
        for (int j : q2.members)
          if (cnt[j] != need) {
            all = false;
            break;
          }
        full_[q1.id * n2_ + q2.id] = all;
      }
    }
  }
  bool full(int q1, int q2) const { return full_[q1 * n2_ + q2]; }
  // |(Q1 x Q2) ∩ U| in cells
  long hits(const RectSpace& sp, int q1, int q2) const {
    long h = 0;
    for (int j : sp.s2.cube(q2).members) h += rowcount_[q1][j];
    return h;
  }

 private:
  std::size_t n2_;
  std::vector<std::uint8_t> full_;
  std::vector<std::vector<int>> rowcount_;
};

enum class MaximalKind { Both, Direction1, Direction2 };

// M(U) for Both; M_i(U) = rectangles in U whose i-th side cannot grow inside U.
inline std::vector<Rect> maximal_rectangles(const RectSpace& sp, const CellSet& U,
                                            MaximalKind kind = MaximalKind::Both,
                                            const ContainmentTable* table = nullptr) {
  std::unique_ptr<ContainmentTable> own;
  if (!table) {
    own = std::make_unique<ContainmentTable>(sp, U);
    table = own.get();
  }
  std::vector<Rect> out;
  for (const auto& a : sp.s1.cubes()) {
    if (!detail::canonical(sp.s1, a.id)) continue;
    const int p1 = detail::strict_parent(sp.s1, a.id);
    for (const auto& b : sp.s2.cubes()) {
      if (!detail::canonical(sp.s2, b.id) || !table->full(a.id, b.id)) continue;
      const int p2 = detail::strict_parent(sp.s2, b.id);
      const bool max1 = p1 < 0 || !table->full(p1, b.id);
      const bool max2 = p2 < 0 || !table->full(a.id, p2);
      const bool keep = kind == MaximalKind::Both ? (max1 && max2) : kind == MaximalKind::Direction1 ? max1 : max2;
      if (keep) out.push_back({a.id, b.id});
    }
  }
  return out;
}

// Union of rectangles as a cell set.
inline CellSet union_of(const RectSpace& sp, const std::vector<Rect>& rects) {
  CellSet c(sp.grid.n1(), sp.grid.n2());
  for (const Rect& r : rects) sp.for_each_cell(r, [&](int i, int j) { c.at(i, j) = 1; });
  return c;
}

// ---- enlargements -----------------------------------------------------------------

namespace detail {

// cells g of the factor with z delta_{1/beta}(z^{-1} g) in Q
inline std::vector<int> enlarge_factor(const CubeSystem& s, const Grid& g, int q, double beta) {
  const Cube& Q = s.cube(q);
  const GroupModel& m = g.model();
  const auto pts = g.points();
  std::vector<std::uint8_t> member(pts.size(), 0);
  for (int i : Q.members) member[i] = 1;
  std::vector<int> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const GroupPoint back = m.multiply(Q.center, m.dilate(m.left_difference(Q.center, pts[i]), 1 / beta));
    const long c = g.locate(back);
    if (c >= 0 && member[c]) out.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace detail

// beta R, centre-fixed dilation in each factor, as a cell set clipped to the grid.
inline CellSet enlarge(const RectSpace& sp, const Rect& r, double beta) {
  require(beta > 0 && std::isfinite(beta), ErrorCode::InvalidInput, "beta must be positive");
  CellSet c(sp.grid.n1(), sp.grid.n2());
  const auto a = detail::enlarge_factor(sp.s1, sp.grid.g1, r.q1, beta);
  const auto b = detail::enlarge_factor(sp.s2, sp.grid.g2, r.q2, beta);
  for (int i : a)
    for (int j : b) c.at(i, j) = 1;
  return c;
}

// ---- Journe quantities -------------------------------------------------------------

struct JourneEntry {
  Rect R;
  int direction = 1;   // R in M_direction(U)
  int extended = -1;   // cube id of the extension, in the other factor
  double gamma = 1;
  bool saturated = false;  // extension reached the coarsest built level
};

struct JourneReport {
  std::vector<JourneEntry> entries;
  double sum1 = 0, sum2 = 0;  // sum over M_1 (resp. M_2) of |R| gamma^{-delta}
  double U_measure = 0;
  double ratio1() const { return sum1 / U_measure; }
  double ratio2() const { return sum2 / U_measure; }
};

// For R = Q1 x Q2 in M_1(U) the second side is extended to the biggest Q~2 ⊇ Q2 with
// |(Q1 x Q~2) ∩ U| > |Q1 x Q~2| / 2, and gamma = l(Q~2) / l(Q2); symmetrically for M_2.
inline JourneReport journe_gamma(const RectSpace& sp, const CellSet& U, double delta) {
  require(delta > 0, ErrorCode::InvalidInput, "delta must be positive");
  const ContainmentTable T(sp, U);
  JourneReport rep;
  rep.U_measure = U.count() * sp.grid.cell_measure();
  for (int dir : {1, 2}) {
    const auto rects = maximal_rectangles(sp, U, dir == 1 ? MaximalKind::Direction1 : MaximalKind::Direction2, &T);
    const CubeSystem& ext = dir == 1 ? sp.s2 : sp.s1;
    for (const Rect& r : rects) {
      JourneEntry e{r, dir, dir == 1 ? r.q2 : r.q1, 1.0, false};
      const int base = e.extended;
      for (int a = base; a >= 0; a = ext.cube(a).parent) {
        const Rect t = dir == 1 ? Rect{r.q1, a} : Rect{a, r.q2};
        if (2 * T.hits(sp, t.q1, t.q2) > sp.cells(t)) e.extended = a;
      }
      e.gamma = ext.side(ext.cube(e.extended).level) / ext.side(ext.cube(base).level);
      e.saturated = ext.cube(e.extended).level == ext.coarsest_level();
      const double w = sp.measure(r) * std::pow(e.gamma, -delta);
      (dir == 1 ? rep.sum1 : rep.sum2) += w;
      rep.entries.push_back(e);
    }
  }
  return rep;
}

// U = union of k boxes [0, a_s) x [0, b_s) with a increasing and b decreasing.
inline CellSet random_staircase(const RectSpace& sp, int steps, std::uint64_t seed) {
  require(steps >= 1, ErrorCode::InvalidInput, "staircase needs a step");
  const int n1 = sp.grid.n1(), n2 = sp.grid.n2();
  require(steps < std::min(n1, n2), ErrorCode::InvalidInput, "too many steps for the grid");
  std::mt19937_64 rng(seed);
  auto cuts = [&](int n) {
    std::vector<int> all(n - 1);
    std::iota(all.begin(), all.end(), 1);
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<int> c(all.begin(), all.begin() + steps);
    std::sort(c.begin(), c.end());
    return c;
  };
  const auto a = cuts(n1);
  auto b = cuts(n2);
  std::reverse(b.begin(), b.end());
  CellSet U(n1, n2);
  for (int s = 0; s < steps; ++s)
    for (int i = 0; i < a[s]; ++i)
      for (int j = 0; j < b[s]; ++j) U.at(i, j) = 1;
  return U;
}

// ---- comparison with the strong maximal function ------------------------------------

struct CompareResult {
  bool hypothesis = false;  // |R ∩ U| >= alpha |R|
  bool holds = true;        // hypothesis => R ⊆ {M_s chi_U > C(G) alpha}
  double min_on_R = 0;      // min of M_s chi_U over R
  double threshold = 0;     // C(G) alpha
};

inline CompareResult compare_rect_to_maximal(const RectSpace& sp, const Rect& r, const CellSet& U,
                                             double alpha, const Mat& Ms_chiU) {
  require(alpha > 0 && alpha < 1, ErrorCode::InvalidInput, "alpha must lie in (0, 1)");
  CompareResult c;
  long hit = 0;
  c.min_on_R = INFINITY;
  sp.for_each_cell(r, [&](int i, int j) {
    hit += U.at(i, j);
    c.min_on_R = std::min(c.min_on_R, Ms_chiU(i, j));
  });
  c.threshold = sp.geometric_constant() * alpha;
  c.hypothesis = hit >= alpha * sp.cells(r);
  c.holds = !c.hypothesis || c.min_on_R > c.threshold;
  return c;
}

inline CompareResult compare_rect_to_maximal(const RectSpace& sp, const Rect& r, const CellSet& U, double alpha) {
  const ProductFunction chi(sp.grid, U.indicator());
  return compare_rect_to_maximal(sp, r, U, alpha, strong_maximal(chi).v);
}

}  // namespace hyperweak
