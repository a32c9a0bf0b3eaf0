#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <vector>

#include "hyperweak/covering.hpp"
#include "hyperweak/cubes.hpp"
#include "hyperweak/error.hpp"
#include "hyperweak/kernels.hpp"
#include "hyperweak/operators.hpp"
#include "hyperweak/orlicz.hpp"
#include "hyperweak/product.hpp"

namespace hyperweak {

struct AtomParams {
  int k_min = -3, k_max = 5;
  double alpha_factor = 0.4;  // alpha = alpha_factor * C(G)
  double eta = 1.0;           // aperture of S_q
  int per_octave = 8;         // t nodes per dyadic shell
  int tent_coarsest = 0;      // coarsest cube level carrying tents
  double t_min = 0;           // 0 -> spacing / 4
  double max_calderon = 0.02;
};

// Input grid with dyadic systems, the padded output grid, and the tent t-nodes.
struct AtomLayout {
  RectSpace space;
  ProductGrid out;
  int pad1 = 0, pad2 = 0;
  TGrid t1, t2;
  std::vector<int> lev1, lev2;  // cube level whose tents hold each node
  int tent1 = 0, tent2 = 0;     // coarsest tent level per factor
  int fine1 = 0, fine2 = 0;
  double C = 0.5, c = 0.5;
};

namespace detail {

inline int dyadic_exponent(const Grid& g) {
  require(g.model().is_abelian() && g.model().dim() == 1, ErrorCode::UnsupportedModel,
          "the atomic decomposition runs on Abelian(1) factors");
  const double m = -std::log2(g.spacing(0));
  require(std::abs(m - std::round(m)) < 1e-9, ErrorCode::InvalidParams,
          "grid spacing must be a power of two");
  return static_cast<int>(std::lround(m));
}

// nodes 4 C l 2^{(m + 1/2)/P} in each shell of levels tent..fine, then finer shells
// (labelled fine) down to t_min
inline void tent_nodes(double C, int tent, int fine, int P, double t_min, TGrid& tg, std::vector<int>& lev) {
  std::vector<std::pair<double, int>> nodes;
  for (int j = tent;; ++j) {
    const double base = 4 * C * std::exp2(-j);
    if (j > fine && 2 * base <= t_min) break;
    for (int m = 0; m < P; ++m) {
      const double t = base * std::exp2((m + 0.5) / P);
      if (j > fine && t < t_min) continue;
      nodes.push_back({t, std::min(j, fine)});
    }
  }
  std::sort(nodes.begin(), nodes.end());
  tg.t.clear();
  lev.clear();
  for (auto& [t, j] : nodes) tg.t.push_back(t), lev.push_back(j);
  tg.dlog = std::numbers::ln2 / P;
}

inline Grid padded(const Grid& g, int pad) {
  const double h = g.spacing(0);
  return Grid(g.model(), {g.lo()[0] - pad * h}, {g.hi()[0] + pad * h}, {static_cast<int>(g.size()) + 2 * pad});
}

inline std::pair<int, int> cell_range(const Cube& q) { return {q.members.front(), q.members.back() + 1}; }

}  // namespace detail

inline AtomLayout atom_layout(const ProductGrid& g, const AtomParams& p) {
  require(p.per_octave >= 1, ErrorCode::InvalidParams, "per_octave must be >= 1");
  const int m1 = detail::dyadic_exponent(g.g1), m2 = detail::dyadic_exponent(g.g2);
  auto coarsest = [](const Grid& x) {
    return -static_cast<int>(std::ceil(std::log2(x.hi()[0] - x.lo()[0]) - 1e-12));
  };
  const int c1 = coarsest(g.g1), c2 = coarsest(g.g2);
  const auto p1 = default_cube_params(g.g1.model(), c1, m1);
  const auto p2 = default_cube_params(g.g2.model(), c2, m2);
  AtomLayout L;
  L.space = RectSpace(g, build_dyadic_system(g.g1, p1, 0, 0), build_dyadic_system(g.g2, p2, 0, 1));
  L.fine1 = m1;
  L.fine2 = m2;
  L.C = p1.C;
  L.c = p1.c;
  L.tent1 = std::clamp(p.tent_coarsest, c1, m1);
  L.tent2 = std::clamp(p.tent_coarsest, c2, m2);
  const double h1 = g.g1.spacing(0), h2 = g.g2.spacing(0);
  detail::tent_nodes(L.C, L.tent1, m1, p.per_octave, p.t_min > 0 ? p.t_min : h1 / 4, L.t1, L.lev1);
  detail::tent_nodes(L.C, L.tent2, m2, p.per_octave, p.t_min > 0 ? p.t_min : h2 / 4, L.t2, L.lev2);
  // phi_t lives in |x| < t
  L.pad1 = static_cast<int>(std::ceil(L.t1.t.back() / h1)) + 1;
  L.pad2 = static_cast<int>(std::ceil(L.t2.t.back() / h2)) + 1;
  L.out = ProductGrid(detail::padded(g.g1, L.pad1), detail::padded(g.g2, L.pad2));
  return L;
}

// ---- level sets ----------------------------------------------------------------

struct LevelSets {
  int k = 0;
  double alpha = 0;
  CellSet U, Ustar, Ustar2, Ustar3;  // input grid
  CellSet Udagger;                   // output grid
  std::vector<Rect> maximal;         // M(U*_k)
};

namespace detail {

inline CellSet threshold(const Mat& v, double level) {
  CellSet c(static_cast<int>(v.rows()), static_cast<int>(v.cols()));
  for (int i = 0; i < v.rows(); ++i)
    for (int j = 0; j < v.cols(); ++j) c.at(i, j) = v(i, j) > level;
  return c;
}

// {M_s chi_U > alpha}: g is flagged when some product of balls containing g has
// U-density above alpha. On Abelian(1) factors every ball is a clipped interval
// [h - w, h + w]; integer prefix counts for U and for the dense centres.
inline CellSet maximal_superlevel(const CellSet& U, double alpha) {
  if (U.count() == 0) return U;
  const int n1 = U.n1, n2 = U.n2;
  using Counts = std::vector<long>;
  auto prefix = [&](auto value) {
    Counts P(static_cast<std::size_t>(n1 + 1) * (n2 + 1), 0);
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < n2; ++j)
        P[(i + 1) * (n2 + 1) + j + 1] = value(i, j) + P[i * (n2 + 1) + j + 1] + P[(i + 1) * (n2 + 1) + j] - P[i * (n2 + 1) + j];
    return P;
  };
  auto box = [&](const Counts& P, int a1, int b1, int a2, int b2) {
    return P[b1 * (n2 + 1) + b2] - P[a1 * (n2 + 1) + b2] - P[b1 * (n2 + 1) + a2] + P[a1 * (n2 + 1) + a2];
  };
  const Counts PU = prefix([&](int i, int j) { return static_cast<long>(U.at(i, j)); });
  CellSet out(n1, n2), dense(n1, n2);
  long flagged = 0;
  const long total = static_cast<long>(n1) * n2;
  for (int w1 = 0; w1 < n1 && flagged < total; ++w1)
    for (int w2 = 0; w2 < n2 && flagged < total; ++w2) {
      bool any = false;
      for (int i = 0; i < n1; ++i) {
        const int a1 = std::max(0, i - w1), b1 = std::min(n1, i + w1 + 1);
        for (int j = 0; j < n2; ++j) {
          const int a2 = std::max(0, j - w2), b2 = std::min(n2, j + w2 + 1);
          const bool d = box(PU, a1, b1, a2, b2) > alpha * (b1 - a1) * (b2 - a2);
          dense.at(i, j) = d;
          any = any || d;
        }
      }
      if (!any) continue;
      const Counts PD = prefix([&](int i, int j) { return static_cast<long>(dense.at(i, j)); });
      for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
          if (!out.at(i, j) && box(PD, std::max(0, i - w1), std::min(n1, i + w1 + 1), std::max(0, j - w2),
                                   std::min(n2, j + w2 + 1)) > 0) {
            out.at(i, j) = 1;
            ++flagged;
          }
    }
  return out;
}

// out-grid cells whose centres lie in beta Q (centre-fixed, Q a grid-aligned interval)
inline std::pair<int, int> dilate_on(const Grid& in, const Grid& out, const Cube& q, double beta) {
  const auto [a, b] = cell_range(q);
  const double h = in.spacing(0);
  const double lo = in.lo()[0] + a * h, hi = in.lo()[0] + b * h, z = 0.5 * (lo + hi);
  const double L = z - beta * (z - lo), R = z + beta * (hi - z);
  const int n = static_cast<int>(out.size());
  int first = n, last = 0;
  for (int i = 0; i < n; ++i) {
    const double x = out.coord(0, i);
    if (x >= L && x < R) first = std::min(first, i), last = i + 1;
  }
  return {first, std::max(first, last)};
}

inline void paint(CellSet& c, std::pair<int, int> r1, std::pair<int, int> r2) {
  for (int i = r1.first; i < r1.second; ++i)
    for (int j = r2.first; j < r2.second; ++j) c.at(i, j) = 1;
}

}  // namespace detail

inline double dagger_beta(const AtomLayout& L) { return 30 * L.C / L.c; }

// U_k~ on the output grid
inline CellSet dagger_set(const AtomLayout& L, const std::vector<Rect>& M, double beta) {
  CellSet c(L.out.n1(), L.out.n2());
  for (const Rect& r : M)
    detail::paint(c, detail::dilate_on(L.space.grid.g1, L.out.g1, L.space.s1.cube(r.q1), beta),
                  detail::dilate_on(L.space.grid.g2, L.out.g2, L.space.s2.cube(r.q2), beta));
  return c;
}

inline Mat area_q(const ProductFunction& f, const AtomLayout& L, double eta) {
  const KernelFamily q = conj_poisson_kernel(f.grid.g1.model());
  return detail::cone_energy(f.v, q, q, f.grid, ConeOptions{eta, L.t1, L.t2}).cwiseSqrt();
}

namespace detail {

inline void check_alpha(const AtomLayout& L, const AtomParams& p) {
  const double CG = L.space.geometric_constant();
  require(p.alpha_factor > 0 && p.alpha_factor * CG < CG / 2, ErrorCode::InvalidParams,
          "alpha must lie in (0, C(G)/2)");
  require(p.k_min <= p.k_max, ErrorCode::InvalidParams, "empty k range");
}

inline LevelSets base_sets(const Mat& S, int k, double alpha) {
  LevelSets ls;
  ls.k = k;
  ls.alpha = alpha;
  ls.U = threshold(S, std::exp2(k));
  ls.Ustar = maximal_superlevel(ls.U, alpha);
  return ls;
}

inline void finish_sets(const AtomLayout& L, LevelSets& ls) {
  ls.Ustar2 = maximal_superlevel(ls.Ustar, ls.alpha);
  ls.Ustar3 = maximal_superlevel(ls.Ustar2, ls.alpha);
  ls.maximal = maximal_rectangles(L.space, ls.Ustar);
  ls.Udagger = dagger_set(L, ls.maximal, dagger_beta(L));
}

}  // namespace detail

inline std::vector<LevelSets> level_sets(const ProductFunction& f, const AtomParams& p) {
  const AtomLayout L = atom_layout(f.grid, p);
  detail::check_alpha(L, p);
  const Mat S = area_q(f, L, p.eta);
  const double alpha = p.alpha_factor * L.space.geometric_constant();
  std::vector<LevelSets> out;
  for (int k = p.k_min; k <= p.k_max; ++k) {
    out.push_back(detail::base_sets(S, k, alpha));
    detail::finish_sets(L, out.back());
  }
  return out;
}

// ---- decomposition ----------------------------------------------------------------

struct SubAtom {
  Rect S;
  int r0 = 0, c0 = 0;  // window offset on the output grid
  Mat w;               // empty when no tent reaches S
  double l2 = 0, l1 = 0;
  long support = 0;
  double cancel1 = 0, cancel2 = 0;  // ||int a dg_i|| / ||a||_1
  long tents = 0;                   // rectangles R with R~ = S
};

struct AtomLevel {
  int k = 0;
  LevelSets sets;
  std::vector<SubAtom> atoms;  // aligned with sets.maximal
  Mat a;                       // output grid
  long tents = 0;              // |B_k| over the tent levels
  long patched = 0;            // rectangles of B_k that were not inside U*_k
  long support_violations = 0;
  double energy = 0;           // sum ||a_{k,R}||^2
  double norm2 = 0;            // ||a_k||^2
  double F_down = 0;           // F_Phi(2^{-k} f)
  double F_up = 0;             // F_Phi(2^k f)
  double dagger_measure = 0;
  double energy_ratio() const { return F_down > 0 ? energy / (std::exp2(2 * k) * F_down) : 0; }
  double norm_ratio() const { return F_down > 0 ? norm2 / (std::exp2(2 * k) * F_down) : 0; }
  double theorem_ratio() const { return F_up > 0 ? norm2 / F_up : 0; }
  double dagger_ratio() const { return F_down > 0 ? dagger_measure / F_down : 0; }
};

struct AtomicDecomposition {
  AtomParams params;
  AtomLayout layout;
  ProductFunction f;
  Mat f_out;
  Mat S;  // S_q f on the input grid
  std::vector<AtomLevel> levels;
  Mat below, above;  // tents of classes k < k_min and k > k_max
  double calderon_residual = 0;  // everything vs f
  double range_residual = 0;     // sum over the k range vs f
  double max_cancel = 0;
  long support_violations = 0;
  const AtomLevel* level(int k) const {
    for (const auto& l : levels)
      if (l.k == k) return &l;
    return nullptr;
  }
  Mat sum_range() const {
    Mat s = Mat::Zero(f_out.rows(), f_out.cols());
    for (const auto& l : levels) s += l.a;
    return s;
  }
};

namespace detail {

inline Mat embed(const Mat& v, int pad1, int pad2) {
  Mat o = Mat::Zero(v.rows() + 2 * pad1, v.cols() + 2 * pad2);
  o.block(pad1, pad2, v.rows(), v.cols()) = v;
  return o;
}

inline double fphi(const Mat& v, double scale, double cell) {
  std::vector<double> x(v.data(), v.data() + v.size());
  for (double& y : x) y *= scale;
  return orlicz::modular_phi(x, cell);
}

// canonical id: coarsest ancestor carrying the same cells
inline int canonical_id(const CubeSystem& s, int q) {
  while (!canonical(s, q)) q = s.cube(q).parent;
  return q;
}

// grow Q1 then Q2 inside the table's set
inline Rect grow(const RectSpace& sp, const ContainmentTable& T, Rect r) {
  for (int p = strict_parent(sp.s1, r.q1); p >= 0 && T.full(p, r.q2); p = strict_parent(sp.s1, p)) r.q1 = p;
  for (int p = strict_parent(sp.s2, r.q2); p >= 0 && T.full(r.q1, p); p = strict_parent(sp.s2, p)) r.q2 = p;
  return {canonical_id(sp.s1, r.q1), canonical_id(sp.s2, r.q2)};
}

// label of a tent rectangle: level index and sub-atom, or -1 below / -2 above the range
struct TentLabel {
  int level = -1, sub = -1;
};

inline int support_halfwidth(double t, double h) { return static_cast<int>(std::floor(t / h + 0.5)) + 1; }

}  // namespace detail

inline AtomicDecomposition decompose(const ProductFunction& f, const AtomParams& p) {
  AtomicDecomposition D;
  D.params = p;
  D.layout = atom_layout(f.grid, p);
  const AtomLayout& L = D.layout;
  const RectSpace& sp = L.space;
  detail::check_alpha(L, p);
  D.f = f;
  D.f_out = detail::embed(f.v, L.pad1, L.pad2);
  D.S = area_q(f, L, p.eta);
  const double alpha = p.alpha_factor * sp.geometric_constant();
  const double cell = f.grid.cell_measure();
  const int nk = p.k_max - p.k_min + 1;

  // U_k for k_min..k_max+1 and the hit tables
  std::vector<LevelSets> sets;
  std::vector<ContainmentTable> hits;
  for (int k = p.k_min; k <= p.k_max + 1; ++k) {
    sets.push_back(detail::base_sets(D.S, k, alpha));
    hits.emplace_back(sp, sets.back().U);
  }

  // class of every tent rectangle
  struct PairTable {
    int j1, j2;
    std::vector<int> k;  // class index in 0..nk-1, -1 below, -2 above
  };
  std::vector<PairTable> pairs;
  auto pair_index = [&](int j1, int j2) { return (j1 - L.tent1) * (L.fine2 - L.tent2 + 1) + (j2 - L.tent2); };
  for (int j1 = L.tent1; j1 <= L.fine1; ++j1)
    for (int j2 = L.tent2; j2 <= L.fine2; ++j2) {
      PairTable pt{j1, j2, {}};
      for (int q1 : sp.s1.level(j1))
        for (int q2 : sp.s2.level(j2)) {
          const long cells = sp.cells({q1, q2});
          int cls = -1;
          for (int i = 0; i <= nk; ++i)
            if (2 * hits[i].hits(sp, q1, q2) >= cells) cls = i;
          pt.k.push_back(cls == nk ? -2 : cls);
        }
      pairs.push_back(std::move(pt));
    }

  // B_k ⊆ U*_k, patched where the discrete lemma misses
  D.levels.resize(nk);
  for (int i = 0; i < nk; ++i) {
    D.levels[i].k = p.k_min + i;
    D.levels[i].sets = std::move(sets[i]);
  }
  for (const auto& pt : pairs) {
    std::size_t idx = 0;
    for (int q1 : sp.s1.level(pt.j1))
      for (int q2 : sp.s2.level(pt.j2)) {
        const int cls = pt.k[idx++];
        if (cls < 0) continue;
        AtomLevel& lv = D.levels[cls];
        ++lv.tents;
        bool inside = true;
        sp.for_each_cell({q1, q2}, [&](int a, int b) { inside = inside && lv.sets.Ustar.at(a, b); });
        if (!inside) {
          ++lv.patched;
          sp.for_each_cell({q1, q2}, [&](int a, int b) { lv.sets.Ustar.at(a, b) = 1; });
        }
      }
  }

  // M(U*_k), enlargements, and R -> R~
  std::vector<std::vector<detail::TentLabel>> labels(pairs.size());
  for (int i = 0; i < nk; ++i) {
    AtomLevel& lv = D.levels[i];
    detail::finish_sets(L, lv.sets);
    lv.dagger_measure = lv.sets.Udagger.count() * L.out.cell_measure();
    lv.F_down = detail::fphi(f.v, std::exp2(-lv.k), cell);
    lv.F_up = detail::fphi(f.v, std::exp2(lv.k), cell);
    for (const Rect& r : lv.sets.maximal) {
      SubAtom sa;
      sa.S = r;
      lv.atoms.push_back(std::move(sa));
    }
  }
  for (int i = 0; i < nk; ++i) {
    AtomLevel& lv = D.levels[i];
    if (lv.tents == 0) continue;
    const ContainmentTable T(sp, lv.sets.Ustar);
    std::map<std::pair<int, int>, int> index;
    for (std::size_t s = 0; s < lv.atoms.size(); ++s) index[{lv.atoms[s].S.q1, lv.atoms[s].S.q2}] = static_cast<int>(s);
    for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
      const auto& pt = pairs[pi];
      auto& lab = labels[pi];
      if (lab.empty()) lab.assign(pt.k.size(), {});
      std::size_t idx = 0;
      for (int q1 : sp.s1.level(pt.j1))
        for (int q2 : sp.s2.level(pt.j2)) {
          const int cls = pt.k[idx];
          if (cls == i) {
            const Rect S = detail::grow(sp, T, {q1, q2});
            auto it = index.find({S.q1, S.q2});
            require(it != index.end(), ErrorCode::ConstructionFailure, "grown rectangle is not maximal");
            lab[idx] = {i, it->second};
            ++lv.atoms[it->second].tents;
          } else if (cls < 0) {
            lab[idx] = {cls, -1};
          }
          ++idx;
        }
    }
  }
  for (std::size_t pi = 0; pi < pairs.size(); ++pi)
    if (labels[pi].empty()) {
      labels[pi].resize(pairs[pi].k.size());
      for (std::size_t idx = 0; idx < pairs[pi].k.size(); ++idx) labels[pi][idx] = {pairs[pi].k[idx], -1};
    }

  // windows: S padded by the widest phi support of its tents
  const double h1 = f.grid.g1.spacing(0), h2 = f.grid.g2.spacing(0);
  for (auto& lv : D.levels)
    for (auto& sa : lv.atoms) {
      if (sa.tents == 0) continue;
      const Cube& Q1 = sp.s1.cube(sa.S.q1);
      const Cube& Q2 = sp.s2.cube(sa.S.q2);
      const double tmax1 = 8 * L.C * std::exp2(-std::max(Q1.level, L.tent1));
      const double tmax2 = 8 * L.C * std::exp2(-std::max(Q2.level, L.tent2));
      const int w1 = detail::support_halfwidth(tmax1, h1), w2 = detail::support_halfwidth(tmax2, h2);
      const auto [a1, b1] = detail::cell_range(Q1);
      const auto [a2, b2] = detail::cell_range(Q2);
      sa.r0 = std::max(0, a1 + L.pad1 - w1);
      sa.c0 = std::max(0, a2 + L.pad2 - w2);
      const int r1 = std::min(L.out.n1(), b1 + L.pad1 + w1), c1 = std::min(L.out.n2(), b2 + L.pad2 + w2);
      sa.w = Mat::Zero(r1 - sa.r0, c1 - sa.c0);
    }
  D.below = Mat::Zero(L.out.n1(), L.out.n2());
  D.above = Mat::Zero(L.out.n1(), L.out.n2());

  // tent integrals, one t-pair at a time
  const KernelFamily q = conj_poisson_kernel(f.grid.g1.model());
  const KernelFamily phi = reproducing_partner(f.grid.g1.model());
  std::vector<Mat> Q1s, Q2s, P1s, P2s;
  for (double t : L.t1.t) Q1s.push_back(kernel_matrix(q, t, f.grid.g1, f.grid.g1)), P1s.push_back(kernel_matrix(phi, t, f.grid.g1, L.out.g1));
  for (double t : L.t2.t) Q2s.push_back(kernel_matrix(q, t, f.grid.g2, f.grid.g2)), P2s.push_back(kernel_matrix(phi, t, f.grid.g2, L.out.g2));
  const double wt = L.t1.dlog * L.t2.dlog;
  for (std::size_t a = 0; a < L.t1.size(); ++a) {
    const Mat G = Q1s[a] * f.v;
    const int j1 = L.lev1[a];
    const int w1 = detail::support_halfwidth(L.t1.t[a], h1);
    for (std::size_t b = 0; b < L.t2.size(); ++b) {
      const Mat F = wt * (G * Q2s[b].transpose());
      const int j2 = L.lev2[b];
      const int w2 = detail::support_halfwidth(L.t2.t[b], h2);
      const std::size_t pi = pair_index(j1, j2);
      const auto& lab = labels[pi];
      std::size_t idx = 0;
      for (int q1 : sp.s1.level(j1)) {
        const auto [u0, u1] = detail::cell_range(sp.s1.cube(q1));
        const int o1 = std::max(0, u0 + L.pad1 - w1), e1 = std::min(L.out.n1(), u1 + L.pad1 + w1);
        const Mat left = P1s[a].block(o1, u0, e1 - o1, u1 - u0) * F.middleRows(u0, u1 - u0);
        for (int q2 : sp.s2.level(j2)) {
          const auto [v0, v1] = detail::cell_range(sp.s2.cube(q2));
          const int o2 = std::max(0, v0 + L.pad2 - w2), e2 = std::min(L.out.n2(), v1 + L.pad2 + w2);
          const detail::TentLabel tl = lab[idx++];
          Mat* target;
          int r0 = 0, c0 = 0;
          if (tl.level >= 0) {
            SubAtom& sa = D.levels[tl.level].atoms[tl.sub];
            target = &sa.w;
            r0 = sa.r0;
            c0 = sa.c0;
            require(o1 >= r0 && o2 >= c0 && e1 - r0 <= sa.w.rows() && e2 - c0 <= sa.w.cols(),
                    ErrorCode::ConstructionFailure, "tent leaves its sub-atom window");
          } else {
            target = tl.level == -1 ? &D.below : &D.above;
          }
          target->block(o1 - r0, o2 - c0, e1 - o1, e2 - o2).noalias() +=
              left.middleCols(v0, v1 - v0) * P2s[b].block(o2, v0, e2 - o2, v1 - v0).transpose();
        }
      }
    }
  }

  // assemble and check
  const double cout = L.out.cell_measure();
  for (auto& lv : D.levels) {
    lv.a = Mat::Zero(L.out.n1(), L.out.n2());
    for (auto& sa : lv.atoms) {
      if (sa.w.size() == 0) continue;
      lv.a.block(sa.r0, sa.c0, sa.w.rows(), sa.w.cols()) += sa.w;
      sa.l2 = std::sqrt(sa.w.squaredNorm() * cout);
      sa.l1 = sa.w.cwiseAbs().sum() * cout;
      sa.support = (sa.w.array() != 0).count();
      if (sa.l1 > 0) {
        sa.cancel1 = sa.w.colwise().sum().cwiseAbs().sum() * cout / sa.l1;
        sa.cancel2 = sa.w.rowwise().sum().cwiseAbs().sum() * cout / sa.l1;
      }
      D.max_cancel = std::max({D.max_cancel, sa.cancel1, sa.cancel2});
      lv.energy += sa.l2 * sa.l2;
    }
    lv.norm2 = lv.a.squaredNorm() * cout;
    for (int i = 0; i < lv.a.rows(); ++i)
      for (int j = 0; j < lv.a.cols(); ++j)
        if (lv.a(i, j) != 0 && !lv.sets.Udagger.at(i, j)) ++lv.support_violations;
    D.support_violations += lv.support_violations;
  }
  const double fn = D.f_out.norm();
  const Mat range = D.sum_range();
  D.range_residual = fn > 0 ? (D.f_out - range).norm() / fn : 0;
  D.calderon_residual = fn > 0 ? (D.f_out - range - D.below - D.above).norm() / fn : 0;
  if (D.calderon_residual > p.max_calderon)
    throw Error(ErrorCode::DecompositionQuality,
                "reproducing residual " + format_double(D.calderon_residual) + " exceeds " +
                    format_double(p.max_calderon));
  return D;
}

// k, rect_id, norms, support, cancellation
inline void write_manifest(std::ostream& os, const AtomicDecomposition& D) {
  os << "k,rect_id,q1,q2,tents,l2_norm,l1_norm,support_cells,cancel_g1,cancel_g2\n";
  for (const auto& lv : D.levels)
    for (std::size_t s = 0; s < lv.atoms.size(); ++s) {
      const SubAtom& a = lv.atoms[s];
      if (a.tents == 0) continue;
      os << lv.k << ',' << s << ',' << a.S.q1 << ',' << a.S.q2 << ',' << a.tents << ',' << format_double(a.l2)
         << ',' << format_double(a.l1) << ',' << a.support << ',' << format_double(a.cancel1) << ','
         << format_double(a.cancel2) << '\n';
    }
}

// ---- enlargements R† ----------------------------------------------------------------

struct Enlarged {
  int sub = 0;
  Rect R, tilde;
  double gamma1 = 1, gamma2 = 1;
  bool saturated = false;
  CellSet dagger;  // output grid
};

struct Section5 {
  int k = 0;
  double beta_k = 1, factor = 100;
  std::vector<Enlarged> rects;
  double union_measure = 0;
  double ratio = 0;  // |∪R†| / (2^{k/2} F_Phi(2^{-k} f))
};

inline double beta_k(const AtomLayout& L, int k) {
  return std::exp2(k / (2.0 * L.space.grid.nu1() + 2.0 * L.space.grid.nu2()));
}

// Q~1 ⊇ Q1 largest with Q~1 x Q2 in the first set, then Q~2 ⊇ Q2 largest with
// Q~1 x Q~2 in the second
inline Rect tilde_rect(const RectSpace& sp, const ContainmentTable& first, const ContainmentTable& second, Rect t) {
  for (int p = detail::strict_parent(sp.s1, t.q1); p >= 0 && first.full(p, t.q2); p = detail::strict_parent(sp.s1, p))
    t.q1 = p;
  for (int p = detail::strict_parent(sp.s2, t.q2); p >= 0 && second.full(t.q1, p); p = detail::strict_parent(sp.s2, p))
    t.q2 = p;
  return t;
}

inline Section5 section5_enlargements(const AtomicDecomposition& D, int k, double factor = 100) {
  const AtomLevel* lv = D.level(k);
  require(lv != nullptr, ErrorCode::InvalidParams, "k outside the decomposition range");
  const AtomLayout& L = D.layout;
  const RectSpace& sp = L.space;
  Section5 s5;
  s5.k = k;
  s5.factor = factor;
  s5.beta_k = beta_k(L, k);
  const ContainmentTable T2(sp, lv->sets.Ustar2), T3(sp, lv->sets.Ustar3);
  CellSet all(L.out.n1(), L.out.n2());
  for (std::size_t s = 0; s < lv->atoms.size(); ++s) {
    Enlarged e;
    e.sub = static_cast<int>(s);
    e.R = lv->atoms[s].S;
    const Rect t = tilde_rect(sp, T2, T3, e.R);
    e.tilde = t;
    e.saturated = detail::strict_parent(sp.s1, t.q1) < 0 || detail::strict_parent(sp.s2, t.q2) < 0;
    e.gamma1 = std::exp2(sp.s1.cube(e.R.q1).level - sp.s1.cube(t.q1).level);
    e.gamma2 = std::exp2(sp.s2.cube(e.R.q2).level - sp.s2.cube(t.q2).level);
    e.dagger = CellSet(L.out.n1(), L.out.n2());
    const double beta = factor * s5.beta_k;
    detail::paint(e.dagger, detail::dilate_on(sp.grid.g1, L.out.g1, sp.s1.cube(t.q1), beta),
                  detail::dilate_on(sp.grid.g2, L.out.g2, sp.s2.cube(t.q2), beta));
    for (std::size_t i = 0; i < all.in.size(); ++i) all.in[i] |= e.dagger.in[i];
    s5.rects.push_back(std::move(e));
  }
  s5.union_measure = all.count() * L.out.cell_measure();
  const double ref = std::exp2(k / 2.0) * lv->F_down;
  s5.ratio = ref > 0 ? s5.union_measure / ref : 0;
  return s5;
}

// ---- tails outside R† ---------------------------------------------------------------

enum class TailOperator { Area, Square, DoubleRiesz };

struct TailOptions {
  double factor = 100;  // R† = factor * beta_k * (Q~1 x Q~2)
  double eta = 1.0;
  int per_octave = 2;
  double epsilon = 0.25;  // exponent in the per-rectangle sanity bound
};

struct TailEntry {
  int sub = 0;
  double tail = 0, l2 = 0, measure = 0, gamma1 = 1;
  double sanity = 0;  // tail / (beta_k^-eps gamma1^-eps |R|^{1/2} ||a||_2)
};

struct TailReport {
  int k = 0;
  double total = 0;
  double max_sanity = 0;
  std::vector<TailEntry> entries;
};

inline TailReport tail_integral(const AtomicDecomposition& D, int k, TailOperator op, const TailOptions& o = {}) {
  const AtomLevel* lv = D.level(k);
  require(lv != nullptr, ErrorCode::InvalidParams, "k outside the decomposition range");
  const AtomLayout& L = D.layout;
  const ProductGrid& G = L.out;
  TailReport rep;
  rep.k = k;
  const Section5 s5 = section5_enlargements(D, k, o.factor);

  std::vector<Mat> K1, K2;
  std::vector<FactorBalls> B1, B2;
  TGrid t1, t2;
  if (op != TailOperator::DoubleRiesz) {
    t1 = operator_tgrid(G.g1, o.per_octave);
    t2 = operator_tgrid(G.g2, o.per_octave);
    const KernelFamily q = conj_poisson_kernel(G.g1.model());
    K1 = detail::kernel_stack(q, t1, G.g1);
    K2 = detail::kernel_stack(q, t2, G.g2);
    if (op == TailOperator::Area) {
      require(o.eta > 0, ErrorCode::InvalidAperture, "area tails need eta > 0");
      B1 = detail::cone_balls(G.g1, t1, o.eta);
      B2 = detail::cone_balls(G.g2, t2, o.eta);
    }
  }
  const double cell = G.cell_measure();
  for (std::size_t s = 0; s < lv->atoms.size(); ++s) {
    const SubAtom& sa = lv->atoms[s];
    if (sa.w.size() == 0) continue;
    Mat Ta;
    if (op == TailOperator::DoubleRiesz) {
      Mat full = Mat::Zero(G.n1(), G.n2());
      full.block(sa.r0, sa.c0, sa.w.rows(), sa.w.cols()) = sa.w;
      Ta = double_riesz(ProductFunction(G, full)).v.cwiseAbs();
    } else {
      Mat acc = Mat::Zero(G.n1(), G.n2());
      const double wt = t1.dlog * t2.dlog;
      for (std::size_t a = 0; a < K1.size(); ++a) {
        const Mat left = K1[a].middleCols(sa.r0, sa.w.rows()) * sa.w;
        for (std::size_t b = 0; b < K2.size(); ++b) {
          const Mat E = (left * K2[b].middleCols(sa.c0, sa.w.cols()).transpose()).cwiseAbs2();
          if (op == TailOperator::Square) acc += wt * E;
          else acc += wt * ball_average(E, B1[a], B2[b]);
        }
      }
      Ta = acc.cwiseMax(0.0).cwiseSqrt();
    }
    const CellSet& dag = s5.rects[s].dagger;
    double tail = 0;
    for (int i = 0; i < G.n1(); ++i)
      for (int j = 0; j < G.n2(); ++j)
        if (!dag.at(i, j)) tail += Ta(i, j);
    TailEntry e;
    e.sub = static_cast<int>(s);
    e.tail = tail * cell;
    e.l2 = sa.l2;
    e.measure = L.space.measure(sa.S);
    e.gamma1 = s5.rects[s].gamma1;
    const double ref = std::pow(s5.beta_k, -o.epsilon) * std::pow(e.gamma1, -o.epsilon) * std::sqrt(e.measure) * e.l2;
    e.sanity = ref > 0 ? e.tail / ref : 0;
    rep.max_sanity = std::max(rep.max_sanity, e.sanity);
    rep.total += e.tail;
    rep.entries.push_back(e);
  }
  return rep;
}

// ---- reproducing identity and good-lambda ------------------------------------------------

// sum_t w phi_t * q_t on one factor, from the grid to the grid padded by pad cells
inline Mat calderon_factor(const Grid& g, const TGrid& tg, int pad) {
  const KernelFamily q = conj_poisson_kernel(g.model());
  const KernelFamily phi = reproducing_partner(g.model());
  const Grid out = detail::padded(g, pad);
  Mat K = Mat::Zero(out.size(), g.size());
  for (double t : tg.t) K += tg.dlog * (kernel_matrix(phi, t, g, out) * kernel_matrix(q, t, g, g));
  return K;
}

struct CalderonReport {
  double residual = 0;  // ||f - sum_t phi_t * q_t * f|| / ||f|| on the padded grid
  int pad1 = 0, pad2 = 0;
};

inline CalderonReport calderon_residual(const ProductFunction& f, const TGrid& t1, const TGrid& t2) {
  detail::dyadic_exponent(f.grid.g1);
  detail::dyadic_exponent(f.grid.g2);
  CalderonReport r;
  r.pad1 = static_cast<int>(std::ceil(t1.t.back() / f.grid.g1.spacing(0))) + 1;
  r.pad2 = static_cast<int>(std::ceil(t2.t.back() / f.grid.g2.spacing(0))) + 1;
  const Mat K1 = calderon_factor(f.grid.g1, t1, r.pad1);
  const Mat K2 = calderon_factor(f.grid.g2, t2, r.pad2);
  const Mat rec = K1 * f.v * K2.transpose();
  const double fn = f.v.norm();
  r.residual = fn > 0 ? (rec - detail::embed(f.v, r.pad1, r.pad2)).norm() / fn : 0;
  return r;
}

struct GoodLambdaRow {
  double lambda = 0;
  double lhs = 0;  // |{S_grad p f > lambda}|
  double rhs = 0;  // |L^c| + lambda^-2 int_L (M_p f)^2
  double ratio = 0;
};

inline std::vector<GoodLambdaRow> good_lambda(const ProductFunction& f, const std::vector<double>& lambdas,
                                              double eta = 4, int per_octave = 4) {
  require(eta > 0, ErrorCode::InvalidAperture, "good-lambda needs eta > 0");
  const ProductFunction S = area_function_grad_poisson(f, default_cone(f.grid, 1.0, per_octave));
  const KernelFamily p1 = poisson_kernel(f.grid.g1.model()), p2 = poisson_kernel(f.grid.g2.model());
  const ProductFunction M = nontangential_maximal(f, p1, p2, default_cone(f.grid, eta, per_octave));
  const double cell = f.grid.cell_measure();
  std::vector<GoodLambdaRow> rows;
  for (double lam : lambdas) {
    GoodLambdaRow r;
    r.lambda = lam;
    double out = 0, in = 0;
    for (Eigen::Index i = 0; i < S.v.size(); ++i) {
      if (S.v.data()[i] > lam) r.lhs += cell;
      const double m = M.v.data()[i];
      if (m > lam) out += cell;
      else in += m * m * cell;
    }
    r.rhs = out + in / (lam * lam);
    r.ratio = r.rhs > 0 ? r.lhs / r.rhs : (r.lhs > 0 ? INFINITY : 0);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace hyperweak
