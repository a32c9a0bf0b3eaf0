#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "hyperweak/atoms.hpp"

using namespace hyperweak;

namespace {

ProductFunction gabor(int n, double half, double amp, double omega, double sigma) {
  const Grid g = Grid::cube(GroupModel::abelian(1), -half, half, n);
  return ProductFunction::sample(ProductGrid(g, g), [&](const GroupPoint& x, const GroupPoint& y) {
    return amp * std::exp(-(x[0] * x[0] + y[0] * y[0]) / (2 * sigma * sigma)) * std::cos(omega * x[0]) *
           std::cos(omega * y[0]);
  });
}

// Coarse grid on a wide box: U*_k stays a proper subset for the top levels.
const AtomicDecomposition& wide() {
  static const AtomicDecomposition D = [] {
    AtomParams p;
    p.max_calderon = 1;
    return decompose(gabor(64, 32, 30, 1.5, 1.5), p);
  }();
  return D;
}

bool subset(const CellSet& a, const CellSet& b) {
  for (std::size_t i = 0; i < a.in.size(); ++i)
    if (a.in[i] && !b.in[i]) return false;
  return true;
}

}  // namespace

TEST(Atoms, TentNodesFillEachShell) {
  const auto f = gabor(64, 4, 1, 6, 0.6);
  AtomParams p;
  const AtomLayout L = atom_layout(f.grid, p);
  EXPECT_EQ(L.fine1, 3);
  EXPECT_EQ(L.tent1, 0);
  ASSERT_EQ(L.t1.size(), L.lev1.size());
  std::map<int, int> per_level;
  for (std::size_t i = 0; i < L.t1.size(); ++i) {
    if (i > 0) {
      EXPECT_LT(L.t1.t[i - 1], L.t1.t[i]);
    }
    const int j = L.lev1[i];
    const double ell = std::exp2(-j);
    EXPECT_LE(L.t1.t[i], 8 * L.C * ell);
    if (L.t1.t[i] > 4 * L.C * std::exp2(-L.fine1)) {
      EXPECT_GT(L.t1.t[i], 4 * L.C * ell);
    }
    ++per_level[j];
  }
  for (int j = L.tent1; j < L.fine1; ++j) EXPECT_EQ(per_level[j], p.per_octave);
  // the finest level also takes every shell below it, down to h/4
  EXPECT_GE(L.t1.t.front(), f.grid.g1.spacing(0) / 4);
  EXPECT_LT(L.t1.t.front(), f.grid.g1.spacing(0) / 2);
  EXPECT_GT(per_level[L.fine1], p.per_octave);
}

TEST(Atoms, MaximalSuperlevelMatchesStrongMaximal) {
  const Grid g = Grid::cube(GroupModel::abelian(1), 0, 1, 12);
  const ProductGrid G(g, g);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 6; ++trial) {
    CellSet U(12, 12);
    for (int c = 0; c < 3 + trial; ++c) U.at(rng() % 12, rng() % 12) = 1;
    const ProductFunction chi(G, U.indicator());
    const Mat M = strong_maximal(chi, distinct_radii(g), distinct_radii(g)).v;
    for (double alpha : {0.0123, 0.0537, 0.2113}) {  // off every small-denominator ratio
      const CellSet fast = detail::maximal_superlevel(U, alpha);
      for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j) EXPECT_EQ(fast.at(i, j), M(i, j) > alpha) << i << ' ' << j;
    }
  }
}

TEST(Atoms, LevelSetsNested) {
  AtomParams p;
  p.k_min = -1;
  p.k_max = 2;
  const auto sets = level_sets(gabor(64, 32, 30, 1.5, 1.5), p);
  ASSERT_EQ(sets.size(), 4u);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& s = sets[i];
    EXPECT_LT(s.alpha, wide().layout.space.geometric_constant() / 2);
    EXPECT_TRUE(subset(s.U, s.Ustar));
    EXPECT_TRUE(subset(s.Ustar, s.Ustar2));
    EXPECT_TRUE(subset(s.Ustar2, s.Ustar3));
    if (i + 1 < sets.size()) {
      EXPECT_TRUE(subset(sets[i + 1].U, s.U));
    }
    EXPECT_TRUE(subset(union_of(wide().layout.space, s.maximal), s.Ustar));
  }
}

TEST(Atoms, ZeroInputAndBadAlpha) {
  const auto z = gabor(32, 4, 0, 6, 0.6);
  AtomParams p;
  for (const auto& s : level_sets(z, p)) {
    EXPECT_EQ(s.U.count(), 0);
    EXPECT_EQ(s.Udagger.count(), 0);
  }
  const auto D = decompose(z, p);
  for (const auto& lv : D.levels) {
    EXPECT_EQ(lv.tents, 0);
    EXPECT_TRUE(lv.atoms.empty());
    EXPECT_EQ(lv.a.norm(), 0);
  }
  std::ostringstream os;
  write_manifest(os, D);
  EXPECT_EQ(os.str(), "k,rect_id,q1,q2,tents,l2_norm,l1_norm,support_cells,cancel_g1,cancel_g2\n");
  p.alpha_factor = 0.5;
  try {
    level_sets(z, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidParams);
  }
}

TEST(Atoms, NonAbelianRejected) {
  const Grid h = Grid::cube(GroupModel::heisenberg(), -1, 1, 4);
  const Grid a = Grid::cube(GroupModel::abelian(1), -1, 1, 8);
  const ProductFunction f(ProductGrid(h, a));
  try {
    decompose(f, AtomParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedModel);
  }
}

// Classes recounted cell by cell, independent of the hit tables.
TEST(Atoms, ClassesPartitionTentRectangles) {
  const auto& D = wide();
  const auto& L = D.layout;
  const auto& sp = L.space;
  const int nk = static_cast<int>(D.levels.size());
  std::vector<long> count(nk, 0);
  for (int j1 = L.tent1; j1 <= L.fine1; ++j1)
    for (int j2 = L.tent2; j2 <= L.fine2; ++j2)
      for (int q1 : sp.s1.level(j1))
        for (int q2 : sp.s2.level(j2)) {
          int cls = -1, found = 0;
          for (int i = 0; i < nk; ++i) {
            long in_k = 0, in_next = 0;
            const double lo = std::exp2(D.levels[i].k), hi = 2 * lo;
            sp.for_each_cell({q1, q2}, [&](int a, int b) {
              in_k += D.S(a, b) > lo;
              in_next += D.S(a, b) > hi;
            });
            const long cells = sp.cells({q1, q2});
            if (2 * in_k >= cells && 2 * in_next < cells) cls = i, ++found;
          }
          EXPECT_LE(found, 1);
          if (cls >= 0) ++count[cls];
        }
  for (int i = 0; i < nk; ++i) EXPECT_EQ(count[i], D.levels[i].tents) << "k = " << D.levels[i].k;
}

TEST(Atoms, NontrivialMaximalFamily) {
  const auto& D = wide();
  bool proper = false;
  for (const auto& lv : D.levels) {
    if (lv.tents == 0) continue;
    EXPECT_TRUE(subset(lv.sets.U, lv.sets.Ustar));
    if (lv.sets.Ustar.count() < static_cast<long>(lv.sets.Ustar.in.size())) {
      proper = true;
      EXPECT_GT(lv.atoms.size(), 1u);
    }
    long used = 0;
    for (const auto& a : lv.atoms) used += a.tents;
    EXPECT_EQ(used, lv.tents);
  }
  EXPECT_TRUE(proper);
}

TEST(Atoms, SupportAndCancellation) {
  const auto& D = wide();
  EXPECT_EQ(D.support_violations, 0);
  EXPECT_LE(D.max_cancel, 1e-6);
  const auto& L = D.layout;
  for (const auto& lv : D.levels)
    for (const auto& sa : lv.atoms) {
      if (sa.w.size() == 0) continue;
      // each sub-atom already sits in beta S
      const CellSet box = dagger_set(L, {sa.S}, dagger_beta(L));
      for (int i = 0; i < sa.w.rows(); ++i)
        for (int j = 0; j < sa.w.cols(); ++j)
          if (sa.w(i, j) != 0) {
            ASSERT_TRUE(box.at(sa.r0 + i, sa.c0 + j));
          }
      // column integrals by hand
      double worst = 0;
      for (int j = 0; j < sa.w.cols(); ++j) worst = std::max(worst, std::abs(sa.w.col(j).sum()));
      EXPECT_LE(worst * L.out.g1.spacing(0), 1e-6 * sa.l1 + 1e-300);
    }
}

// All tents together equal the full separable reproducing sum over the same nodes.
TEST(Atoms, TentsTileTheScaleGrid) {
  const auto& D = wide();
  const auto& L = D.layout;
  const Mat K1 = calderon_factor(D.f.grid.g1, L.t1, L.pad1);
  const Mat K2 = calderon_factor(D.f.grid.g2, L.t2, L.pad2);
  const Mat full = K1 * D.f.v * K2.transpose();
  const Mat sum = D.sum_range() + D.below + D.above;
  EXPECT_LE((full - sum).norm(), 1e-10 * full.norm());
  EXPECT_NEAR(D.calderon_residual, (D.f_out - full).norm() / D.f_out.norm(), 1e-10);
}

TEST(Atoms, SummationOrderIrrelevant) {
  const auto& D = wide();
  std::mt19937_64 rng(11);
  for (const auto& lv : D.levels) {
    std::vector<int> order(lv.atoms.size());
    std::iota(order.begin(), order.end(), 0);
    for (int trial = 0; trial < 10; ++trial) {
      std::shuffle(order.begin(), order.end(), rng);
      Mat s = Mat::Zero(lv.a.rows(), lv.a.cols());
      for (int i : order) {
        const auto& sa = lv.atoms[i];
        if (sa.w.size()) s.block(sa.r0, sa.c0, sa.w.rows(), sa.w.cols()) += sa.w;
      }
      EXPECT_LE((s - lv.a).cwiseAbs().maxCoeff(), 1e-10 * (1 + lv.a.cwiseAbs().maxCoeff()));
    }
  }
}

TEST(Atoms, EnergyAndDaggerMeasures) {
  const auto& D = wide();
  for (const auto& lv : D.levels) {
    if (lv.tents == 0) continue;
    EXPECT_TRUE(std::isfinite(lv.energy_ratio()));
    EXPECT_GT(lv.energy, 0);
    // ||sum a_{k,R}||^2 vs sum ||a_{k,R}||^2 differ only through overlaps
    EXPECT_NEAR(lv.F_down, detail::fphi(D.f.v, std::exp2(-lv.k), D.f.grid.cell_measure()), 1e-12 * lv.F_down);
    EXPECT_TRUE(std::isfinite(lv.dagger_ratio()));
  }
}

TEST(Atoms, ReconstructionOnDeskGrid) {
  AtomParams p;
  p.max_calderon = 0.05;
  const auto D = decompose(gabor(64, 4, 200, 6, 0.6), p);
  EXPECT_LT(D.calderon_residual, 0.05);
  const double below = D.below.norm() / D.f_out.norm();
  EXPECT_LE(D.range_residual, D.calderon_residual + below + 1e-12);
  p.max_calderon = 0.01;
  try {
    decompose(gabor(64, 4, 200, 6, 0.6), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DecompositionQuality);
  }
}

TEST(Atoms, TildeOfRectangleFillingItsSets) {
  const auto& sp = wide().layout.space;
  const int q1 = sp.s1.level(-3)[1], q2 = sp.s2.level(-2)[4];
  const CellSet U = sp.cellset({q1, q2});
  const ContainmentTable T(sp, U);
  const Rect t = tilde_rect(sp, T, T, {q1, q2});
  EXPECT_EQ(t.q1, q1);
  EXPECT_EQ(t.q2, q2);
  // a set holding the parent in direction 1 grows Q1 only
  const int p1 = sp.s1.cube(q1).parent;
  const ContainmentTable T2(sp, sp.cellset({p1, q2}));
  const Rect u = tilde_rect(sp, T2, T2, {q1, q2});
  EXPECT_EQ(u.q1, p1);
  EXPECT_EQ(u.q2, q2);
}

TEST(Atoms, BetaKDoubles) {
  const auto& L = wide().layout;
  for (int k = -3; k <= 5; ++k) EXPECT_NEAR(beta_k(L, k + 4), 2 * beta_k(L, k), 1e-12);
}

TEST(Atoms, Section5Enlargements) {
  const auto& D = wide();
  for (const auto& lv : D.levels) {
    const auto s5 = section5_enlargements(D, lv.k);
    ASSERT_EQ(s5.rects.size(), lv.atoms.size());
    for (const auto& e : s5.rects) {
      EXPECT_TRUE(D.layout.space.s1.contains(e.tilde.q1, e.R.q1));
      EXPECT_TRUE(D.layout.space.s2.contains(e.tilde.q2, e.R.q2));
      EXPECT_GE(e.gamma1, 1);
      EXPECT_GE(e.gamma2, 1);
      EXPECT_TRUE(subset(D.layout.space.cellset(e.tilde), lv.sets.Ustar3));
    }
    if (!lv.atoms.empty()) {
      EXPECT_GT(s5.union_measure, 0);
    }
  }
  try {
    section5_enlargements(D, 40);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidParams);
  }
}

// Window-aware tails against the full-grid operators.
TEST(Atoms, TailMatchesFullGridOperators) {
  const auto& D = wide();
  const auto& L = D.layout;
  int k = 0;
  for (const auto& lv : D.levels)
    if (lv.tents > 0 && lv.atoms.size() > 1) k = lv.k;
  ASSERT_NE(D.level(k)->atoms.size(), 0u);
  TailOptions o;
  o.factor = 0.25;  // small enough that R† leaves part of the output grid
  const auto s5 = section5_enlargements(D, k, o.factor);
  const KernelFamily q = conj_poisson_kernel(GroupModel::abelian(1));
  ConeOptions cone{o.eta, operator_tgrid(L.out.g1, o.per_octave), operator_tgrid(L.out.g2, o.per_octave)};
  for (auto op : {TailOperator::Area, TailOperator::Square, TailOperator::DoubleRiesz}) {
    const auto rep = tail_integral(D, k, op, o);
    double oracle = 0;
    for (const auto& e : rep.entries) {
      const auto& sa = D.level(k)->atoms[e.sub];
      Mat full = Mat::Zero(L.out.n1(), L.out.n2());
      full.block(sa.r0, sa.c0, sa.w.rows(), sa.w.cols()) = sa.w;
      const ProductFunction a(L.out, full);
      const ProductFunction T = op == TailOperator::Area     ? area_function(a, q, q, cone)
                                : op == TailOperator::Square ? square_function(a, q, q, cone)
                                                             : double_riesz(a);
      const CellSet& dag = s5.rects[e.sub].dagger;
      for (int i = 0; i < L.out.n1(); ++i)
        for (int j = 0; j < L.out.n2(); ++j)
          if (!dag.at(i, j)) oracle += std::abs(T.v(i, j)) * L.out.cell_measure();
    }
    EXPECT_NEAR(rep.total, oracle, 1e-9 * (1 + oracle));
    EXPECT_GT(rep.total, 0);
  }
  // empty classes have no tail
  EXPECT_EQ(tail_integral(D, D.levels.back().k, TailOperator::DoubleRiesz).total, 0);
}

TEST(Atoms, CalderonResidualBandLimited) {
  const auto f = gabor(128, 4, 1, 6, 0.6);
  const TGrid t = TGrid::geometric(1, 6, 6, 8);
  const auto r = calderon_residual(f, t, t);
  EXPECT_LE(r.residual, 0.02);
  // a nonzero-mean bump cannot be reproduced by mass-zero pieces
  const auto bump = gabor(128, 4, 1, 0, 0.6);
  EXPECT_GT(calderon_residual(bump, t, t).residual, 0.05);
}

TEST(Atoms, GoodLambdaRatiosBounded) {
  const auto f = gabor(32, 4, 1, 3, 0.7);
  const auto rows = good_lambda(f, geometric_lambdas(1e-3, 1, 7), 4, 2);
  double C = 0;
  for (const auto& r : rows) {
    EXPECT_TRUE(std::isfinite(r.ratio));
    C = std::max(C, r.ratio);
  }
  EXPECT_LT(C, 50);
  const auto top = good_lambda(f, {1e6}, 4, 2);
  EXPECT_EQ(top[0].lhs, 0);
}
