#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numbers>

#include "hyperweak/covering.hpp"

using namespace hyperweak;

namespace {

int cube_at(const CubeSystem& s, int level, int index) {
  for (int id : s.level(level)) {
    const auto& m = s.cube(id).members;
    if (std::find(m.begin(), m.end(), index) != m.end()) return id;
  }
  return -1;
}

// Rectangle [a1, b1) x [a2, b2) in cell units, given as a dyadic pair.
Rect dyadic_rect(const RectSpace& sp, int k1, int i1, int k2, int i2) {
  return {cube_at(sp.s1, k1, i1), cube_at(sp.s2, k2, i2)};
}

bool subset(const std::vector<int>& a, const std::vector<int>& b) {
  for (int x : a)
    if (std::find(b.begin(), b.end(), x) == b.end()) return false;
  return true;
}

}  // namespace

TEST(Covering, DisjointFamilyAllSelected) {
  const auto sp = dyadic_unit_square(4);
  std::vector<Rect> fam;
  for (int i = 0; i < 4; ++i) fam.push_back(dyadic_rect(sp, 2, 4 * i, 3, 2 * i));
  const auto r = cf_select(sp, fam);
  EXPECT_EQ(r.selected.size(), 4u);
  EXPECT_TRUE(r.overlap_hist.size() < 3 || r.overlap_hist[2] == 0);
  EXPECT_DOUBLE_EQ(r.recovery_ratio, 1.0);
}

TEST(Covering, IdenticalRectanglesOneSelected) {
  const auto sp = dyadic_unit_square(4);
  std::vector<Rect> fam(7, dyadic_rect(sp, 1, 0, 2, 5));
  const auto r = cf_select(sp, fam);
  EXPECT_EQ(r.selected.size(), 1u);
  EXPECT_TRUE(cf_select(sp, {}).selected.empty());
}

TEST(Covering, RandomFamiliesLaw) {
  const auto sp = dyadic_unit_square(7);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto fam = random_dyadic_family(sp, 200, seed);
    const auto r = cf_select(sp, fam);
    EXPECT_LE(r.recovery_ratio, 4.0);
    EXPECT_LE(r.max_overlap_fraction, 0.5);
    // |E~| <= sum |R~| <= 2 sum |R~ private| <= 2 |E~|
    EXPECT_LE(r.E_tilde, r.sum_measures + 1e-12);
    EXPECT_LE(r.sum_measures, 2 * r.sum_private + 1e-12);
    EXPECT_LE(r.sum_private, r.E_tilde + 1e-12);
    for (std::size_t n = 2; n < r.overlap_hist.size(); ++n) EXPECT_LE(r.overlap_hist[n], r.overlap_hist[n - 1]);
    const auto fit = fit_overlap_decay(r);
    EXPECT_TRUE(std::isfinite(fit.C));
    const auto again = cf_select(sp, fam);
    EXPECT_EQ(again.selected, r.selected);
    for (int s : r.selected) EXPECT_LT(s, static_cast<int>(fam.size()));
  }
}

TEST(Covering, HistogramMatchesExhaustiveCount) {
  const auto sp = dyadic_unit_square(5);
  const auto fam = random_dyadic_family(sp, 120, 77, {3, 8, 1});
  const auto r = cf_select(sp, fam, SelectOrder::Input);
  const auto ref = recount_overlap(sp, fam, r.selected);
  ASSERT_EQ(ref.size(), r.overlap_hist.size());
  for (std::size_t n = 0; n < ref.size(); ++n) EXPECT_NEAR(ref[n], r.overlap_hist[n], 1e-12);
}

TEST(Covering, ExpNorm) {
  const auto sp = dyadic_unit_square(4);
  const Rect R = dyadic_rect(sp, 1, 0, 2, 0);
  const auto one = cf_select(sp, {R});
  EXPECT_NEAR(exp_norm_of_overlap(sp, one, 1.0).modular, (std::numbers::e - 1) * sp.measure(R), 1e-12);
  const auto sp7 = dyadic_unit_square(7);
  double C = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto r = cf_select(sp7, random_dyadic_family(sp7, 100, seed));
    double prev = INFINITY;
    for (double lam : {0.5, 1.0, 2.0, 4.0}) {
      const double m = exp_norm_of_overlap(sp7, r, lam).modular;
      EXPECT_LT(m, prev);
      prev = m;
    }
    C = std::max(C, exp_norm_of_overlap(sp7, r, 1.0).luxemburg / r.E);
  }
  EXPECT_TRUE(std::isfinite(C));
}

namespace {

// All dyadic rectangles inside U, maximal against every other rectangle inside U.
std::vector<std::pair<std::vector<int>, std::vector<int>>> brute_maximal(const RectSpace& sp, const CellSet& U) {
  std::vector<std::pair<std::vector<int>, std::vector<int>>> inside;
  for (const auto& a : sp.s1.cubes())
    for (const auto& b : sp.s2.cubes()) {
      bool ok = true;
      for (int i : a.members)
        for (int j : b.members) ok = ok && U.at(i, j);
      auto A = a.members, B = b.members;
      std::sort(A.begin(), A.end());
      std::sort(B.begin(), B.end());
      if (ok && std::find(inside.begin(), inside.end(), std::make_pair(A, B)) == inside.end())
        inside.push_back({A, B});
    }
  std::vector<std::pair<std::vector<int>, std::vector<int>>> out;
  for (const auto& r : inside) {
    bool maximal = true;
    for (const auto& s : inside)
      if (s != r && subset(r.first, s.first) && subset(r.second, s.second)) maximal = false;
    if (maximal) out.push_back(r);
  }
  return out;
}

}  // namespace

TEST(Maximal, SingleRectangleAndLShape) {
  const auto sp = dyadic_unit_square(4);
  const Rect R = dyadic_rect(sp, 1, 8, 2, 4);
  const auto m = maximal_rectangles(sp, sp.cellset(R));
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(sp.cells(m[0]), sp.cells(R));

  // L: [0,8) x [0,16) with [0,16) x [0,4)
  CellSet U(16, 16);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) U.at(i, j) = (i < 8) || (j < 4);
  const auto got = maximal_rectangles(sp, U);
  const auto ref = brute_maximal(sp, U);
  EXPECT_EQ(got.size(), ref.size());
  for (const Rect& r : got) {
    auto A = sp.s1.cube(r.q1).members, B = sp.s2.cube(r.q2).members;
    std::sort(A.begin(), A.end());
    std::sort(B.begin(), B.end());
    EXPECT_NE(std::find(ref.begin(), ref.end(), std::make_pair(A, B)), ref.end());
    sp.for_each_cell(r, [&](int i, int j) { EXPECT_TRUE(U.at(i, j)); });
  }
  // the two arms are among them
  bool arm1 = false, arm2 = false;
  for (const Rect& r : got) {
    if (sp.cells(r) == 8 * 16) arm1 = true;
    if (sp.cells(r) == 16 * 4) arm2 = true;
  }
  EXPECT_TRUE(arm1 && arm2);
}

TEST(Maximal, RandomSetsMatchBruteForceWithShiftedSystems) {
  const Grid g = Grid::cube(GroupModel::abelian(1), 0, 1, 16);
  const auto p = default_cube_params(g.model(), 0, 4);
  const RectSpace sp(ProductGrid(g, g), build_dyadic_system(g, p, 1, 0), build_dyadic_system(g, p, 2, 1));
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    CellSet U(16, 16);
    for (int b = 0; b < 4; ++b) {
      const int a1 = rng() % 12, a2 = rng() % 12, w1 = 1 + rng() % 6, w2 = 1 + rng() % 6;
      for (int i = a1; i < std::min(16, a1 + w1); ++i)
        for (int j = a2; j < std::min(16, a2 + w2); ++j) U.at(i, j) = 1;
    }
    EXPECT_EQ(maximal_rectangles(sp, U).size(), brute_maximal(sp, U).size());
  }
}

TEST(Enlarge, IdentityAndScaling) {
  const auto sp = dyadic_unit_square(6);
  const Rect R = dyadic_rect(sp, 3, 24, 3, 32);  // [3/8, 1/2) x [1/2, 5/8)
  const auto one = enlarge(sp, R, 1.0);
  EXPECT_EQ(one.in, sp.cellset(R).in);
  const auto two = enlarge(sp, R, 2.0);
  EXPECT_EQ(two.count(), 4 * sp.cells(R));
  EXPECT_THROW(enlarge(sp, R, 0.0), Error);

  // |union of beta R over M(U)| against (beta + 1)^2 |U|
  const auto U = random_staircase(sp, 5, 3);
  const auto M = maximal_rectangles(sp, U);
  for (double beta : {1.0, 2.0, 3.0}) {
    CellSet acc(64, 64);
    for (const Rect& r : M) {
      const auto e = enlarge(sp, r, beta);
      for (std::size_t c = 0; c < e.in.size(); ++c) acc.in[c] |= e.in[c];
    }
    EXPECT_LE(acc.count(), (beta + 1) * (beta + 1) * U.count());
  }
}

TEST(Journe, SingleRectangleHasUnitGamma) {
  const auto sp = dyadic_unit_square(5);
  const Rect R = dyadic_rect(sp, 2, 8, 1, 0);
  const auto rep = journe_gamma(sp, sp.cellset(R), 1.0);
  int found = 0;
  for (const auto& e : rep.entries) {
    EXPECT_GE(e.gamma, 1.0);
    if (e.R == R) {
      EXPECT_EQ(e.gamma, 1.0);
      ++found;
    }
  }
  EXPECT_EQ(found, 2);  // once per direction
  EXPECT_LE(rep.ratio1(), 3.0);
  EXPECT_LE(rep.ratio2(), 3.0);
}

TEST(Journe, StaircaseSumsBounded) {
  const auto sp = dyadic_unit_square(6);
  double C = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto U = random_staircase(sp, 1 + seed % 6, seed);
    const auto rep = journe_gamma(sp, U, 1.0);
    for (const auto& e : rep.entries) EXPECT_GE(e.gamma, 1.0);
    C = std::max({C, rep.ratio1(), rep.ratio2()});
  }
  EXPECT_TRUE(std::isfinite(C));
  EXPECT_LT(C, 20.0);
}

TEST(Compare, RectangleInsideAndRandomPairs) {
  const auto sp = dyadic_unit_square(4);
  EXPECT_NEAR(sp.geometric_constant(), std::pow(0.5 / 3.0, 2), 1e-15);
  const Rect R = dyadic_rect(sp, 2, 4, 2, 8);
  const auto in = compare_rect_to_maximal(sp, R, sp.cellset(R), 0.3);
  EXPECT_TRUE(in.hypothesis && in.holds);
  const auto out = compare_rect_to_maximal(sp, R, sp.cellset(dyadic_rect(sp, 2, 12, 2, 0)), 0.5);
  EXPECT_FALSE(out.hypothesis);
  EXPECT_TRUE(out.holds);

  std::mt19937_64 rng(12);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto U = union_of(sp, random_dyadic_family(sp, 3, rng(), {2, 6, 1}));
    const ProductFunction chi(sp.grid, U.indicator());
    const Mat Ms = strong_maximal(chi, distinct_radii(sp.grid.g1), distinct_radii(sp.grid.g2)).v;
    for (const auto& a : sp.s1.cubes())
      for (const auto& b : sp.s2.cubes())
        for (double alpha : {0.1, 0.5, 0.9}) {
          const auto c = compare_rect_to_maximal(sp, {a.id, b.id}, U, alpha, Ms);
          EXPECT_TRUE(c.holds);
          checked += c.hypothesis;
        }
  }
  EXPECT_GT(checked, 100);
}

TEST(Covering, AcceptanceScaleTiming) {
  const auto sp = dyadic_unit_square(7);
  const auto fam = random_dyadic_family(sp, 500, 99);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = cf_select(sp, fam);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 2.0);
  EXPECT_GT(r.selected.size(), 0u);
}
