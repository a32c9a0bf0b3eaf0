#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hyperweak/group.hpp"

using namespace hyperweak;

namespace {

// Independent transcription of the Heisenberg law and gauge.
struct H {
  double x, y, z;
};
H mul(H a, H b) { return {a.x + b.x, a.y + b.y, a.z + b.z + 0.5 * (a.x * b.y - a.y * b.x)}; }
double gauge(H a) {
  const double r2 = a.x * a.x + a.y * a.y;
  return std::pow(r2 * r2 + 16 * a.z * a.z, 0.25);
}
GroupPoint gp(H a) { return {a.x, a.y, a.z}; }

}  // namespace

TEST(Group, HeisenbergLawMatchesIndependentFormula) {
  const auto m = GroupModel::heisenberg();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 200; ++i) {
    H a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)};
    const GroupPoint p = m.multiply(gp(a), gp(b));
    const H q = mul(a, b);
    EXPECT_DOUBLE_EQ(p[0], q.x);
    EXPECT_DOUBLE_EQ(p[1], q.y);
    EXPECT_DOUBLE_EQ(p[2], q.z);
    const H ainv{-a.x, -a.y, -a.z};
    EXPECT_NEAR(m.distance(gp(a), gp(b)), gauge(mul(ainv, b)), 1e-12);
  }
}

TEST(Group, GroupAxiomsAndDilations) {
  for (const auto& m : {GroupModel::abelian(1), GroupModel::abelian(3), GroupModel::heisenberg()}) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int i = 0; i < 100; ++i) {
      GroupPoint a(m.dim()), b(m.dim()), c(m.dim());
      for (int k = 0; k < m.dim(); ++k) a[k] = u(rng), b[k] = u(rng), c[k] = u(rng);
      const auto l = m.multiply(m.multiply(a, b), c);
      const auto r = m.multiply(a, m.multiply(b, c));
      for (int k = 0; k < m.dim(); ++k) EXPECT_NEAR(l[k], r[k], 1e-12);
      const auto e = m.multiply(a, m.invert(a));
      for (int k = 0; k < m.dim(); ++k) EXPECT_NEAR(e[k], 0.0, 1e-12);
      const double t = 0.3 + std::abs(u(rng));
      const auto dl = m.dilate(m.multiply(a, b), t);
      const auto dr = m.multiply(m.dilate(a, t), m.dilate(b, t));
      for (int k = 0; k < m.dim(); ++k) EXPECT_NEAR(dl[k], dr[k], 1e-12);
      EXPECT_NEAR(m.hom_norm(m.dilate(a, t)), t * m.hom_norm(a), 1e-12);
      EXPECT_NEAR(m.hom_norm(m.invert(a)), m.hom_norm(a), 1e-12);
      // triangle inequality: the gauge is a genuine metric with constant 1
      EXPECT_LE(m.distance(a, c), m.distance(a, b) + m.distance(b, c) + 1e-12);
      // left invariance
      EXPECT_NEAR(m.distance(m.multiply(c, a), m.multiply(c, b)), m.distance(a, b), 1e-10);
    }
  }
}

TEST(Group, KnownDistance) {
  const auto m = GroupModel::heisenberg();
  // (1,0,0)^{-1}(0,1,0) = (-1, 1, -1/2): rho^4 = 4 + 4
  EXPECT_NEAR(m.distance({1, 0, 0}, {0, 1, 0}), std::pow(8.0, 0.25), 1e-14);
  EXPECT_EQ(m.nu(), 4);
  EXPECT_EQ(GroupModel::abelian(2).nu(), 2);
}

TEST(Group, UnitBallVolumes) {
  EXPECT_NEAR(GroupModel::abelian(1).unit_ball_volume(), 2.0, 1e-14);
  EXPECT_NEAR(GroupModel::abelian(2).unit_ball_volume(), std::numbers::pi, 1e-14);
  EXPECT_NEAR(GroupModel::abelian(3).unit_ball_volume(), 4 * std::numbers::pi / 3, 1e-13);
  const auto h = GroupModel::heisenberg();
  // pi^2/8 from integrating sqrt(1-r^4)/2 over the unit disc
  EXPECT_NEAR(h.unit_ball_volume(), std::numbers::pi * std::numbers::pi / 8, 1e-4);
  const double mc = monte_carlo_unit_ball_volume(h, 12345, 2'000'000);
  EXPECT_NEAR(h.unit_ball_volume() / mc, 1.0, 0.005);
  EXPECT_NEAR(h.ball_volume(2.0), 16 * h.unit_ball_volume(), 1e-12);
}

TEST(Group, DoublingConstantFinite) {
  const auto m = GroupModel::abelian(1);
  std::vector<GroupPoint> pts;
  for (int i = 0; i < 400; ++i) pts.push_back({(i + 0.5) / 400.0});
  const int A = estimate_doubling_constant(m, pts, {0.05, 0.1}, 20, 3);
  EXPECT_GE(A, 2);
  EXPECT_LE(A, 4);
}

TEST(Group, Errors) {
  EXPECT_THROW(GroupModel::parse("sl2"), Error);
  EXPECT_THROW(GroupModel::abelian(0), Error);
  EXPECT_THROW(GroupModel::abelian(1).ball_volume(-1), Error);
  EXPECT_EQ(GroupModel::parse("heisenberg1").nu(), 4);
}
