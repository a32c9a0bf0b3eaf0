#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "hyperweak/fields.hpp"
#include "hyperweak/kernels.hpp"

using namespace hyperweak;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("hw_" + name)).string();
}

double gauss1(const GroupPoint& g) { return std::exp(-g[0] * g[0]); }

}  // namespace

TEST(Fields, IntegrateMidpoint) {
  const Grid g = Grid::cube(GroupModel::abelian(2), -1, 1, 10);
  SampledFunction f = SampledFunction::sample(g, [](const GroupPoint&) { return 3.0; });
  EXPECT_NEAR(integrate(f), 12.0, 1e-12);
  // x^2 with the midpoint rule on 1-d: exact sum of squares
  const Grid g1 = Grid::cube(GroupModel::abelian(1), 0, 1, 4);
  auto q = SampledFunction::sample(g1, [](const GroupPoint& p) { return p[0] * p[0]; });
  EXPECT_NEAR(integrate(q), (1.0 + 9 + 25 + 49) / 64 / 4, 1e-15);
}

TEST(Fields, NormalizedDilatePreservesMass) {
  const auto m = GroupModel::abelian(1);
  const Grid g = Grid::cube(m, -20, 20, 4000);
  for (double t : {0.5, 1.0, 3.0}) {
    auto f = SampledFunction::sample(g, normalized_dilate(gauss1, m, t));
    EXPECT_NEAR(integrate(f), std::sqrt(std::numbers::pi), 1e-9);
  }
  const auto h = GroupModel::heisenberg();
  auto k = normalized_dilate([](const GroupPoint& p) { return p[0] + p[2]; }, h, 2.0);
  // 2^{-4} (x/2 + z/4)
  EXPECT_NEAR(k({4, 0, 8}), (2.0 + 2.0) / 16, 1e-15);
}

TEST(Fields, FftMatchesDirectSum) {
  for (int d : {1, 2}) {
    const auto m = GroupModel::abelian(d);
    const Grid g = Grid::cube(m, -3, 3, d == 1 ? 64 : 20);
    auto f = SampledFunction::sample(g, [](const GroupPoint& p) {
      double s = 0;
      for (int i = 0; i < p.size(); ++i) s += (i + 1) * p[i];
      return std::sin(s) * std::exp(-0.3 * s * s);
    });
    const auto k = poisson_kernel(m).at(0.7);
    auto a = convolve_direct(f, k, g);
    auto b = convolve_fft(f, k);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      num += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
      den += a.values[i] * a.values[i];
    }
    EXPECT_LT(std::sqrt(num / den), 1e-9);
  }
}

TEST(Fields, HeisenbergConvolutionMatchesHandSum) {
  const auto m = GroupModel::heisenberg();
  const Grid g = Grid::cube(m, -1, 1, 5);
  auto f = SampledFunction::sample(g, [](const GroupPoint& p) { return 1 + p[0] - p[1] * p[2]; });
  auto k = [](const GroupPoint& p) { return std::exp(-(p[0] * p[0] + 2 * p[1] * p[1] + p[2] * p[2])) * (1 + p[2]); };
  auto out = convolve(f, k, g);
  // hand-written sum f(h) k(h^{-1} g) with the law written out
  const double w = std::pow(0.4, 3);
  for (std::size_t i = 0; i < g.size(); i += 17) {
    const auto x = g.point(i);
    double s = 0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const auto y = g.point(j);
      GroupPoint d{x[0] - y[0], x[1] - y[1], x[2] - y[2] - 0.5 * (y[0] * x[1] - y[1] * x[0])};
      s += f.values[j] * k(d);
    }
    EXPECT_NEAR(out.values[i], s * w, 1e-12);
  }
}

TEST(Fields, MoleculeCheckOnConjugatePoisson) {
  const auto m = GroupModel::abelian(1);
  const auto q = conj_poisson_kernel(m).at(1.0);
  const Grid g = Grid::cube(m, -2000, 2000, 400000);
  auto rep = molecule_check(q, m, 0.5, 50, 4000, 1, g);
  EXPECT_GT(rep.decay_constant, 0);
  EXPECT_LT(rep.decay_constant, 1.0);
  EXPECT_LT(rep.holder_constant, 10.0);
  EXPECT_LT(rep.cancellation_residual, 1e-3);
}

TEST(Fields, PgrdRoundTripIsExact) {
  const Grid g(GroupModel::heisenberg(), {-1, -2, -3}, {1, 2, 3}, {3, 4, 5});
  auto f = SampledFunction::sample(g, [](const GroupPoint& p) { return std::sin(p[0] + 2 * p[1]) / (1 + p[2] * p[2]); });
  const auto path = tmp_path("rt.pgrd");
  write_pgrd(f, path);
  auto r = read_pgrd(path);
  EXPECT_TRUE(r.grid.same_shape(g));
  EXPECT_EQ(r.values, f.values);
  std::ifstream is(path, std::ios::binary);
  std::string head;
  std::getline(is, head);
  EXPECT_EQ(head.rfind("PGRD v1 heisenberg1 3 3 4 5 ", 0), 0u);
  const auto csv = tmp_path("rt.csv");
  write_grid_csv(f, csv);
  auto c = read_grid_csv(csv);
  EXPECT_EQ(c.values, f.values);
  EXPECT_TRUE(c.grid.same_shape(g));
}

TEST(Fields, Errors) {
  const auto m = GroupModel::abelian(1);
  EXPECT_THROW(Grid(m, {0}, {0}, {4}), Error);
  EXPECT_THROW(Grid(m, {0}, {1}, {0}), Error);
  EXPECT_THROW(SampledFunction(Grid::cube(m, 0, 1, 2), {1.0, NAN}), Error);
  EXPECT_THROW(normalized_dilate(gauss1, m, 0.0), Error);
  const auto path = tmp_path("bad.pgrd");
  { std::ofstream os(path); os << "PGRD v2 abelian1 1 4 0 1\n"; }
  EXPECT_THROW(read_pgrd(path), Error);
  EXPECT_EQ(Grid::cube(m, 0, 1, 4).locate({1.0}), -1);
  EXPECT_EQ(Grid::cube(m, 0, 1, 4).locate({0.3}), 1);
}
