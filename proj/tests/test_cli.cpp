#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hyperweak/experiments.hpp"

using namespace hyperweak;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hyperweak_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ConfigTable parse(const std::string& text) {
  ConfigTable t = default_config();
  std::istringstream in(text);
  t.merge(in, "test.ini");
  return t;
}

std::string config_error(const std::string& text) {
  try {
    load_config(parse(text));
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
    return e.what();
  }
  return "";
}

// Small grids so every run stays quick.
ExperimentConfig small(const fs::path& out, const std::string& extra = "") {
  ExperimentConfig c = load_config(parse("[grid]\nn1 = 32\nn2 = 32\n[hyperweak]\nprobe_max = 2\n"
                                         "[covering]\nseeds = 5\ncount = 100\nlevel = 6\n"
                                         "[cubes]\nn = 1024\nfinest = 10\nadjacency_trials = 50\n" +
                                         extra));
  c.out = out.string();
  return c;
}

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, DefaultsRoundTripThroughPrint) {
  const ConfigTable d = default_config();
  std::ostringstream os;
  d.print(os);
  ConfigTable again = default_config();
  std::istringstream in(os.str());
  again.merge(in, "printed");
  std::ostringstream os2;
  again.print(os2);
  EXPECT_EQ(os.str(), os2.str());
  const auto c = load_config(d);
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.lambdas.size(), 65u);
  EXPECT_DOUBLE_EQ(c.lambdas.front(), std::exp2(-8));
  EXPECT_DOUBLE_EQ(c.lambdas.back(), std::exp2(8));
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_NE(config_error("[grid]\nn1 = 16\nbogus = 3\n").find("test.ini:3"), std::string::npos);
  EXPECT_NE(config_error("\n[nosuch]\n").find("test.ini:2"), std::string::npos);
  EXPECT_NE(config_error("[grid]\nn1 16\n").find("test.ini:2"), std::string::npos);
  EXPECT_NE(config_error("n1 = 3\n").find("test.ini:1"), std::string::npos);
  EXPECT_NE(config_error("[grid]\nn1 = 4\nn1 = 5\n").find("test.ini:3"), std::string::npos);
  // a bad value is reported at the line that set it
  EXPECT_NE(config_error("[grid]\n\nn1 = 1.5\n").find("test.ini:3"), std::string::npos);
  EXPECT_NE(config_error("[operator]\nmaximal = centred\n").find("test.ini:2"), std::string::npos);
  EXPECT_NE(config_error("[grid]\nmodel1 = sphere\n").find("test.ini:2"), std::string::npos);
  EXPECT_NE(config_error("[lambda]\nlo = 4\nhi = 2\n").find("test.ini:3"), std::string::npos);
  EXPECT_NE(config_error("[hyperweak]\noperators = maximal,,area\n").find("test.ini:2"), std::string::npos);
  EXPECT_EQ(config_error("# comment\n[grid] ; trailing\nn1 = 16  # inline\n"), "");
}

TEST(Functions, FamiliesAndProbeMass) {
  const Grid g = Grid::cube(GroupModel::abelian(1), -4, 4, 64);
  const ProductGrid G(g, g);
  FunctionSpec s;
  EXPECT_NEAR(make_function(G, s).integral(), 1.0, 1e-12);
  for (int n = 0; n <= 3; ++n) {
    s.family = "probe";
    s.level = n;
    const auto f = make_function(G, s);
    EXPECT_NEAR(f.integral(), 1.0, 1e-12);
    EXPECT_NEAR(f.v.maxCoeff(), std::exp2(2 * n), 1e-12);
  }
  s.level = 4;  // side 1/16 below the 1/8 spacing
  EXPECT_THROW(make_function(G, s), Error);
  s.family = "zero";
  EXPECT_EQ(make_function(G, s).v.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(standard_family(1, 4).size(), 9u);
  EXPECT_EQ(probe_family(0, 4).size(), 5u);
}

TEST(Runs, MaximalCurveOnUnitSquare) {
  const auto dir = scratch("maximal");
  auto c = small(dir);
  const auto r = run_operator("maximal", c);
  EXPECT_EQ(r.status, 0);
  std::istringstream in(slurp((dir / "maximal_curve.csv").string()));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "lambda,superlevel_measure,F_phi_f_over_lambda,hyperweak_ratio,weak11_ratio");
  int rows = 0;
  double sup = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::vector<double> v;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) v.push_back(std::stod(tok));
    ASSERT_EQ(v.size(), 5u);
    if (v[0] >= 1) {
      EXPECT_EQ(v[1], 0.0);  // M_s chi <= 1
    }
    sup = std::max(sup, v[3]);
  }
  EXPECT_EQ(rows, 65);
  EXPECT_LT(sup, 10.0);
  const std::string svg = slurp((dir / "maximal_ratio.svg").string());
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("slope 0"), std::string::npos);
}

TEST(Runs, DoublingFScalesLambda) {
  const auto dir = scratch("doubling");
  auto c = small(dir);
  const ProductGrid G = ProductGrid(Grid::cube(GroupModel::abelian(1), -4, 4, 32), Grid::cube(GroupModel::abelian(1), -4, 4, 32));
  const auto f = make_function(G, c.function);
  c.function.amplitude = 2;
  const auto f2 = make_function(G, c.function);
  const auto M = apply_operator("maximal", f, c), M2 = apply_operator("maximal", f2, c);
  const std::vector<double> lam = {0.01, 0.1, 0.5};
  const std::vector<double> lam2 = {0.02, 0.2, 1.0};
  const auto a = distribution_curve(M, f, lam), b = distribution_curve(M2, f2, lam2);
  for (std::size_t i = 0; i < lam.size(); ++i) {
    EXPECT_DOUBLE_EQ(a[i].superlevel, b[i].superlevel);
    EXPECT_NEAR(a[i].F_phi, b[i].F_phi, 1e-12 * a[i].F_phi);
  }
  // F_Phi(2 f / lambda) <= Phi(2) F_Phi(f / lambda)
  const auto c2 = distribution_curve(M2, f2, lam);
  for (std::size_t i = 0; i < lam.size(); ++i) EXPECT_LE(c2[i].F_phi, orlicz::phi(2) * a[i].F_phi * (1 + 1e-12));
}

TEST(Runs, SameSeedSameBytes) {
  const auto d1 = scratch("det1"), d2 = scratch("det2");
  for (const auto& d : {d1, d2}) {
    auto c = small(d);
    EXPECT_EQ(run_covering(c).status, 0);
    EXPECT_EQ(run_cubes(c).status, 0);
    run_operator("riesz", c);
  }
  for (const auto& e : fs::directory_iterator(d1))
    EXPECT_EQ(slurp(e.path().string()), slurp((d2 / e.path().filename()).string())) << e.path();
  auto c = small(scratch("det3"));
  c.seed = 99;
  run_covering(c);
  EXPECT_NE(slurp((d1 / "covering_runs.csv").string()), slurp(c.out + "/covering_runs.csv"));
}

TEST(Runs, CoveringHistogramAndFit) {
  const auto dir = scratch("covering");
  auto c = small(dir);
  const auto r = run_covering(c);
  EXPECT_EQ(r.status, 0);
  const std::string runs = slurp((dir / "covering_runs.csv").string());
  EXPECT_EQ(runs.rfind("seed,rectangles,first_pass,selected,E_measure,E_tilde_measure,recovery_ratio", 0), 0u);
  EXPECT_NE(slurp((dir / "covering_summary.csv").string()).find("law_holds,1"), std::string::npos);
  EXPECT_EQ(slurp((dir / "covering_hist.csv").string()).rfind("seed,n,overlap_measure,overlap_over_E\n", 0), 0u);
}

TEST(Runs, HyperweakSmallGrid) {
  const auto dir = scratch("hyperweak");
  auto c = small(dir);
  c.hyperweak_operators = {"maximal", "riesz"};
  const auto r = run_hyperweak(c);
  EXPECT_EQ(r.status, 0);
  for (const char* f : {"hyperweak_curves.csv", "hyperweak_family.csv", "hyperweak_probe.csv", "hyperweak_fit.csv",
                        "hyperweak_maximal.svg", "hyperweak_riesz.svg", "hyperweak_probe.svg"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  std::istringstream in(slurp((dir / "hyperweak_probe.csv").string()));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "operator,n,side,l1_norm,sup_weak11_ratio,sup_hyperweak_ratio");
  std::vector<double> weak;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) cols.push_back(tok);
    if (cols[0] == "maximal") weak.push_back(std::stod(cols[4]));
  }
  ASSERT_EQ(weak.size(), 3u);
  EXPECT_GT(weak.back(), weak.front());
}

TEST(Runs, AtomsOnZeroGiveEmptyManifest) {
  const auto dir = scratch("atoms_zero");
  auto c = small(dir, "[atoms]\nn = 32\nfamily = zero\ntail_operators = riesz\ntail_k_max = 2\n");
  const auto r = run_atoms(c);
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(slurp((dir / "atoms_manifest.csv").string()),
            "k,rect_id,q1,q2,tents,l2_norm,l1_norm,support_cells,cancel_g1,cancel_g2\n");
  EXPECT_NE(slurp((dir / "atoms_summary.csv").string()).find("calderon_residual,0\n"), std::string::npos);
}

TEST(Runs, AtomsQualityGate) {
  auto c = small(scratch("atoms_gate"), "[atoms]\nn = 32\nmax_calderon = 0.001\n");
  try {
    run_atoms(c);
    ADD_FAILURE() << "expected a decomposition-quality error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DecompositionQuality);
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
  }
}

TEST(Runs, UnsupportedCombination) {
  auto c = small(scratch("unsupported"));
  c.model1 = GroupModel::heisenberg();
  c.n1 = 4;
  EXPECT_THROW(
      try { run_operator("riesz", c); } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnsupportedModel);
        throw;
      },
      Error);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("exit");
  const std::string cfg = (dir / "bad.ini").string();
  std::ofstream(cfg) << "[grid]\nn1 = 32\nwat = 1\n";
  EXPECT_EQ(run_cli("maximal --config " + cfg), 2);
  EXPECT_EQ(run_cli("maximal --config " + (dir / "missing.ini").string()), 2);
  EXPECT_EQ(run_cli("nosuch"), 2);
  EXPECT_EQ(run_cli("--print-config covering"), 0);
  const std::string gate = (dir / "gate.ini").string();
  std::ofstream(gate) << "[atoms]\nn = 32\nmax_calderon = 0.001\n";
  EXPECT_EQ(run_cli("atoms --config " + gate + " --out " + (dir / "o").string()), 3);
  const std::string ok = (dir / "ok.ini").string();
  std::ofstream(ok) << "[covering]\nseeds = 3\ncount = 50\nlevel = 6\n";
  EXPECT_EQ(run_cli("covering --config " + ok + " --seed 7 --out " + (dir / "o").string()), 0);
  EXPECT_NE(slurp((dir / "o" / "covering_runs.csv").string()).find("\n7,"), std::string::npos);
}
