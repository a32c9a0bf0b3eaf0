#pragma once

// Experiment drivers behind the command-line tool: typed configuration, test
// functions, and one run_* per subcommand writing CSV and SVG files.

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hyperweak/atoms.hpp"
#include "hyperweak/config.hpp"
#include "hyperweak/covering.hpp"
#include "hyperweak/cubes.hpp"
#include "hyperweak/operators.hpp"
#include "hyperweak/plot.hpp"

namespace hyperweak {

// ---- configuration -------------------------------------------------------------

inline ConfigTable default_config() {
  return ConfigTable({
      {"run", "seed", "1", "base seed (--seed overrides)"},
      {"run", "out", "out", "output directory (--out overrides)"},

      {"grid", "model1", "abelian1", "abelian1..abelian4 | heisenberg1"},
      {"grid", "model2", "abelian1", ""},
      {"grid", "lo", "-4", "box [lo, hi) in every coordinate"},
      {"grid", "hi", "4", ""},
      {"grid", "n1", "128", "cells per axis, first factor"},
      {"grid", "n2", "128", "cells per axis, second factor"},

      {"operator", "maximal", "strong", "strong | nontangential"},
      {"operator", "maximal_kernel", "poisson", "poisson | heat (nontangential only)"},
      {"operator", "area_kernel", "conj_poisson", "conj_poisson | grad_poisson"},
      {"operator", "eta", "1", "cone aperture"},
      {"operator", "riesz_j1", "0", "Riesz direction in the first factor"},
      {"operator", "riesz_j2", "0", ""},
      {"operator", "riesz_pad", "4", "zero-padding factor of the Riesz FFT"},

      {"tgrid", "per_octave", "8", "scales (and maximal radii) per octave"},

      {"lambda", "lo", "0.00390625", ""},
      {"lambda", "hi", "256", ""},
      {"lambda", "count", "65", "geometric lambda grid"},

      {"function", "family", "indicator", "indicator | spike | probe | gaussian | gabor | zero"},
      {"function", "a1", "0", "box [a1, b1) x [a2, b2)"},
      {"function", "b1", "1", ""},
      {"function", "a2", "0", ""},
      {"function", "b2", "1", ""},
      {"function", "amplitude", "1", ""},
      {"function", "sigma", "0.6", "gaussian / gabor width"},
      {"function", "omega", "6", "gabor frequency"},
      {"function", "level", "3", "spike / probe side 2^-level at the box corner"},

      {"hyperweak", "operators", "maximal,area,square,riesz", "comma list"},
      {"hyperweak", "probe_min", "0", "probe sides 2^-n, n = probe_min..probe_max; spikes use n >= 1"},
      {"hyperweak", "probe_max", "4", ""},

      {"cubes", "model", "abelian1", "abelian1..abelian4 | heisenberg1"},
      {"cubes", "lo", "0", ""},
      {"cubes", "hi", "1", ""},
      {"cubes", "n", "16384", "samples per axis"},
      {"cubes", "coarsest", "0", ""},
      {"cubes", "finest", "14", ""},
      {"cubes", "adjacent_systems", "3", ""},
      {"cubes", "adjacency_trials", "200", ""},

      {"covering", "level", "7", "finest dyadic level on [0,1)^2"},
      {"covering", "seeds", "50", "families use seeds seed .. seed+seeds-1"},
      {"covering", "count", "500", "rectangles per family"},
      {"covering", "min_sum", "7", "k1 + k2 range"},
      {"covering", "max_sum", "12", ""},
      {"covering", "min_level", "1", ""},
      {"covering", "order", "decreasing", "decreasing | input"},
      {"covering", "min_exponent", "0.45", "quality gate on the fitted decay"},

      {"atoms", "n", "128", "cells per axis on [lo, hi)^2, Abelian(1)^2"},
      {"atoms", "lo", "-4", ""},
      {"atoms", "hi", "4", ""},
      {"atoms", "family", "gabor", "gabor | gaussian | indicator | zero"},
      {"atoms", "amplitude", "300", ""},
      {"atoms", "sigma", "0.6", ""},
      {"atoms", "omega", "6", ""},
      {"atoms", "k_min", "-3", ""},
      {"atoms", "k_max", "5", ""},
      {"atoms", "alpha_factor", "0.4", "alpha = alpha_factor * C(G)"},
      {"atoms", "eta", "1", ""},
      {"atoms", "per_octave", "8", ""},
      {"atoms", "tent_coarsest", "0", ""},
      {"atoms", "max_calderon", "0.02", "reproducing residual gate"},
      {"atoms", "tail_operators", "area,riesz", "area | square | riesz, comma list"},
      {"atoms", "tail_factor", "100", "R-dagger enlargement factor"},
      {"atoms", "tail_k_min", "1", ""},
      {"atoms", "tail_k_max", "5", ""},
      {"atoms", "tail_per_octave", "2", ""},
  });
}

struct FunctionSpec {
  std::string family = "indicator";
  double a1 = 0, b1 = 1, a2 = 0, b2 = 1;
  double amplitude = 1, sigma = 0.6, omega = 6;
  int level = 3;
};

struct ExperimentConfig {
  ConfigTable table;
  std::uint64_t seed = 1;
  std::string out = "out";

  GroupModel model1 = GroupModel::abelian(1), model2 = GroupModel::abelian(1);
  double lo = -4, hi = 4;
  int n1 = 128, n2 = 128;

  std::string maximal = "strong", maximal_kernel = "poisson", area_kernel = "conj_poisson";
  double eta = 1;
  int riesz_j1 = 0, riesz_j2 = 0, riesz_pad = 4;
  int per_octave = 8;
  std::vector<double> lambdas;
  FunctionSpec function;

  std::vector<std::string> hyperweak_operators;
  int probe_min = 0, probe_max = 4;

  struct Cubes {
    GroupModel model = GroupModel::abelian(1);
    double lo = 0, hi = 1;
    int n = 16384, coarsest = 0, finest = 14, systems = 3, trials = 200;
  } cubes;

  struct Covering {
    int level = 7, seeds = 50, count = 500;
    FamilyParams family;
    SelectOrder order = SelectOrder::DecreasingMeasure;
    double min_exponent = 0.45;
  } covering;

  struct Atoms {
    int n = 128;
    double lo = -4, hi = 4;
    FunctionSpec function;
    AtomParams params;
    std::vector<std::string> tails;
    TailOptions tail;
    int tail_k_min = 1, tail_k_max = 5;
  } atoms;
};

namespace detail {

inline GroupModel model_key(const ConfigTable& t, const std::string& s, const std::string& k) {
  try {
    return GroupModel::parse(t.str(s, k));
  } catch (const Error&) {
    t.bad(t.entry(s, k), "unknown group model");
  }
}

inline void positive(const ConfigTable& t, const std::string& s, const std::string& k, double v) {
  if (!(v > 0)) t.bad(t.entry(s, k), "must be positive");
}

}  // namespace detail

inline ExperimentConfig load_config(const ConfigTable& t) {
  ExperimentConfig c;
  c.table = t;
  c.seed = t.u64("run", "seed");
  c.out = t.str("run", "out");

  c.model1 = detail::model_key(t, "grid", "model1");
  c.model2 = detail::model_key(t, "grid", "model2");
  c.lo = t.real("grid", "lo");
  c.hi = t.real("grid", "hi");
  if (!(c.hi > c.lo)) t.bad(t.entry("grid", "hi"), "need hi > lo");
  c.n1 = t.integer("grid", "n1");
  c.n2 = t.integer("grid", "n2");
  detail::positive(t, "grid", "n1", c.n1);
  detail::positive(t, "grid", "n2", c.n2);

  c.maximal = t.choice("operator", "maximal", {"strong", "nontangential"});
  c.maximal_kernel = t.choice("operator", "maximal_kernel", {"poisson", "heat"});
  c.area_kernel = t.choice("operator", "area_kernel", {"conj_poisson", "grad_poisson"});
  c.eta = t.real("operator", "eta");
  detail::positive(t, "operator", "eta", c.eta);
  c.riesz_j1 = t.integer("operator", "riesz_j1");
  c.riesz_j2 = t.integer("operator", "riesz_j2");
  c.riesz_pad = t.integer("operator", "riesz_pad");
  detail::positive(t, "operator", "riesz_pad", c.riesz_pad);
  c.per_octave = t.integer("tgrid", "per_octave");
  detail::positive(t, "tgrid", "per_octave", c.per_octave);

  const double llo = t.real("lambda", "lo"), lhi = t.real("lambda", "hi");
  const int lc = t.integer("lambda", "count");
  detail::positive(t, "lambda", "lo", llo);
  if (!(lhi > llo)) t.bad(t.entry("lambda", "hi"), "need hi > lo");
  if (lc < 2) t.bad(t.entry("lambda", "count"), "need at least 2 points");
  c.lambdas = geometric_lambdas(llo, lhi, lc);

  auto& f = c.function;
  f.family = t.choice("function", "family", {"indicator", "spike", "probe", "gaussian", "gabor", "zero"});
  f.a1 = t.real("function", "a1"), f.b1 = t.real("function", "b1");
  f.a2 = t.real("function", "a2"), f.b2 = t.real("function", "b2");
  if (!(f.b1 > f.a1)) t.bad(t.entry("function", "b1"), "need b1 > a1");
  if (!(f.b2 > f.a2)) t.bad(t.entry("function", "b2"), "need b2 > a2");
  f.amplitude = t.real("function", "amplitude");
  f.sigma = t.real("function", "sigma");
  detail::positive(t, "function", "sigma", f.sigma);
  f.omega = t.real("function", "omega");
  f.level = t.integer("function", "level");

  const std::vector<std::string> ops = {"maximal", "area", "square", "riesz"};
  c.hyperweak_operators = t.list("hyperweak", "operators");
  for (const auto& o : c.hyperweak_operators)
    if (std::find(ops.begin(), ops.end(), o) == ops.end())
      t.bad(t.entry("hyperweak", "operators"), "unknown operator '" + o + "'");
  c.probe_min = t.integer("hyperweak", "probe_min");
  c.probe_max = t.integer("hyperweak", "probe_max");
  if (c.probe_min < 0 || c.probe_max < c.probe_min)
    t.bad(t.entry("hyperweak", "probe_max"), "need 0 <= probe_min <= probe_max");

  c.cubes.model = detail::model_key(t, "cubes", "model");
  c.cubes.lo = t.real("cubes", "lo");
  c.cubes.hi = t.real("cubes", "hi");
  if (!(c.cubes.hi > c.cubes.lo)) t.bad(t.entry("cubes", "hi"), "need hi > lo");
  c.cubes.n = t.integer("cubes", "n");
  detail::positive(t, "cubes", "n", c.cubes.n);
  c.cubes.coarsest = t.integer("cubes", "coarsest");
  c.cubes.finest = t.integer("cubes", "finest");
  if (c.cubes.finest < c.cubes.coarsest) t.bad(t.entry("cubes", "finest"), "need finest >= coarsest");
  c.cubes.systems = t.integer("cubes", "adjacent_systems");
  detail::positive(t, "cubes", "adjacent_systems", c.cubes.systems);
  c.cubes.trials = t.integer("cubes", "adjacency_trials");

  c.covering.level = t.integer("covering", "level");
  detail::positive(t, "covering", "level", c.covering.level);
  c.covering.seeds = t.integer("covering", "seeds");
  detail::positive(t, "covering", "seeds", c.covering.seeds);
  c.covering.count = t.integer("covering", "count");
  c.covering.family.min_sum = t.integer("covering", "min_sum");
  c.covering.family.max_sum = t.integer("covering", "max_sum");
  c.covering.family.min_level = t.integer("covering", "min_level");
  c.covering.order = t.choice("covering", "order", {"decreasing", "input"}) == "input" ? SelectOrder::Input
                                                                                       : SelectOrder::DecreasingMeasure;
  c.covering.min_exponent = t.real("covering", "min_exponent");

  auto& a = c.atoms;
  a.n = t.integer("atoms", "n");
  detail::positive(t, "atoms", "n", a.n);
  a.lo = t.real("atoms", "lo");
  a.hi = t.real("atoms", "hi");
  if (!(a.hi > a.lo)) t.bad(t.entry("atoms", "hi"), "need hi > lo");
  a.function.family = t.choice("atoms", "family", {"gabor", "gaussian", "indicator", "zero"});
  a.function.amplitude = t.real("atoms", "amplitude");
  a.function.sigma = t.real("atoms", "sigma");
  detail::positive(t, "atoms", "sigma", a.function.sigma);
  a.function.omega = t.real("atoms", "omega");
  a.params.k_min = t.integer("atoms", "k_min");
  a.params.k_max = t.integer("atoms", "k_max");
  a.params.alpha_factor = t.real("atoms", "alpha_factor");
  a.params.eta = t.real("atoms", "eta");
  detail::positive(t, "atoms", "eta", a.params.eta);
  a.params.per_octave = t.integer("atoms", "per_octave");
  a.params.tent_coarsest = t.integer("atoms", "tent_coarsest");
  a.params.max_calderon = t.real("atoms", "max_calderon");
  a.tails = t.list("atoms", "tail_operators");
  for (const auto& o : a.tails)
    if (o != "area" && o != "square" && o != "riesz")
      t.bad(t.entry("atoms", "tail_operators"), "unknown tail operator '" + o + "'");
  a.tail.factor = t.real("atoms", "tail_factor");
  detail::positive(t, "atoms", "tail_factor", a.tail.factor);
  a.tail.eta = a.params.eta;
  a.tail.per_octave = t.integer("atoms", "tail_per_octave");
  detail::positive(t, "atoms", "tail_per_octave", a.tail.per_octave);
  a.tail_k_min = t.integer("atoms", "tail_k_min");
  a.tail_k_max = t.integer("atoms", "tail_k_max");
  if (a.tail_k_min < a.params.k_min || a.tail_k_max > a.params.k_max || a.tail_k_min > a.tail_k_max)
    t.bad(t.entry("atoms", "tail_k_max"), "tail range must sit inside [k_min, k_max]");
  return c;
}

// ---- test functions --------------------------------------------------------------

namespace detail {

inline bool in_box(const GroupPoint& g, double a, double b) {
  for (int i = 0; i < g.size(); ++i)
    if (g[i] < a || g[i] >= b) return false;
  return true;
}

inline double norm2(const GroupPoint& g) {
  double s = 0;
  for (int i = 0; i < g.size(); ++i) s += g[i] * g[i];
  return s;
}

}  // namespace detail

// Spikes and probes sit at the (a1, a2) corner with side 2^-level in every
// coordinate and height 2^{level (d1 + d2)}, so their mass does not depend on level.
inline ProductFunction make_function(const ProductGrid& G, const FunctionSpec& s) {
  const double amp = s.amplitude;
  const int d = G.g1.ndims() + G.g2.ndims();
  const double side = std::exp2(-s.level), height = std::exp2(s.level * d);
  if (s.family == "spike" || s.family == "probe")
    for (int f = 0; f < 2; ++f)
      for (int a = 0; a < G.factor(f).ndims(); ++a)
        require(side >= G.factor(f).spacing(a) * (1 - 1e-12), ErrorCode::InvalidParams,
                "spike side 2^-" + std::to_string(s.level) + " is below the grid spacing");
  auto box = [&](const GroupPoint& x, const GroupPoint& y) {
    return detail::in_box(x, s.a1, s.b1) && detail::in_box(y, s.a2, s.b2);
  };
  auto corner = [&](const GroupPoint& x, const GroupPoint& y) {
    return detail::in_box(x, s.a1, s.a1 + side) && detail::in_box(y, s.a2, s.a2 + side);
  };
  return ProductFunction::sample(G, [&](const GroupPoint& x, const GroupPoint& y) -> double {
    if (s.family == "zero") return 0.0;
    if (s.family == "indicator") return box(x, y) ? amp : 0.0;
    if (s.family == "spike") return amp * ((box(x, y) ? 1.0 : 0.0) + (corner(x, y) ? height : 0.0));
    if (s.family == "probe") return corner(x, y) ? amp * height : 0.0;
    const double gauss = amp * std::exp(-(detail::norm2(x) + detail::norm2(y)) / (2 * s.sigma * s.sigma));
    if (s.family == "gaussian") return gauss;
    if (s.family == "gabor") return gauss * std::cos(s.omega * x[0]) * std::cos(s.omega * y[0]);
    throw Error(ErrorCode::Config, "unknown function family '" + s.family + "'");
  });
}

struct NamedFunction {
  std::string name;
  FunctionSpec spec;
};

// Indicators, stretched rectangles in both orientations, and two-scale spikes with
// small sides 2^-m, m = max(1, spike_min) .. spike_max.
inline std::vector<NamedFunction> standard_family(int spike_min = 1, int spike_max = 4) {
  std::vector<NamedFunction> out;
  FunctionSpec s;
  out.push_back({"unit_square", s});
  for (int j : {2, 3}) {
    const double w = std::exp2(-j - 1), h = std::exp2(j - 1);
    FunctionSpec a = s, b = s;
    a.a1 = -w, a.b1 = w, a.a2 = -h, a.b2 = h;
    b.a1 = -h, b.b1 = h, b.a2 = -w, b.b2 = w;
    out.push_back({"stretched_tall_" + std::to_string(j), a});
    out.push_back({"stretched_wide_" + std::to_string(j), b});
  }
  for (int m = std::max(1, spike_min); m <= spike_max; ++m) {
    FunctionSpec sp = s;
    sp.family = "spike";
    sp.level = m;
    out.push_back({"two_scale_spike_" + std::to_string(m), sp});
  }
  return out;
}

// f_n = 4^n chi of [0, 2^-n)^2: unit mass on shrinking squares.
inline std::vector<NamedFunction> probe_family(int nmin, int nmax) {
  std::vector<NamedFunction> out;
  for (int n = nmin; n <= nmax; ++n) {
    FunctionSpec s;
    s.family = "probe";
    s.level = n;
    out.push_back({"probe_" + std::to_string(n), s});
  }
  return out;
}

// ---- operators and curves ----------------------------------------------------------

// |T f| for the named operator class under the configured options.
inline ProductFunction apply_operator(const std::string& op, const ProductFunction& f, const ExperimentConfig& c) {
  const auto& G = f.grid;
  const ConeOptions cone = default_cone(G, c.eta, c.per_octave);
  if (op == "maximal") {
    if (c.maximal == "strong") return strong_maximal(f, c.per_octave);
    auto k = [&](const GroupModel& m) { return c.maximal_kernel == "heat" ? heat_kernel(m) : poisson_kernel(m); };
    return nontangential_maximal(f, k(G.g1.model()), k(G.g2.model()), cone);
  }
  if (op == "area") {
    if (c.area_kernel == "grad_poisson") return area_function_grad_poisson(f, cone);
    return area_function(f, conj_poisson_kernel(G.g1.model()), conj_poisson_kernel(G.g2.model()), cone);
  }
  if (op == "square")
    return square_function(f, conj_poisson_kernel(G.g1.model()), conj_poisson_kernel(G.g2.model()), cone);
  if (op == "riesz") {
    ProductFunction r = double_riesz(f, c.riesz_j1, c.riesz_j2, c.riesz_pad);
    r.v = r.v.cwiseAbs();
    return r;
  }
  throw Error(ErrorCode::Config, "unknown operator '" + op + "'");
}

struct CurveSummary {
  double l1 = 0;
  double sup_ratio = 0;   // sup over lambda of |{Tf > lambda}| / F_Phi(f / lambda)
  double sup_weak11 = 0;  // sup over lambda of lambda |{Tf > lambda}| / ||f||_1
  double max_Tf = 0;
  bool finite = true;
};

inline CurveSummary summarize(const ProductFunction& Tf, const ProductFunction& f,
                              const std::vector<DistributionRow>& rows) {
  CurveSummary s;
  s.l1 = f.v.cwiseAbs().sum() * f.grid.cell_measure();
  s.max_Tf = Tf.v.size() ? Tf.v.maxCoeff() : 0;
  s.finite = Tf.v.allFinite();
  for (const auto& r : rows) {
    if (!std::isfinite(r.ratio)) s.finite = false;
    else s.sup_ratio = std::max(s.sup_ratio, r.ratio);
    if (s.l1 > 0) s.sup_weak11 = std::max(s.sup_weak11, r.lambda * r.superlevel / s.l1);
  }
  return s;
}

// ---- output helpers ------------------------------------------------------------------

struct RunResult {
  int status = 0;  // 0 ok, 3 numerical-quality failure
  std::vector<std::string> files;
  std::vector<std::string> notes;
};

namespace detail {

inline std::string out_path(const ExperimentConfig& c, const std::string& name) {
  std::error_code ec;
  std::filesystem::create_directories(c.out, ec);
  require(!ec, ErrorCode::Io, "cannot create output directory " + c.out);
  return (std::filesystem::path(c.out) / name).string();
}

inline void write_file(RunResult& r, const ExperimentConfig& c, const std::string& name, const std::string& body) {
  const std::string p = out_path(c, name);
  std::ofstream os(p, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::Io, "cannot open " + p);
  os << body;
  require(static_cast<bool>(os), ErrorCode::Io, "write failed: " + p);
  r.files.push_back(p);
}

inline std::string fd(double v) { return format_double(v); }

inline std::string curve_rows(const std::string& prefix, const std::vector<DistributionRow>& rows, double l1) {
  std::string o;
  for (const auto& r : rows)
    o += prefix + fd(r.lambda) + "," + fd(r.superlevel) + "," + fd(r.F_phi) + "," + fd(r.ratio) + "," +
         fd(l1 > 0 ? r.lambda * r.superlevel / l1 : 0.0) + "\n";
  return o;
}

inline ProductGrid operator_grid(const ExperimentConfig& c) {
  auto g = [&](const GroupModel& m, int n) {
    const int d = m.dim();
    return Grid(m, std::vector<double>(d, c.lo), std::vector<double>(d, c.hi), std::vector<int>(d, n));
  };
  return ProductGrid(g(c.model1, c.n1), g(c.model2, c.n2));
}

}  // namespace detail

// ---- run_* ---------------------------------------------------------------------------

inline const char* kCurveHeader = "lambda,superlevel_measure,F_phi_f_over_lambda,hyperweak_ratio,weak11_ratio\n";

// Single operator on the configured function: distribution curve plus plots.
inline RunResult run_operator(const std::string& op, const ExperimentConfig& c) {
  RunResult r;
  const ProductGrid G = detail::operator_grid(c);
  const ProductFunction f = make_function(G, c.function);
  const ProductFunction Tf = apply_operator(op, f, c);
  const auto rows = distribution_curve(Tf, f, c.lambdas);
  const CurveSummary s = summarize(Tf, f, rows);
  detail::write_file(r, c, op + "_curve.csv", kCurveHeader + detail::curve_rows("", rows, s.l1));

  plot::Series sl{"|{Tf > lambda}|", {}, {}}, fp{"F_Phi(f / lambda)", {}, {}};
  plot::Series hr{"hyperweak ratio", {}, {}}, wr{"weak (1,1) ratio", {}, {}};
  for (const auto& row : rows) {
    sl.x.push_back(row.lambda), sl.y.push_back(row.superlevel);
    fp.x.push_back(row.lambda), fp.y.push_back(row.F_phi);
    hr.x.push_back(row.lambda), hr.y.push_back(row.ratio);
    wr.x.push_back(row.lambda), wr.y.push_back(s.l1 > 0 ? row.lambda * row.superlevel / s.l1 : 0.0);
  }
  detail::write_file(r, c, op + "_distribution.svg",
                     plot::svg({op + ": distribution", "lambda", "measure", true, true, {-1, -2}}, {sl, fp}));
  detail::write_file(r, c, op + "_ratio.svg",
                     plot::svg({op + ": ratios", "lambda", "ratio", true, true, {0}}, {hr, wr}));
  std::ostringstream note;
  note << op << ": sup hyperweak ratio " << s.sup_ratio << ", sup weak(1,1) ratio " << s.sup_weak11
       << ", max Tf " << s.max_Tf;
  r.notes.push_back(note.str());
  if (!s.finite) {
    r.status = 3;
    r.notes.push_back("non-finite values in the distribution curve");
  }
  return r;
}

struct HyperweakRow {
  std::string op, function;
  bool probe = false;
  int n = 0;
  CurveSummary s;
};

struct HyperweakFit {
  std::string op;
  double fitted_C = 0;       // max sup ratio over the standard family and the probes
  double weak11_growth = 0;  // last / first probe sup weak(1,1) ratio
  double ratio_growth = 0;   // same for the hyperweak ratio
};

// Curves for every (operator, function) pair; the fitted constant is the sup of the
// hyperweak ratio over the whole family.
inline std::vector<HyperweakFit> hyperweak_fits(const std::vector<HyperweakRow>& rows,
                                                const std::vector<std::string>& ops) {
  std::vector<HyperweakFit> out;
  for (const auto& op : ops) {
    HyperweakFit h{op};
    const HyperweakRow *first = nullptr, *last = nullptr;
    for (const auto& r : rows) {
      if (r.op != op) continue;
      h.fitted_C = std::max(h.fitted_C, r.s.sup_ratio);
      if (r.probe) {
        if (!first) first = &r;
        last = &r;
      }
    }
    if (first && first->s.sup_weak11 > 0) h.weak11_growth = last->s.sup_weak11 / first->s.sup_weak11;
    if (first && first->s.sup_ratio > 0) h.ratio_growth = last->s.sup_ratio / first->s.sup_ratio;
    out.push_back(h);
  }
  return out;
}

inline RunResult run_hyperweak(const ExperimentConfig& c) {
  RunResult r;
  const ProductGrid G = detail::operator_grid(c);
  auto family = standard_family(c.probe_min, c.probe_max);
  const auto probes = probe_family(c.probe_min, c.probe_max);
  std::string curves = std::string("operator,function,") + kCurveHeader;
  std::vector<HyperweakRow> rows;
  std::vector<plot::Series> ratio_plots;
  for (const auto& op : c.hyperweak_operators) {
    std::vector<plot::Series> series;
    auto one = [&](const NamedFunction& nf, bool probe) {
      const ProductFunction f = make_function(G, nf.spec);
      const ProductFunction Tf = apply_operator(op, f, c);
      const auto dist = distribution_curve(Tf, f, c.lambdas);
      const CurveSummary s = summarize(Tf, f, dist);
      curves += detail::curve_rows(op + "," + nf.name + ",", dist, s.l1);
      rows.push_back({op, nf.name, probe, nf.spec.level, s});
      if (!probe) {
        plot::Series se{nf.name, {}, {}};
        for (const auto& d : dist) se.x.push_back(d.lambda), se.y.push_back(d.ratio);
        series.push_back(std::move(se));
      }
      if (!s.finite) r.status = 3;
    };
    for (const auto& nf : family) one(nf, false);
    for (const auto& nf : probes) one(nf, true);
    detail::write_file(r, c, "hyperweak_" + op + ".svg",
                       plot::svg({op + ": |{Tf > lambda}| / F_Phi(f / lambda)", "lambda", "ratio", true, true, {0}},
                                 series));
  }
  detail::write_file(r, c, "hyperweak_curves.csv", curves);

  std::string fam = "operator,function,l1_norm,max_Tf,sup_hyperweak_ratio,sup_weak11_ratio\n";
  std::string pr = "operator,n,side,l1_norm,sup_weak11_ratio,sup_hyperweak_ratio\n";
  std::vector<plot::Series> probe_series;
  for (const auto& op : c.hyperweak_operators) {
    plot::Series w{op + " weak (1,1)", {}, {}}, h{op + " hyperweak", {}, {}};
    for (const auto& row : rows) {
      if (row.op != op) continue;
      if (!row.probe) {
        fam += op + "," + row.function + "," + detail::fd(row.s.l1) + "," + detail::fd(row.s.max_Tf) + "," +
               detail::fd(row.s.sup_ratio) + "," + detail::fd(row.s.sup_weak11) + "\n";
        continue;
      }
      const double side = std::exp2(-row.n);
      pr += op + "," + std::to_string(row.n) + "," + detail::fd(side) + "," + detail::fd(row.s.l1) + "," +
            detail::fd(row.s.sup_weak11) + "," + detail::fd(row.s.sup_ratio) + "\n";
      w.x.push_back(side), w.y.push_back(row.s.sup_weak11);
      h.x.push_back(side), h.y.push_back(row.s.sup_ratio);
    }
    probe_series.push_back(w);
    probe_series.push_back(h);
  }
  detail::write_file(r, c, "hyperweak_family.csv", fam);
  detail::write_file(r, c, "hyperweak_probe.csv", pr);
  detail::write_file(r, c, "hyperweak_probe.svg",
                     plot::svg({"probe f_n = 4^n chi([0,2^-n)^2)", "side 2^-n", "sup over lambda", true, true, {0}},
                               probe_series));
  std::string fit = "operator,fitted_C,probe_weak11_growth,probe_hyperweak_growth\n";
  for (const auto& h : hyperweak_fits(rows, c.hyperweak_operators)) {
    fit += h.op + "," + detail::fd(h.fitted_C) + "," + detail::fd(h.weak11_growth) + "," +
           detail::fd(h.ratio_growth) + "\n";
    std::ostringstream note;
    note << h.op << ": fitted C " << h.fitted_C << ", probe weak(1,1) growth " << h.weak11_growth
         << ", probe hyperweak growth " << h.ratio_growth;
    r.notes.push_back(note.str());
  }
  detail::write_file(r, c, "hyperweak_fit.csv", fit);
  if (r.status) r.notes.push_back("non-finite values in a distribution curve");
  return r;
}

inline RunResult run_cubes(const ExperimentConfig& c) {
  RunResult r;
  const auto& q = c.cubes;
  const int d = q.model.dim();
  const Grid g(q.model, std::vector<double>(d, q.lo), std::vector<double>(d, q.hi), std::vector<int>(d, q.n));
  const CubeParams p = default_cube_params(q.model, q.coarsest, q.finest);
  const CubeSystem sys = build_verified(g, p, c.seed);
  std::ostringstream cubes;
  sys.write_csv(cubes, true);
  detail::write_file(r, c, "cubes.csv", cubes.str());

  std::string lv = "level,ell,cubes,min_members,max_members\n";
  plot::Series count{"cubes per level", {}, {}};
  for (int k = sys.coarsest_level(); k <= sys.finest_level(); ++k) {
    std::size_t lo = SIZE_MAX, hi = 0;
    for (int id : sys.level(k)) lo = std::min(lo, sys.cube(id).members.size()), hi = std::max(hi, sys.cube(id).members.size());
    lv += std::to_string(k) + "," + detail::fd(sys.side(k)) + "," + std::to_string(sys.level(k).size()) + "," +
          std::to_string(lo) + "," + std::to_string(hi) + "\n";
    count.x.push_back(sys.side(k));
    count.y.push_back(static_cast<double>(sys.level(k).size()));
  }
  detail::write_file(r, c, "cubes_levels.csv", lv);
  detail::write_file(r, c, "cubes_levels.svg",
                     plot::svg({"cubes per level", "side kappa^k", "count", true, true,
                                {-static_cast<double>(q.model.nu())}},
                               {count}));

  const CubeReport rep = sys.verify();
  const auto systems = build_adjacent(q.model, g.points(), p, q.systems, c.seed, &g);
  const AdjacencyReport adj = q.trials > 0 ? adjacency_stat(systems, q.trials, c.seed) : AdjacencyReport{};
  std::string rp = "quantity,value\n";
  auto add = [&](const std::string& k, const std::string& v) { rp += k + "," + v + "\n"; };
  add("samples", std::to_string(g.size()));
  add("cubes", std::to_string(sys.cubes().size()));
  add("partition_violations", std::to_string(rep.partition_violations));
  add("nesting_violations", std::to_string(rep.nesting_violations));
  add("inner_ball_violations", std::to_string(rep.inner_violations));
  add("outer_ball_violations", std::to_string(rep.outer_violations));
  add("ball_chain_violations", std::to_string(rep.ball_chain_violations));
  add("separation_violations", std::to_string(rep.separation_violations));
  add("covering_violations", std::to_string(rep.covering_violations));
  add("min_inner_ratio", detail::fd(rep.min_inner_ratio));
  add("max_outer_ratio", detail::fd(rep.max_outer_ratio));
  add("adjacent_systems", std::to_string(systems.size()));
  add("adjacency_trials", std::to_string(adj.trials));
  add("adjacency_successes", std::to_string(adj.successes));
  add("adjacency_fraction", detail::fd(adj.fraction()));
  detail::write_file(r, c, "cubes_report.csv", rp);
  std::ostringstream note;
  note << "cubes: " << sys.cubes().size() << " cubes on " << g.size() << " samples, " << rep.total()
       << " violations, adjacency " << adj.successes << "/" << adj.trials;
  r.notes.push_back(note.str());
  if (rep.total() != 0) r.status = 3;
  return r;
}

inline RunResult run_covering(const ExperimentConfig& c) {
  RunResult r;
  const auto& k = c.covering;
  const RectSpace sp = dyadic_unit_square(k.level);
  std::string runs = "seed,rectangles,first_pass,selected,E_measure,E_tilde_measure,recovery_ratio,"
                     "max_overlap_fraction,fitted_exponent,C_half,fit_points\n";
  std::string hist = "seed,n,overlap_measure,overlap_over_E\n";
  std::vector<plot::Series> series;
  double min_exp = INFINITY, C = 0, max_rec = 0;
  for (int s = 0; s < k.seeds; ++s) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(s);
    const auto fam = random_dyadic_family(sp, k.count, seed, k.family);
    const SelectionResult sel = cf_select(sp, fam, k.order);
    const OverlapFit fit = fit_overlap_decay(sel);
    runs += std::to_string(seed) + "," + std::to_string(fam.size()) + "," + std::to_string(sel.first_pass.size()) +
            "," + std::to_string(sel.selected.size()) + "," + detail::fd(sel.E) + "," + detail::fd(sel.E_tilde) +
            "," + detail::fd(sel.recovery_ratio) + "," + detail::fd(sel.max_overlap_fraction) + "," +
            detail::fd(fit.exponent) + "," + detail::fd(fit.C) + "," + std::to_string(fit.points) + "\n";
    plot::Series se{s < 10 ? "seed " + std::to_string(seed) : "", {}, {}};
    for (std::size_t n = 1; n < sel.overlap_hist.size(); ++n) {
      hist += std::to_string(seed) + "," + std::to_string(n) + "," + detail::fd(sel.overlap_hist[n]) + "," +
              detail::fd(sel.E > 0 ? sel.overlap_hist[n] / sel.E : 0.0) + "\n";
      se.x.push_back(static_cast<double>(n));
      se.y.push_back(sel.E > 0 ? sel.overlap_hist[n] / sel.E : 0.0);
    }
    series.push_back(std::move(se));
    min_exp = std::min(min_exp, fit.exponent);
    C = std::max(C, fit.C);
    if (!fam.empty()) max_rec = std::max(max_rec, sel.recovery_ratio);
  }
  detail::write_file(r, c, "covering_runs.csv", runs);
  detail::write_file(r, c, "covering_hist.csv", hist);
  const bool ok = max_rec <= 4 && min_exp >= k.min_exponent;
  std::string sum = "quantity,value\n";
  sum += "seeds," + std::to_string(k.seeds) + "\n";
  sum += "max_recovery_ratio," + detail::fd(max_rec) + "\n";
  sum += "min_fitted_exponent," + detail::fd(min_exp) + "\n";
  sum += "fitted_C_half," + detail::fd(C) + "\n";
  sum += "law_holds," + std::string(ok ? "1" : "0") + "\n";
  detail::write_file(r, c, "covering_summary.csv", sum);
  detail::write_file(r, c, "covering_hist.svg",
                     plot::svg({"overlap histogram / |E|", "multiplicity n", "|{sum chi >= n}| / |E|", false, true,
                                {-0.5}},
                               series));
  std::ostringstream note;
  note << "covering: max |E|/|E~| " << max_rec << ", min fitted exponent " << min_exp << ", C " << C;
  r.notes.push_back(note.str());
  if (!ok) {
    r.status = 3;
    r.notes.push_back("covering law violated (ratio > 4 or exponent below " + detail::fd(k.min_exponent) + ")");
  }
  return r;
}

inline TailOperator tail_operator(const std::string& s) {
  if (s == "area") return TailOperator::Area;
  if (s == "square") return TailOperator::Square;
  return TailOperator::DoubleRiesz;
}

inline RunResult run_atoms(const ExperimentConfig& c) {
  RunResult r;
  const auto& a = c.atoms;
  const Grid g = Grid::cube(GroupModel::abelian(1), a.lo, a.hi, a.n);
  const ProductFunction f = make_function(ProductGrid(g, g), a.function);
  const AtomicDecomposition D = decompose(f, a.params);

  std::ostringstream man;
  write_manifest(man, D);
  detail::write_file(r, c, "atoms_manifest.csv", man.str());

  std::string lv = "k,alpha,U_measure,Ustar_measure,Udagger_measure,maximal_rectangles,tents,patched,"
                   "energy,norm2,F_phi_down,F_phi_up,energy_ratio,norm_ratio,theorem_ratio,dagger_ratio,"
                   "support_violations\n";
  plot::Series er{"energy ratio", {}, {}}, tr{"||a_k||^2 / F_Phi(2^k f)", {}, {}};
  const double cin = f.grid.cell_measure(), cout = D.layout.out.cell_measure();
  double fitted = 0;
  for (const auto& l : D.levels) {
    lv += std::to_string(l.k) + "," + detail::fd(l.sets.alpha) + "," + detail::fd(l.sets.U.count() * cin) + "," +
          detail::fd(l.sets.Ustar.count() * cin) + "," + detail::fd(l.sets.Udagger.count() * cout) + "," +
          std::to_string(l.sets.maximal.size()) + "," + std::to_string(l.tents) + "," + std::to_string(l.patched) +
          "," + detail::fd(l.energy) + "," + detail::fd(l.norm2) + "," + detail::fd(l.F_down) + "," +
          detail::fd(l.F_up) + "," + detail::fd(l.energy_ratio()) + "," + detail::fd(l.norm_ratio()) + "," +
          detail::fd(l.theorem_ratio()) + "," + detail::fd(l.dagger_ratio()) + "," +
          std::to_string(l.support_violations) + "\n";
    er.x.push_back(std::exp2(l.k)), er.y.push_back(l.energy_ratio());
    tr.x.push_back(std::exp2(l.k)), tr.y.push_back(l.theorem_ratio());
    fitted = std::max(fitted, l.energy_ratio());
  }
  detail::write_file(r, c, "atoms_levels.csv", lv);
  detail::write_file(r, c, "atoms_energy.svg",
                     plot::svg({"atom energy per level", "2^k", "ratio", true, true, {0}}, {er, tr}));

  std::string tails = "operator,k,factor,beta_k,tail_integral,tail_times_2^k,max_sanity,rectangles\n";
  std::vector<plot::Series> ts;
  for (const auto& op : a.tails) {
    plot::Series se{op, {}, {}};
    for (int k = a.tail_k_min; k <= a.tail_k_max; ++k) {
      const TailReport t = tail_integral(D, k, tail_operator(op), a.tail);
      tails += op + "," + std::to_string(k) + "," + detail::fd(a.tail.factor) + "," +
               detail::fd(beta_k(D.layout, k)) + "," + detail::fd(t.total) + "," +
               detail::fd(t.total * std::exp2(k)) + "," + detail::fd(t.max_sanity) + "," +
               std::to_string(t.entries.size()) + "\n";
      se.x.push_back(std::exp2(k)), se.y.push_back(t.total);
    }
    ts.push_back(std::move(se));
  }
  detail::write_file(r, c, "atoms_tails.csv", tails);
  detail::write_file(r, c, "atoms_tails.svg",
                     plot::svg({"tail integral outside R-dagger", "2^k", "tail", true, true, {-0.5, -1}}, ts));

  const double fo = D.f_out.norm();
  std::string sum = "quantity,value\n";
  sum += "calderon_residual," + detail::fd(D.calderon_residual) + "\n";
  sum += "range_residual," + detail::fd(D.range_residual) + "\n";
  sum += "below_fraction," + detail::fd(fo > 0 ? D.below.norm() / fo : 0.0) + "\n";
  sum += "above_fraction," + detail::fd(fo > 0 ? D.above.norm() / fo : 0.0) + "\n";
  sum += "max_cancellation," + detail::fd(D.max_cancel) + "\n";
  sum += "support_violations," + std::to_string(D.support_violations) + "\n";
  sum += "fitted_energy_constant," + detail::fd(fitted) + "\n";
  detail::write_file(r, c, "atoms_summary.csv", sum);

  std::ostringstream note;
  note << "atoms: reconstruction residual " << D.range_residual << " (all tents " << D.calderon_residual
       << "), support violations " << D.support_violations << ", max cancellation " << D.max_cancel
       << ", fitted energy constant " << fitted;
  r.notes.push_back(note.str());
  if (D.support_violations != 0) r.status = 3;
  return r;
}

}  // namespace hyperweak
