#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hyperweak/error.hpp"
#include "hyperweak/fft.hpp"
#include "hyperweak/group.hpp"

namespace hyperweak {

using KernelFn = std::function<double(const GroupPoint&)>;

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Uniform cell-centred grid on a coordinate box. Row-major, last axis fastest.
class Grid {
 public:
  Grid() = default;
  Grid(GroupModel model, std::vector<double> lo, std::vector<double> hi, std::vector<int> dims)
      : model_(model), lo_(std::move(lo)), hi_(std::move(hi)), dims_(std::move(dims)) {
    const auto d = static_cast<std::size_t>(model_.dim());
    require(lo_.size() == d && hi_.size() == d && dims_.size() == d, ErrorCode::InvalidInput,
            "grid box and dims must match the model dimension");
    size_ = 1;
    for (std::size_t i = 0; i < d; ++i) {
      require(dims_[i] >= 1, ErrorCode::DegenerateDomain, "grid axis with no cells");
      require(hi_[i] > lo_[i], ErrorCode::DegenerateDomain, "empty grid box");
      size_ *= static_cast<std::size_t>(dims_[i]);
    }
  }
  // same box and cell count on every axis
  static Grid cube(GroupModel model, double lo, double hi, int n) {
    const auto d = static_cast<std::size_t>(model.dim());
    return Grid(model, std::vector<double>(d, lo), std::vector<double>(d, hi),
                std::vector<int>(d, n));
  }

  const GroupModel& model() const { return model_; }
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }
  const std::vector<int>& dims() const { return dims_; }
  int ndims() const { return static_cast<int>(dims_.size()); }
  std::size_t size() const { return size_; }
  double spacing(int axis) const { return (hi_[axis] - lo_[axis]) / dims_[axis]; }
  double cell_measure() const {
    double m = 1;
    for (int a = 0; a < ndims(); ++a) m *= spacing(a);
    return m;
  }
  double measure() const { return cell_measure() * static_cast<double>(size_); }
  double coord(int axis, int i) const { return lo_[axis] + (i + 0.5) * spacing(axis); }

  std::vector<int> unravel(std::size_t idx) const {
    std::vector<int> ii(dims_.size());
    for (int a = ndims() - 1; a >= 0; --a) {
      ii[a] = static_cast<int>(idx % dims_[a]);
      idx /= dims_[a];
    }
    return ii;
  }
  std::size_t ravel(const std::vector<int>& ii) const {
    std::size_t idx = 0;
    for (int a = 0; a < ndims(); ++a) idx = idx * dims_[a] + ii[a];
    return idx;
  }
  GroupPoint point(std::size_t idx) const {
    GroupPoint g(ndims());
    for (int a = ndims() - 1; a >= 0; --a) {
      g[a] = coord(a, static_cast<int>(idx % dims_[a]));
      idx /= dims_[a];
    }
    return g;
  }
  std::vector<GroupPoint> points() const {
    std::vector<GroupPoint> out(size_);
    for (std::size_t i = 0; i < size_; ++i) out[i] = point(i);
    return out;
  }
  // Cell containing g, or -1 outside the box.
  long locate(const GroupPoint& g) const {
    std::size_t idx = 0;
    for (int a = 0; a < ndims(); ++a) {
      const double u = (g[a] - lo_[a]) / spacing(a);
      if (!(u >= 0) || u >= dims_[a]) return -1;
      idx = idx * dims_[a] + static_cast<std::size_t>(u);
    }
    return static_cast<long>(idx);
  }
  bool same_shape(const Grid& o) const {
    return model_ == o.model_ && lo_ == o.lo_ && hi_ == o.hi_ && dims_ == o.dims_;
  }

 private:
  GroupModel model_ = GroupModel::abelian(1);
  std::vector<double> lo_, hi_;
  std::vector<int> dims_;
  std::size_t size_ = 0;
};

struct SampledFunction {
  Grid grid;
  std::vector<double> values;

  SampledFunction() = default;
  explicit SampledFunction(Grid g) : grid(std::move(g)), values(grid.size(), 0.0) {}
  SampledFunction(Grid g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
    require(values.size() == grid.size(), ErrorCode::InvalidInput, "value count != grid size");
    for (double x : values)
      require(std::isfinite(x), ErrorCode::InvalidInput, "non-finite sample");
  }
  static SampledFunction sample(const Grid& g, const KernelFn& f) {
    SampledFunction s(g);
    for (std::size_t i = 0; i < g.size(); ++i) s.values[i] = f(g.point(i));
    return s;
  }
};

inline double integrate(const SampledFunction& f) {
  double s = 0;
  for (double v : f.values) s += v;
  return s * f.grid.cell_measure();
}

inline double lp_norm(const SampledFunction& f, double p) {
  double s = 0;
  for (double v : f.values) s += std::pow(std::abs(v), p);
  return std::pow(s * f.grid.cell_measure(), 1.0 / p);
}

// zeta_t(g) = t^{-nu} zeta(delta_{1/t} g)
inline KernelFn normalized_dilate(const KernelFn& zeta, const GroupModel& m, double t) {
  require(t > 0, ErrorCode::InvalidInput, "dilation parameter must be positive");
  const double scale = std::pow(t, -m.nu());
  return [zeta, m, t, scale](const GroupPoint& g) { return scale * zeta(m.dilate(g, 1.0 / t)); };
}

// (f * k)(g) = sum_h f(h) k(h^{-1} g) |cell|, evaluated on out_grid. Outside the box f is 0.
inline SampledFunction convolve_direct(const SampledFunction& f, const KernelFn& k,
                                       const Grid& out_grid) {
  const GroupModel& m = f.grid.model();
  require(m == out_grid.model(), ErrorCode::InvalidInput, "model mismatch in convolution");
  SampledFunction out(out_grid);
  const auto src = f.grid.points();
  const double w = f.grid.cell_measure();
  for (std::size_t i = 0; i < out_grid.size(); ++i) {
    const GroupPoint g = out_grid.point(i);
    double s = 0;
    for (std::size_t j = 0; j < src.size(); ++j) {
      if (f.values[j] == 0.0) continue;
      s += f.values[j] * k(m.left_difference(src[j], g));
    }
    out.values[i] = s * w;
  }
  return out;
}

// Same discrete sum on an abelian grid, computed by zero-padded FFT.
inline SampledFunction convolve_fft(const SampledFunction& f, const KernelFn& k) {
  const Grid& g = f.grid;
  require(g.model().is_abelian(), ErrorCode::UnsupportedModel, "fft convolution needs abelian");
  const int d = g.ndims();
  std::vector<int> pdims(d);
  for (int a = 0; a < d; ++a) pdims[a] = 2 * g.dims()[a];
  RealFFT fft(pdims);
  std::vector<double> a(fft.real_size(), 0.0), b(fft.real_size(), 0.0);
  std::vector<int> ii(d);
  for (std::size_t idx = 0; idx < fft.real_size(); ++idx) {
    std::size_t r = idx;
    bool inside = true;
    GroupPoint off(d);
    for (int ax = d - 1; ax >= 0; --ax) {
      ii[ax] = static_cast<int>(r % pdims[ax]);
      r /= pdims[ax];
      const int n = g.dims()[ax];
      if (ii[ax] >= n) inside = false;
      int m = ii[ax] < n ? ii[ax] : ii[ax] - pdims[ax];
      if (ii[ax] == n) m = n;  // unused lag
      off[ax] = m * g.spacing(ax);
    }
    if (inside) a[idx] = f.values[g.ravel(ii)];
    bool lag_used = true;
    for (int ax = 0; ax < d; ++ax)
      if (ii[ax] == g.dims()[ax]) lag_used = false;
    if (lag_used) b[idx] = k(off);
  }
  auto c = circular_convolve(fft, a, b);
  SampledFunction out(g);
  const double w = g.cell_measure();
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    auto jj = g.unravel(idx);
    std::size_t p = 0;
    for (int ax = 0; ax < d; ++ax) p = p * pdims[ax] + jj[ax];
    out.values[idx] = c[p] * w;
  }
  return out;
}

inline SampledFunction convolve(const SampledFunction& f, const KernelFn& k, const Grid& out_grid) {
  if (f.grid.model().is_abelian() && f.grid.same_shape(out_grid)) return convolve_fft(f, k);
  return convolve_direct(f, k, out_grid);
}

struct MoleculeReport {
  double decay_constant = 0;      // sup |zeta| (1+rho)^{nu+eps}
  double holder_constant = 0;     // sup of the normalized difference quotient
  double cancellation_residual = 0;  // |integral of zeta| on the supplied grid
};

inline GroupPoint random_point_at_norm(const GroupModel& m, double r, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  GroupPoint u(m.dim());
  double rho = 0;
  while (rho == 0) {
    for (int i = 0; i < m.dim(); ++i) u[i] = nd(rng);
    rho = m.hom_norm(u);
  }
  return m.dilate(u, r / rho);
}

inline MoleculeReport molecule_check(const KernelFn& zeta, const GroupModel& m, double eps,
                                     double rmax, int samples, std::uint64_t seed,
                                     const Grid& cancellation_grid) {
  require(eps > 0 && eps <= 1, ErrorCode::InvalidParams, "molecule epsilon must be in (0,1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  MoleculeReport rep;
  for (int s = 0; s < samples; ++s) {
    const double r = rmax * std::pow(u01(rng), 2.0);
    const GroupPoint g = random_point_at_norm(m, r, rng);
    const double rho = m.hom_norm(g);
    const double zg = zeta(g);
    rep.decay_constant = std::max(rep.decay_constant, std::abs(zg) * std::pow(1 + rho, m.nu() + eps));
    const double smax = 0.5 * (1 + rho);
    const double sdist = smax * std::pow(u01(rng), 3.0) + 1e-9;
    const GroupPoint w = random_point_at_norm(m, sdist, rng);
    const GroupPoint g2 = m.multiply(w, g);  // g2 g^{-1} = w
    const double q = std::abs(zeta(g2) - zg) * std::pow(1 + rho, m.nu() + 2 * eps) /
                     std::pow(sdist, eps);
    rep.holder_constant = std::max(rep.holder_constant, q);
  }
  rep.cancellation_residual = std::abs(integrate(SampledFunction::sample(cancellation_grid, zeta)));
  return rep;
}

// ---- file formats ----------------------------------------------------------

inline void write_pgrd(const SampledFunction& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::Io, "cannot open " + path);
  const Grid& g = f.grid;
  std::string header = "PGRD v1 " + g.model().name() + " " + std::to_string(g.ndims());
  for (int d : g.dims()) header += " " + std::to_string(d);
  for (double v : g.lo()) header += " " + format_double(v);
  for (double v : g.hi()) header += " " + format_double(v);
  header += "\n";
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (double v : f.values) {
    unsigned char bytes[8];
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

inline SampledFunction read_pgrd(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::Io, "cannot open " + path);
  std::string line;
  std::getline(is, line);
  std::istringstream hs(line);
  std::string magic, ver, model;
  int nd = 0;
  hs >> magic >> ver >> model >> nd;
  require(magic == "PGRD" && ver == "v1", ErrorCode::InvalidInput, "not a PGRD v1 file");
  GroupModel m = GroupModel::parse(model);
  require(nd == m.dim(), ErrorCode::InvalidInput, "PGRD dimension mismatch");
  std::vector<int> dims(nd);
  std::vector<double> lo(nd), hi(nd);
  for (auto& d : dims) hs >> d;
  for (auto& v : lo) hs >> v;
  for (auto& v : hi) hs >> v;
  require(!hs.fail(), ErrorCode::InvalidInput, "malformed PGRD header");
  Grid g(m, lo, hi, dims);
  std::vector<double> vals(g.size());
  for (auto& v : vals) {
    unsigned char bytes[8];
    is.read(reinterpret_cast<char*>(bytes), 8);
    require(static_cast<bool>(is), ErrorCode::InvalidInput, "truncated PGRD payload");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    std::memcpy(&v, &u, 8);
  }
  return SampledFunction(g, std::move(vals));
}

inline void write_grid_csv(const SampledFunction& f, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorCode::Io, "cannot open " + path);
  const Grid& g = f.grid;
  os << "# model=" << g.model().name() << " dims=";
  for (int a = 0; a < g.ndims(); ++a) os << (a ? "x" : "") << g.dims()[a];
  os << " lo=";
  for (int a = 0; a < g.ndims(); ++a) os << (a ? ";" : "") << format_double(g.lo()[a]);
  os << " hi=";
  for (int a = 0; a < g.ndims(); ++a) os << (a ? ";" : "") << format_double(g.hi()[a]);
  os << "\nvalue\n";
  for (double v : f.values) os << format_double(v) << "\n";
}

inline SampledFunction read_grid_csv(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::Io, "cannot open " + path);
  std::string line;
  std::getline(is, line);
  require(line.rfind("# model=", 0) == 0, ErrorCode::InvalidInput, "missing grid CSV header");
  std::istringstream hs(line.substr(2));
  std::string tok, model;
  std::vector<int> dims;
  std::vector<double> lo, hi;
  auto split = [](const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == sep) { out.push_back(cur); cur.clear(); } else cur += c;
    }
    out.push_back(cur);
    return out;
  };
  while (hs >> tok) {
    auto eq = tok.find('=');
    require(eq != std::string::npos, ErrorCode::InvalidInput, "bad grid CSV header token");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "model") model = val;
    else if (key == "dims") for (auto& s : split(val, 'x')) dims.push_back(std::stoi(s));
    else if (key == "lo") for (auto& s : split(val, ';')) lo.push_back(std::stod(s));
    else if (key == "hi") for (auto& s : split(val, ';')) hi.push_back(std::stod(s));
  }
  Grid g(GroupModel::parse(model), lo, hi, dims);
  std::getline(is, line);
  require(line == "value", ErrorCode::InvalidInput, "missing value column header");
  std::vector<double> vals;
  vals.reserve(g.size());
  while (std::getline(is, line))
    if (!line.empty()) vals.push_back(std::stod(line));
  return SampledFunction(g, std::move(vals));
}

}  // namespace hyperweak
