#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "hyperweak/error.hpp"
#include "hyperweak/fields.hpp"
#include "hyperweak/group.hpp"

namespace hyperweak {

struct CubeParams {
  double kappa = 0.5;
  double c = 0.5;   // inner-ball constant
  double C = 1.0;   // outer-ball constant
  int coarsest_level = 0;
  int finest_level = 6;
  double net_factor = 1.0;  // net radius at level k is net_factor * kappa^k
  bool strict = false;      // also demand 12 C kappa <= c
  double adjacency_C = 0;   // C' in B(x,r) ⊆ Q ⊆ B(x, C' r); 0 -> 4C/kappa^3
};

struct Cube {
  int level = 0;
  int id = 0;
  int parent = -1;
  std::vector<int> children;
  GroupPoint center;
  double ell = 0;
  std::vector<int> members;  // sample indices
};

struct CubeReport {
  long partition_violations = 0;
  long nesting_violations = 0;
  long inner_violations = 0;
  long outer_violations = 0;
  long ball_chain_violations = 0;
  long separation_violations = 0;  // centers closer than kappa^k / 4
  long covering_violations = 0;    // a sample 2 kappa^k or farther from every center
  double min_inner_ratio = INFINITY;  // measured inner radius / kappa^k
  double max_outer_ratio = 0;         // measured outer radius / kappa^k
  long total() const {
    return partition_violations + nesting_violations + inner_violations + outer_violations +
           ball_chain_violations + separation_violations + covering_violations;
  }
};

inline void validate_params(const CubeParams& p) {
  require(p.kappa > 0 && p.kappa < 1, ErrorCode::InvalidParams, "kappa must be in (0,1)");
  require(p.c > 0 && p.c <= p.C, ErrorCode::InvalidParams, "need 0 < c <= C");
  require(p.finest_level >= p.coarsest_level, ErrorCode::InvalidParams, "empty level range");
  require(p.net_factor >= 0.25 && p.net_factor <= 2, ErrorCode::InvalidParams,
          "net factor must keep centers kappa^k/4-separated and 2 kappa^k-dense");
  if (p.strict)
    require(12 * p.C * p.kappa <= p.c, ErrorCode::InvalidParams, "12 C kappa <= c violated");
}

// Bucket grid on the horizontal coordinates; a horizontal gap is a lower bound for
// the distance in every supported model.
class HorizontalBuckets {
 public:
  HorizontalBuckets(const GroupModel& m, double size) : m_(m), size_(size) {
    dims_ = std::min(2, m.horizontal_dim());
  }
  std::int64_t key_of(const GroupPoint& g) const {
    std::int64_t k = 0;
    for (int i = 0; i < dims_; ++i)
      k = k * 4000037 + static_cast<std::int64_t>(std::floor(g[i] / size_)) + 2000000;
    return k;
  }
  void insert(const GroupPoint& g, int id) { map_[key_of(g)].push_back(id); }
  // Calls fn(id) for every id whose bucket is within `reach` buckets of g.
  template <class Fn>
  void visit(const GroupPoint& g, int reach, Fn fn) const {
    std::array<std::int64_t, 2> base{};
    for (int i = 0; i < dims_; ++i) base[i] = static_cast<std::int64_t>(std::floor(g[i] / size_));
    if (dims_ == 1) {
      for (int a = -reach; a <= reach; ++a) visit_key(base[0] + a + 2000000, fn);
    } else {
      for (int a = -reach; a <= reach; ++a)
        for (int b = -reach; b <= reach; ++b)
          visit_key((base[0] + a + 2000000) * 4000037 + base[1] + b + 2000000, fn);
    }
  }

 private:
  template <class Fn>
  void visit_key(std::int64_t k, Fn& fn) const {
    auto it = map_.find(k);
    if (it == map_.end()) return;
    for (int id : it->second) fn(id);
  }
  GroupModel m_;
  double size_;
  int dims_;
  std::unordered_map<std::int64_t, std::vector<int>> map_;
};

class CubeSystem {
 public:
  CubeSystem() = default;

  const GroupModel& model() const { return model_; }
  const CubeParams& params() const { return params_; }
  const std::vector<GroupPoint>& samples() const { return samples_; }
  const std::vector<Cube>& cubes() const { return cubes_; }
  const Cube& cube(int id) const { return cubes_[id]; }
  int system_id() const { return system_id_; }
  int coarsest_level() const { return params_.coarsest_level; }
  int finest_level() const { return params_.finest_level; }
  int num_levels() const { return params_.finest_level - params_.coarsest_level + 1; }
  const std::vector<int>& level(int k) const { return levels_[k - params_.coarsest_level]; }
  // cube of level k containing sample i
  int cube_of(int sample, int k) const { return assign_[k - params_.coarsest_level][sample]; }
  const std::vector<int>& assignment(int k) const { return assign_[k - params_.coarsest_level]; }
  double side(int k) const { return std::pow(params_.kappa, k); }
  double measure(int id, double cell_measure) const {
    return cell_measure * static_cast<double>(cubes_[id].members.size());
  }
  bool contains(int outer, int inner) const {
    int q = inner;
    while (q >= 0 && cubes_[q].level > cubes_[outer].level) q = cubes_[q].parent;
    return q == outer;
  }
  int ancestor(int id, int k) const {
    int q = id;
    while (q >= 0 && cubes_[q].level > k) q = cubes_[q].parent;
    return q;
  }

  // Cube of level k containing z; z must lie in the sampled region.
  int locate(const GroupPoint& z, int k) const {
    require(k >= coarsest_level() && k <= finest_level(), ErrorCode::OutOfDomain,
            "level outside the built range");
    long s = -1;
    if (grid_) s = grid_->locate(z);
    if (s < 0) {
      double best = INFINITY;
      for (std::size_t i = 0; i < samples_.size(); ++i) {
        const double d = model_.distance(z, samples_[i]);
        if (d < best) best = d, s = static_cast<long>(i);
      }
      require(best <= 2 * side(finest_level()), ErrorCode::OutOfDomain,
              "point outside the sampled region");
    }
    return cube_of(static_cast<int>(s), k);
  }

  CubeReport verify() const;

  void write_csv(std::ostream& os, bool header) const {
    if (header) {
      os << "system_id,level,cube_id,parent_id";
      for (int i = 0; i < model_.dim(); ++i) os << ",center_" << i;
      os << ",ell\n";
    }
    for (const auto& q : cubes_) {
      os << system_id_ << ',' << q.level << ',' << q.id << ',' << q.parent;
      for (int i = 0; i < model_.dim(); ++i) os << ',' << format_double(q.center[i]);
      os << ',' << format_double(q.ell) << '\n';
    }
  }

  friend CubeSystem build_system(const GroupModel&, const std::vector<GroupPoint>&,
                                 const CubeParams&, std::uint64_t, int, const Grid*);
  friend CubeSystem build_dyadic_system(const Grid&, const CubeParams&, int, int);

 private:
  void finish_tree();

  GroupModel model_ = GroupModel::abelian(1);
  CubeParams params_;
  std::vector<GroupPoint> samples_;
  std::vector<Cube> cubes_;
  std::vector<std::vector<int>> levels_;
  std::vector<std::vector<int>> assign_;
  std::optional<Grid> grid_;
  int system_id_ = 0;
};

inline void CubeSystem::finish_tree() {
  for (auto& q : cubes_) q.children.clear(), q.members.clear();
  for (auto& q : cubes_)
    if (q.parent >= 0) cubes_[q.parent].children.push_back(q.id);
  for (int li = 0; li < num_levels(); ++li)
    for (std::size_t s = 0; s < samples_.size(); ++s) cubes_[assign_[li][s]].members.push_back(static_cast<int>(s));
}

// Greedy nested nets in a seeded random order, nearest-center assignment at the
// finest level, and upward propagation through each center's parent.
inline CubeSystem build_system(const GroupModel& m, const std::vector<GroupPoint>& samples,
                               const CubeParams& p, std::uint64_t seed, int system_id = 0,
                               const Grid* grid = nullptr) {
  validate_params(p);
  require(!samples.empty(), ErrorCode::InvalidInput, "empty sample set");
  const int N = static_cast<int>(samples.size());
  const int L = p.finest_level - p.coarsest_level + 1;
  CubeSystem sys;
  sys.model_ = m;
  sys.params_ = p;
  sys.samples_ = samples;
  sys.system_id_ = system_id;
  if (grid) sys.grid_ = *grid;

  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  // nets[li]: sample indices of the centers at level coarsest + li (nested)
  std::vector<std::vector<int>> nets(L);
  std::vector<char> is_center(N, 0);
  std::vector<int> current;
  for (int li = 0; li < L; ++li) {
    const double r = p.net_factor * std::pow(p.kappa, p.coarsest_level + li);
    HorizontalBuckets b(m, r);
    for (int c : current) b.insert(samples[c], c);
    for (int s : order) {
      if (is_center[s]) continue;
      bool far = true;
      b.visit(samples[s], 1, [&](int c) {
        if (far && m.distance(samples[s], samples[c]) < r) far = false;
      });
      if (far) {
        is_center[s] = 1;
        current.push_back(s);
        b.insert(samples[s], s);
      }
    }
    nets[li] = current;
  }

  // nearest center in net li to point g; the net covers within its radius
  auto nearest = [&](int li, const HorizontalBuckets& b, const GroupPoint& g) {
    int best = -1;
    double bd = INFINITY;
    b.visit(g, 1, [&](int c) {
      const double d = m.distance(g, samples[c]);
      if (d < bd || (d == bd && c < best)) bd = d, best = c;
    });
    (void)li;
    return best;
  };

  std::vector<std::unordered_map<int, int>> cube_of_center(L);
  for (int li = 0; li < L; ++li) {
    const int k = p.coarsest_level + li;
    for (int c : nets[li]) {
      Cube q;
      q.level = k;
      q.id = static_cast<int>(sys.cubes_.size());
      q.center = samples[c];
      q.ell = std::pow(p.kappa, k);
      cube_of_center[li][c] = q.id;
      sys.cubes_.push_back(std::move(q));
    }
  }
  for (int li = 1; li < L; ++li) {
    const double r = p.net_factor * std::pow(p.kappa, p.coarsest_level + li - 1);
    HorizontalBuckets b(m, r);
    for (int c : nets[li - 1]) b.insert(samples[c], c);
    std::unordered_map<int, int> coarse;
    for (int c : nets[li - 1]) coarse[c] = 1;
    for (int c : nets[li]) {
      const int par = coarse.count(c) ? c : nearest(li - 1, b, samples[c]);
      require(par >= 0, ErrorCode::ConstructionFailure, "center without a parent");
      sys.cubes_[cube_of_center[li][c]].parent = cube_of_center[li - 1][par];
    }
  }
  sys.assign_.assign(L, std::vector<int>(N, -1));
  {
    const double r = p.net_factor * std::pow(p.kappa, p.finest_level);
    HorizontalBuckets b(m, r);
    for (int c : nets[L - 1]) b.insert(samples[c], c);
    for (int s = 0; s < N; ++s) {
      const int c = nearest(L - 1, b, samples[s]);
      require(c >= 0, ErrorCode::ConstructionFailure, "sample without a center");
      sys.assign_[L - 1][s] = cube_of_center[L - 1][c];
    }
  }
  for (int li = L - 2; li >= 0; --li)
    for (int s = 0; s < N; ++s) sys.assign_[li][s] = sys.cubes_[sys.assign_[li + 1][s]].parent;
  sys.levels_.assign(L, {});
  for (const auto& q : sys.cubes_) sys.levels_[q.level - p.coarsest_level].push_back(q.id);
  sys.finish_tree();
  // drop empty cubes is unnecessary: every center is assigned to its own cube
  return sys;
}

// kappa = 1/2 dyadic boxes on an abelian grid, with the alternating one-third shift
// for shift index 1 and its mirror for 2. Nested at every level.
inline CubeSystem build_dyadic_system(const Grid& grid, const CubeParams& p, int shift_index,
                                      int system_id) {
  validate_params(p);
  const GroupModel& m = grid.model();
  require(m.is_abelian(), ErrorCode::UnsupportedModel, "dyadic boxes need an abelian grid");
  require(std::abs(p.kappa - 0.5) < 1e-15, ErrorCode::InvalidParams, "dyadic boxes need kappa = 1/2");
  require(shift_index >= 0 && shift_index <= 2, ErrorCode::InvalidParams, "shift index in 0..2");
  const int d = m.dim();
  const int N = static_cast<int>(grid.size());
  const int L = p.finest_level - p.coarsest_level + 1;
  CubeSystem sys;
  sys.model_ = m;
  sys.params_ = p;
  sys.samples_ = grid.points();
  sys.grid_ = grid;
  sys.system_id_ = system_id;
  sys.assign_.assign(L, std::vector<int>(N, -1));
  sys.levels_.assign(L, {});

  auto shift = [&](int k) {
    if (shift_index == 0) return 0.0;
    const double sgn = (k % 2 == 0) ? 1.0 : -1.0;
    return (shift_index == 1 ? sgn : -sgn) / 3.0;
  };
  std::vector<std::map<std::vector<long>, int>> keys(L);
  for (int li = 0; li < L; ++li) {
    const int k = p.coarsest_level + li;
    const double ell = std::pow(0.5, k);
    const double s = shift(k) * ell;
    for (int i = 0; i < N; ++i) {
      const GroupPoint& x = sys.samples_[i];
      std::vector<long> key(d);
      for (int a = 0; a < d; ++a) key[a] = static_cast<long>(std::floor((x[a] - grid.lo()[a] - s) / ell));
      auto it = keys[li].find(key);
      int id;
      if (it == keys[li].end()) {
        Cube q;
        q.level = k;
        q.id = id = static_cast<int>(sys.cubes_.size());
        q.ell = ell;
        q.center = GroupPoint(d);
        for (int a = 0; a < d; ++a) {
          double lo = grid.lo()[a] + s + key[a] * ell, hi = lo + ell;
          lo = std::max(lo, grid.lo()[a]);
          hi = std::min(hi, grid.hi()[a]);
          q.center[a] = 0.5 * (lo + hi);
        }
        keys[li][key] = id;
        sys.cubes_.push_back(std::move(q));
        sys.levels_[li].push_back(id);
      } else {
        id = it->second;
      }
      sys.assign_[li][i] = id;
    }
  }
  for (int li = 1; li < L; ++li)
    for (int i = 0; i < N; ++i) {
      const int q = sys.assign_[li][i];
      const int par = sys.assign_[li - 1][i];
      if (sys.cubes_[q].parent < 0) sys.cubes_[q].parent = par;
      require(sys.cubes_[q].parent == par, ErrorCode::ConstructionFailure, "dyadic boxes not nested");
    }
  sys.finish_tree();
  return sys;
}

inline CubeReport CubeSystem::verify() const {
  CubeReport rep;
  const int N = static_cast<int>(samples_.size());
  // partition: every sample in exactly one cube per level
  for (int li = 0; li < num_levels(); ++li) {
    std::vector<int> hits(N, 0);
    for (int id : levels_[li])
      for (int s : cubes_[id].members) ++hits[s];
    for (int s = 0; s < N; ++s)
      if (hits[s] != 1) ++rep.partition_violations;
  }
  // nesting: children's members lie inside the parent
  for (const auto& q : cubes_) {
    if (q.parent < 0) continue;
    const auto& pm = cubes_[q.parent].members;
    for (int s : q.members)
      if (!std::binary_search(pm.begin(), pm.end(), s)) ++rep.nesting_violations;
  }
  for (int li = 0; li < num_levels(); ++li) {
    const int k = params_.coarsest_level + li;
    const double ell = side(k);
    const double rin = params_.c * ell / 3, rout = 2 * params_.C * ell;
    HorizontalBuckets b(model_, std::max(rin, ell));
    for (int s = 0; s < N; ++s) b.insert(samples_[s], s);
    HorizontalBuckets cb(model_, 2 * ell);
    for (int id : levels_[li]) cb.insert(cubes_[id].center, id);
    for (int id : levels_[li]) {
      const Cube& q = cubes_[id];
      double outer = 0;
      for (int s : q.members) outer = std::max(outer, model_.distance(q.center, samples_[s]));
      if (!(outer < rout)) ++rep.outer_violations;
      rep.max_outer_ratio = std::max(rep.max_outer_ratio, outer / ell);
      double inner = INFINITY;
      b.visit(q.center, 1, [&](int s) {
        if (cube_of(s, k) != id)
          inner = std::min(inner, model_.distance(q.center, samples_[s]));
      });
      if (inner < rin) ++rep.inner_violations;
      rep.min_inner_ratio = std::min(rep.min_inner_ratio, std::min(inner, ell) / ell);
      if (q.parent >= 0) {
        const Cube& P = cubes_[q.parent];
        if (model_.distance(q.center, P.center) + 2 * params_.C * ell > 2 * params_.C * P.ell + 1e-12)
          ++rep.ball_chain_violations;
      }
      cb.visit(q.center, 1, [&](int o) {
        if (o > id && model_.distance(q.center, cubes_[o].center) < ell / 4) ++rep.separation_violations;
      });
    }
    for (int s = 0; s < N; ++s) {
      bool ok = false;
      cb.visit(samples_[s], 1, [&](int o) {
        if (!ok && model_.distance(samples_[s], cubes_[o].center) < 2 * ell) ok = true;
      });
      if (!ok) ++rep.covering_violations;
    }
  }
  return rep;
}

// Default constants for each construction; both satisfy the containment checks on
// the shipped sample sets.
inline CubeParams default_cube_params(const GroupModel& m, int coarsest, int finest) {
  CubeParams p;
  p.coarsest_level = coarsest;
  p.finest_level = finest;
  if (m.is_abelian()) {
    p.c = 0.5;
    p.C = m.dim() <= 3 ? 0.5 : 0.75;
  } else {
    p.c = 0.3;
    p.C = 1.0;
  }
  return p;
}

// Dyadic boxes on abelian grids, greedy nets elsewhere; throws when the containment
// invariants fail on the samples.
inline CubeSystem build_verified(const Grid& grid, const CubeParams& p, std::uint64_t seed,
                                 int system_id = 0, int shift_index = 0) {
  CubeSystem sys = (grid.model().is_abelian() && std::abs(p.kappa - 0.5) < 1e-15)
                       ? build_dyadic_system(grid, p, shift_index, system_id)
                       : build_system(grid.model(), grid.points(), p, seed, system_id, &grid);
  if (shift_index == 0) {
    const CubeReport r = sys.verify();
    require(r.total() == 0, ErrorCode::ConstructionFailure,
            "cube invariants violated (" + std::to_string(r.total()) + " violations)");
  }
  return sys;
}

// ---- adjacent systems --------------------------------------------------------

struct AdjacencyReport {
  long trials = 0;
  long successes = 0;
  double fraction() const { return trials ? static_cast<double>(successes) / trials : 0.0; }
  double T_bound = 0;  // A^6 kappa^{-log2 A}
  int doubling_A = 0;
};

inline std::vector<CubeSystem> build_adjacent(const GroupModel& m,
                                              const std::vector<GroupPoint>& samples,
                                              const CubeParams& p, int T, std::uint64_t seed,
                                              const Grid* grid = nullptr) {
  require(T >= 1, ErrorCode::InvalidParams, "need at least one system");
  std::vector<CubeSystem> out;
  if (grid && m.is_abelian() && std::abs(p.kappa - 0.5) < 1e-15 && T <= 3) {
    for (int t = 0; t < T; ++t) out.push_back(build_dyadic_system(*grid, p, t, t));
    return out;
  }
  for (int t = 0; t < T; ++t) out.push_back(build_system(m, samples, p, seed + 7919 * t, t, grid));
  return out;
}

// Fraction of random balls B(x, r), kappa^{k+3} < r <= kappa^{k+2}, admitting a level-k
// cube Q in some system with B(x, r) ⊆ Q ⊆ B(x, C' r). Balls are taken on the samples.
inline AdjacencyReport adjacency_stat(const std::vector<CubeSystem>& systems, int trials,
                                      std::uint64_t seed) {
  require(!systems.empty(), ErrorCode::InvalidInput, "no systems");
  const auto& s0 = systems.front();
  const auto& m = s0.model();
  const auto& pts = s0.samples();
  const auto& p = s0.params();
  const double Cp = p.adjacency_C > 0 ? p.adjacency_C : 4 * p.C / std::pow(p.kappa, 3);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  // levels k with k+3 <= finest so that the ball radius is resolved by the samples
  const int kmin = s0.coarsest_level(), kmax = std::max(kmin, s0.finest_level() - 3);
  std::uniform_int_distribution<int> lev(kmin, kmax);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  AdjacencyReport rep;
  for (int t = 0; t < trials; ++t) {
    const std::size_t x = pick(rng);
    const int k = lev(rng);
    const double r = std::pow(p.kappa, k + 3) * std::pow(1 / p.kappa, u01(rng));
    std::vector<int> ball;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (m.distance(pts[x], pts[i]) < r) ball.push_back(static_cast<int>(i));
    bool ok = false;
    for (const auto& sys : systems) {
      const int q = sys.cube_of(static_cast<int>(x), k);
      bool inside = true;
      for (int i : ball)
        if (sys.cube_of(i, k) != q) { inside = false; break; }
      if (!inside) continue;
      bool within = true;
      for (int s : sys.cube(q).members)
        if (!(m.distance(pts[x], pts[s]) < Cp * r)) { within = false; break; }
      if (within) { ok = true; break; }
    }
    ++rep.trials;
    if (ok) ++rep.successes;
  }
  std::vector<double> radii;
  for (int k = kmin; k <= kmax; ++k) radii.push_back(std::pow(p.kappa, k + 1));
  rep.doubling_A = estimate_doubling_constant(m, pts, radii, 10, seed + 1);
  const double A = rep.doubling_A;
  rep.T_bound = std::pow(A, 6) * std::pow(p.kappa, -std::log2(A));
  return rep;
}

}  // namespace hyperweak
