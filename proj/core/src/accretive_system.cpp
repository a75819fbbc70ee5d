#include "dyadic/accretive_system.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace dyadic {

AccretiveSystem::AccretiveSystem(Lattice lat, double delta, double c, std::map<CubeIndex, Eigen::VectorXd> entries)
    : lat_(std::move(lat)), delta_(delta), c_(c), entries_(std::move(entries)) {
  if (!entries_.count(lat_.root())) throw Error("accretive system: root entry required");
  source_.assign(static_cast<std::size_t>(lat_.num_cubes()), kNoCube);
  for (const auto& [q, v] : entries_) {
    if (q < 0 || q >= lat_.num_cubes()) throw ShapeError("accretive system: entry cube out of range");
    if (v.size() != lat_.leaves(q).size())
      throw ShapeError("accretive system: entry for " + lat_.cube(q).to_string() + " has wrong length");
  }
  for (CubeIndex q = 0; q < lat_.num_cubes(); ++q)
    source_[static_cast<std::size_t>(q)] = entries_.count(q) ? q : source_[static_cast<std::size_t>(lat_.parent(q))];
}

AccretiveSystem AccretiveSystem::constant(const StepFunction& b, double delta, double c) {
  std::map<CubeIndex, Eigen::VectorXd> e;
  e.emplace(b.lattice.root(), b.values);
  return {b.lattice, delta, c, std::move(e)};
}

AccretiveSystem AccretiveSystem::table(const Lattice& lat, double delta, double c,
                                       std::map<CubeIndex, Eigen::VectorXd> entries) {
  return {lat, delta, c, std::move(entries)};
}

Eigen::VectorXd AccretiveSystem::b_local(CubeIndex q) const {
  const CubeIndex s = source(q);
  const auto& v = entries_.at(s);
  return v.segment(lat_.leaves(q).begin - lat_.leaves(s).begin, lat_.leaves(q).size());
}

StepFunction AccretiveSystem::b(CubeIndex q) const {
  StepFunction f(lat_);
  seg(f.values, lat_, q) = b_local(q);
  return f;
}

std::vector<bool> AccretiveSystem::change_set(double tol) const {
  std::vector<bool> in(static_cast<std::size_t>(lat_.num_cubes()), false);
  for (const auto& [q, v] : entries_) {
    if (q == lat_.root()) continue;
    const Eigen::VectorXd up = b_local(lat_.parent(q));
    const auto off = lat_.leaves(q).begin - lat_.leaves(lat_.parent(q)).begin;
    in[static_cast<std::size_t>(q)] = (v - up.segment(off, v.size())).cwiseAbs().maxCoeff() > tol;
  }
  return in;
}

SystemReport verify_system(const AccretiveSystem& sys, const Measure& m) {
  require_same(sys.lattice(), m.lattice(), "verify_system");
  const Lattice& lat = m.lattice();
  SystemReport rep;
  for (const auto& [q, v] : sys.entries()) {
    const auto w = seg(m.weights(), lat, q);
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (w[i] > 0.0) rep.c = std::max(rep.c, std::abs(v[i]));
  }
  if (rep.c > sys.c() * (1 + 1e-12)) rep.violations.push_back({lat.root(), "sup |b_Q| exceeds c", rep.c});

  rep.delta = std::numeric_limits<double>::infinity();
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q) {
    const double mq = m.mass(q);
    if (mq <= 0.0) continue;
    const double a = std::abs(sys.b_local(q).dot(seg(m.weights(), lat, q))) / mq;
    rep.delta = std::min(rep.delta, a);
    if (a < sys.delta() * (1 - 1e-12)) rep.violations.push_back({q, "|<b_Q>_Q| below delta", a});
  }
  if (!std::isfinite(rep.delta)) rep.delta = 0.0;

  rep.in_change_set = sys.change_set();
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q)
    if (rep.in_change_set[static_cast<std::size_t>(q)]) rep.change_set.push_back(q);
  rep.sparsity = sparsity_check(rep.in_change_set, m);
  if (!std::isfinite(rep.sparsity)) rep.violations.push_back({lat.root(), "change set not sparse", rep.sparsity});

  const auto& prov = sys.provenance();
  if (!prov.empty()) {
    for (CubeIndex q : rep.change_set)
      if (prov[static_cast<std::size_t>(q)] != q) {
        rep.provenance_consistent = false;
        rep.violations.push_back({q, "change-set cube missing from provenance", 0.0});
      }
  }
  rep.ok = rep.violations.empty();
  return rep;
}

bool PairedSystem::ok() const {
  return r1.ok && r2.ok && std::isfinite(lambda_b1_nu) && std::isfinite(lambda_b2_mu);
}

PairedSystem make_paired(AccretiveSystem b1, AccretiveSystem b2, const Measure& mu, const Measure& nu) {
  require_same(mu.lattice(), nu.lattice(), "make_paired");
  PairedSystem p{std::move(b1), std::move(b2), {}, {}, 0.0, 0.0};
  p.r1 = verify_system(p.b1, mu);
  p.r2 = verify_system(p.b2, nu);
  p.lambda_b1_nu = sparsity_check(p.r1.in_change_set, nu);
  p.lambda_b2_mu = sparsity_check(p.r2.in_change_set, mu);
  return p;
}

Partition partition(const std::vector<bool>& in_set, const Lattice& lat) {
  Partition part;
  part.in_set = in_set;
  part.in_set.resize(static_cast<std::size_t>(lat.num_cubes()), false);
  part.p.assign(static_cast<std::size_t>(lat.num_cubes()), kNoCube);
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q) {
    if (part.in_set[static_cast<std::size_t>(q)]) part.p[static_cast<std::size_t>(q)] = q;
    else if (q != lat.root()) part.p[static_cast<std::size_t>(q)] = part.p[static_cast<std::size_t>(lat.parent(q))];
  }
  return part;
}

Partition partition(const AccretiveSystem& sys) { return partition(sys.change_set(), sys.lattice()); }

StepFunction global_b(const AccretiveSystem& sys, const Partition& part) {
  const Lattice& lat = sys.lattice();
  StepFunction b(lat);
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q) {
    if (part.in_db(q)) continue;
    const Eigen::VectorXd v = sys.b_local(q);
    if (q != lat.root()) {
      // Parent is in C_b too; its value on Q is already written.
      const double gap = (seg(b.values, lat, q) - v).cwiseAbs().maxCoeff();
      if (gap > 1e-12 * std::max(1.0, sys.c()))
        throw Error("global_b: inconsistent system at " + lat.cube(q).to_string());
    }
    seg(b.values, lat, q) = v;
  }
  return b;
}

SystemCalculus::SystemCalculus(AccretiveSystem sys, Measure m) : AdaptedFrame(std::move(m)), sys_(std::move(sys)) {
  require_same(sys_.lattice(), measure().lattice(), "SystemCalculus");
  in_s_ = sys_.change_set();
  init_means();
  const double zero = 1e-14 * std::max(1.0, sys_.c());
  for (CubeIndex q = 0; q < lattice().num_cubes(); ++q)
    if (measure().mass(q) > 0.0 && std::abs(b_mean(q)) <= zero)
      throw NotAccretiveError("system has vanishing average at " + lattice().cube(q).to_string());
}

Eigen::VectorXd SystemCalculus::b_local(CubeIndex q) const { return sys_.b_local(q); }

Eigen::VectorXd SystemCalculus::adjoint_difference_local(CubeIndex q, const Eigen::VectorXd& g_on_q) const {
  const Lattice& lat = lattice();
  if (lat.is_leaf(q)) throw DepthError("adjoint difference on a leaf cube");
  const auto& w = measure().weights();
  const auto base = lat.leaves(q).begin;
  auto pair_ratio = [&](CubeIndex c) {
    const double den = measure().mass(c) * b_mean(c);
    if (den == 0.0) return 0.0;
    const auto r = lat.leaves(c);
    return b_local(c).cwiseProduct(g_on_q.segment(r.begin - base, r.size())).dot(seg(w, lat, c)) / den;
  };
  const double top = pair_ratio(q);
  Eigen::VectorXd out(lat.leaves(q).size());
  for (CubeIndex c : lat.children(q)) {
    const auto r = lat.leaves(c);
    out.segment(r.begin - base, r.size()).setConstant(pair_ratio(c) - top);
  }
  return out;
}

std::vector<DefectPiece> SystemCalculus::defect(CubeIndex q, const Eigen::VectorXd& f) const {
  const Lattice& lat = lattice();
  std::vector<DefectPiece> out;
  if (lat.is_leaf(q)) return out;
  const double rq = ratio(q, f);
  const Eigen::VectorXd bq = b_local(q);
  const auto base = lat.leaves(q).begin;
  for (CubeIndex p : lat.children(q)) {
    if (!in_s_[static_cast<std::size_t>(p)]) continue;
    const auto r = lat.leaves(p);
    const Eigen::VectorXd bq_on_p = bq.segment(r.begin - base, r.size());
    const double mp = measure().mass(p);
    const double bqp = mp > 0.0 ? bq_on_p.dot(seg(measure().weights(), lat, p)) / mp : 0.0;
    const double bp = b_mean(p);
    const double k = bp != 0.0 ? bqp / bp : 0.0;
    out.push_back({p, rq * (k * b_local(p) - bq_on_p)});
  }
  return out;
}

CubeSequence SystemCalculus::beta_sequence() const {
  const Lattice& lat = lattice();
  CubeSequence beta(static_cast<std::size_t>(lat.num_cubes()), 0.0);
  for (CubeIndex q = 1; q < lat.num_cubes(); ++q) {
    if (in_s_[static_cast<std::size_t>(q)]) continue;
    const double mq = measure().mass(q);
    if (mq <= 0.0) continue;
    const CubeIndex up = lat.parent(q);
    const auto off = lat.leaves(q).begin - lat.leaves(up).begin;
    const double on_q = b_local(up).segment(off, lat.leaves(q).size()).dot(seg(measure().weights(), lat, q)) / mq;
    const double d = on_q - b_mean(up);
    beta[static_cast<std::size_t>(q)] = d * d * mq;
  }
  return beta;
}

double stopping_tau(double delta, double c, double theta) { return (c - delta) / (c - theta); }

StoppingResult stopping_construction(const StopProvider& provider, const Measure& m, double delta, double c,
                                     double theta) {
  const Lattice& lat = m.lattice();
  if (!(delta > 0.0 && theta < delta && delta <= c)) throw Error("stopping: need 0 < theta < delta <= c");
  const auto& w = m.weights();
  std::map<CubeIndex, Eigen::VectorXd> entries;
  std::vector<CubeIndex> prov(static_cast<std::size_t>(lat.num_cubes()), kNoCube);
  std::vector<int> level(static_cast<std::size_t>(lat.num_cubes()), 0);
  std::vector<CubeIndex> stops;
  std::vector<StopRatio> ratios;

  std::deque<CubeIndex> queue{lat.root()};
  while (!queue.empty()) {
    const CubeIndex R = queue.front();
    queue.pop_front();
    stops.push_back(R);
    const Eigen::VectorXd bt = provider(R);
    if (bt.size() != lat.num_leaves()) throw ShapeError("stopping: provider returned wrong length");
    const Eigen::VectorXd local = seg(bt, lat, R);
    const auto wr = seg(w, lat, R);
    double sup = 0.0;
    for (Eigen::Index i = 0; i < local.size(); ++i)
      if (wr[i] > 0.0) sup = std::max(sup, std::abs(local[i]));
    const double mr = m.mass(R);
    if (sup > c * (1 + 1e-12) || std::abs(local.dot(wr)) < delta * mr * (1 - 1e-12))
      throw Error("stopping: test function at " + lat.cube(R).to_string() + " violates its stated constants");
    entries.emplace(R, local);
    prov[static_cast<std::size_t>(R)] = R;

    // Depth-first scan below R for maximal cubes whose b-tilde integral drops under theta.
    const auto base = lat.leaves(R).begin;
    double stopped_mass = 0.0;
    std::vector<CubeIndex> stack(lat.children(R).begin(), lat.children(R).end());
    while (!stack.empty()) {
      const CubeIndex Q = stack.back();
      stack.pop_back();
      const auto r = lat.leaves(Q);
      const double in = local.segment(r.begin - base, r.size()).dot(w.segment(r.begin, r.size()));
      if (std::abs(in) < theta * m.mass(Q)) {
        queue.push_back(Q);
        level[static_cast<std::size_t>(Q)] = level[static_cast<std::size_t>(R)] + 1;
        stopped_mass += m.mass(Q);
        continue;
      }
      prov[static_cast<std::size_t>(Q)] = R;
      for (CubeIndex ch : lat.children(Q)) stack.push_back(ch);
    }
    if (mr > 0.0) ratios.push_back({R, level[static_cast<std::size_t>(R)], stopped_mass / mr});
  }

  StoppingResult res{AccretiveSystem::table(lat, theta, c, std::move(entries)), stops, ratios, stopping_tau(delta, c, theta),
                     0.0, 0.0};
  res.system.set_provenance(std::move(prov));
  for (const auto& r : res.ratios) res.max_ratio = std::max(res.max_ratio, r.ratio);
  std::vector<CubeIndex> nonroot(res.stops.begin() + 1, res.stops.end());
  res.sparsity = sparsity_check(nonroot, m);
  return res;
}

StoppingResult stopping_construction(const StepFunction& b_top, const Measure& m, double delta, double c) {
  const Lattice& lat = m.lattice();
  require_same(b_top.lattice, lat, "stopping_construction");
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(lat.num_leaves());
  return stopping_construction(
      [&](CubeIndex q) { return q == lat.root() ? b_top.values : ones; }, m, delta, c, delta * delta);
}

}  // namespace dyadic
