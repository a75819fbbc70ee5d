#include "dyadic/instance.hpp"

#include <cmath>

namespace dyadic {

using Eigen::Index;

namespace {

constexpr int kAttempts = 50;

/// |<v>_K| >= delta on every positive-mass sub-cube K of q (v local on q).
bool sub_averages_ok(const Measure& m, CubeIndex q, const Eigen::VectorXd& v, double delta) {
  const Lattice& lat = m.lattice();
  const auto base = lat.leaves(q).begin;
  for (int k = 0; k <= lat.depth() - lat.generation(q); ++k)
    for (CubeIndex K : lat.descendants_at(q, k)) {
      const auto r = lat.leaves(K);
      const double mk = m.mass(K);
      if (mk <= 0.0) continue;
      if (std::abs(v.segment(r.begin - base, r.size()).dot(seg(m.weights(), lat, K))) < delta * mk) return false;
    }
  return true;
}

Eigen::VectorXd signed_draw(Index n, double lo, double c, double p_neg, Rng& rng) {
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = (rng.bernoulli(p_neg) ? -1.0 : 1.0) * rng.uniform(lo, c);
  return v;
}

}  // namespace

MeasureLaw parse_measure_law(const std::string& s) {
  if (s == "uniform") return MeasureLaw::Uniform;
  if (s == "iid-positive") return MeasureLaw::IidPositive;
  if (s == "atom-heavy") return MeasureLaw::AtomHeavy;
  throw InfeasibleParams("unknown measure law: " + s);
}

SystemMode parse_system_mode(const std::string& s) {
  if (s == "constant") return SystemMode::Constant;
  if (s == "stopping") return SystemMode::Stopping;
  if (s == "table") return SystemMode::Table;
  throw InfeasibleParams("unknown system mode: " + s);
}

OperatorFamily parse_operator_family(const std::string& s) {
  if (s == "multiplier") return OperatorFamily::Multiplier;
  if (s == "shift-candidate") return OperatorFamily::ShiftCandidate;
  if (s == "dense-random") return OperatorFamily::DenseRandom;
  if (s == "diagonal") return OperatorFamily::Diagonal;
  throw InfeasibleParams("unknown operator family: " + s);
}

std::string to_string(MeasureLaw m) {
  switch (m) {
    case MeasureLaw::Uniform: return "uniform";
    case MeasureLaw::IidPositive: return "iid-positive";
    case MeasureLaw::AtomHeavy: return "atom-heavy";
  }
  return "?";
}

std::string to_string(SystemMode m) {
  switch (m) {
    case SystemMode::Constant: return "constant";
    case SystemMode::Stopping: return "stopping";
    case SystemMode::Table: return "table";
  }
  return "?";
}

std::string to_string(OperatorFamily f) {
  switch (f) {
    case OperatorFamily::Multiplier: return "multiplier";
    case OperatorFamily::ShiftCandidate: return "shift-candidate";
    case OperatorFamily::DenseRandom: return "dense-random";
    case OperatorFamily::Diagonal: return "diagonal";
  }
  return "?";
}

Measure random_measure(const Lattice& lat, MeasureLaw law, Rng& rng) {
  const auto N = lat.num_leaves();
  Eigen::VectorXd w = Eigen::VectorXd::Constant(N, 1.0);
  if (law == MeasureLaw::IidPositive) {
    for (Index i = 0; i < N; ++i) w[i] = rng.uniform(0.1, 1.0);
  } else if (law == MeasureLaw::AtomHeavy) {
    for (Index i = 0; i < N; ++i) w[i] = rng.uniform(0.05, 1.0);
    const auto atoms = std::max<Index>(1, N / 8);
    for (Index k = 0; k < atoms; ++k) w[static_cast<Index>(rng.index(static_cast<std::uint64_t>(N)))] *= std::pow(10.0, rng.uniform(1.0, 3.0));
  }
  return Measure(lat, w / w.sum());
}

Eigen::VectorXd random_accretive_local(const Measure& m, CubeIndex q, double delta, double c, Rng& rng) {
  const Index n = m.lattice().leaves(q).size();
  for (int a = 0; a < kAttempts; ++a) {
    Eigen::VectorXd v = signed_draw(n, delta, c, 0.15, rng);
    if (sub_averages_ok(m, q, v, delta)) return v;
  }
  return signed_draw(n, delta, c, 0.0, rng);
}

StepFunction random_accretive(const Measure& m, double delta, double c, Rng& rng) {
  return {m.lattice(), random_accretive_local(m, m.lattice().root(), delta, c, rng)};
}

Eigen::VectorXd random_stop_function(const Measure& m, CubeIndex q, double delta, double c, Rng& rng) {
  const Lattice& lat = m.lattice();
  const auto w = seg(m.weights(), lat, q);
  for (int a = 0; a < kAttempts; ++a) {
    Eigen::VectorXd v = signed_draw(w.size(), 0.0, c, 0.35, rng);
    if (std::abs(v.dot(w)) >= delta * m.mass(q)) return v;
  }
  return signed_draw(w.size(), delta, c, 0.0, rng);
}

AccretiveSystem random_system(const Measure& m, SystemMode mode, double delta, double c, Rng& rng) {
  const Lattice& lat = m.lattice();
  switch (mode) {
    case SystemMode::Constant:
      return AccretiveSystem::constant(random_accretive(m, delta, c, rng), delta, c);
    case SystemMode::Stopping: {
      const StopProvider provider = [&](CubeIndex q) {
        Eigen::VectorXd full = Eigen::VectorXd::Zero(lat.num_leaves());
        seg(full, lat, q) = random_stop_function(m, q, delta, c, rng);
        return full;
      };
      return stopping_construction(provider, m, delta, c, delta * delta).system;
    }
    case SystemMode::Table: {
      std::map<CubeIndex, Eigen::VectorXd> entries;
      entries[lat.root()] = random_accretive_local(m, lat.root(), delta, c, rng);
      for (CubeIndex q = 1; q < lat.num_cubes(); ++q)
        if (rng.bernoulli(0.1)) entries[q] = rng.sign() * random_accretive_local(m, q, delta, c, rng);
      return AccretiveSystem::table(lat, delta, c, std::move(entries));
    }
  }
  throw InfeasibleParams("unknown system mode");
}

StepFunction random_function(const Lattice& lat, Rng& rng) {
  Eigen::VectorXd v(lat.num_leaves());
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  return {lat, v};
}

Instance make_instance(const InstanceParams& p) {
  if (p.n < 1 || p.depth < 1) throw InfeasibleParams("need n >= 1 and depth >= 1");
  if (static_cast<long>(p.n) * p.depth > 12)
    throw InfeasibleParams("n*depth = " + std::to_string(static_cast<long>(p.n) * p.depth) +
                           " exceeds 12; dense operators are limited to 4096 leaves");
  if (p.radius < 0) throw InfeasibleParams("radius must be nonnegative");
  if (!(p.delta > 0.0 && p.delta <= p.cbound)) throw InfeasibleParams("need 0 < delta <= cbound");

  Rng rng(p.seed);
  const Lattice lat(p.n, p.depth);
  const Measure mu = random_measure(lat, p.measure, rng);
  const Measure nu = p.op == OperatorFamily::Multiplier ? mu : random_measure(lat, p.measure, rng);
  AccretiveSystem b1 = random_system(mu, p.system, p.delta, p.cbound, rng);
  AccretiveSystem b2 = random_system(nu, p.system, p.delta, p.cbound, rng);

  std::optional<std::map<CubeIndex, double>> lambda;
  auto build = [&]() -> OperatorRep {
    switch (p.op) {
      case OperatorFamily::Multiplier: {
        lambda.emplace();
        for (CubeIndex q = 0; q < lat.generation_begin(lat.depth()); ++q) (*lambda)[q] = rng.uniform(-1.0, 1.0);
        return make_haar_multiplier(mu, *lambda);
      }
      case OperatorFamily::ShiftCandidate: {
        const SystemCalculus s1(b1, mu), s2(b2, nu);
        ShiftParams sp;
        sp.s = sp.t = default_shift_complexity(p.radius);
        try {
          return make_shift_candidate_local(s1, s2, p.radius, sp, rng);
        } catch (const GeneratorExhausted& e) {
          throw InfeasibleParams(e.what());
        }
      }
      case OperatorFamily::DenseRandom:
        return make_dense_random(mu, nu, rng);
      case OperatorFamily::Diagonal:
        return make_diagonal(mu, nu, 1.0, rng);
    }
    throw InfeasibleParams("unknown operator family");
  };
  OperatorRep op = build();
  return Instance{p, mu, nu, std::move(b1), std::move(b2), std::move(op), std::move(lambda)};
}

io::json to_json(const Instance& inst) {
  const Lattice& lat = inst.lattice();
  io::json op;
  if (inst.lambda) {
    io::json lam = io::json::array();
    for (const auto& [q, v] : *inst.lambda) lam.push_back({{"cube", io::to_json(lat.cube(q))}, {"value", v}});
    op = {{"lattice", io::to_json(lat)}, {"kernel", {{"mode", "multiplier"}, {"lambda", lam}}}};
  } else {
    op = io::to_json(inst.op);
  }
  const auto& p = inst.params;
  return {{"lattice", io::to_json(lat)},
          {"mu", io::to_json(inst.mu)},
          {"nu", io::to_json(inst.nu)},
          {"b1", io::to_json(inst.b1)},
          {"b2", io::to_json(inst.b2)},
          {"operator", op},
          {"radius", p.radius},
          {"seed", p.seed},
          {"params",
           {{"n", p.n},
            {"depth", p.depth},
            {"delta", p.delta},
            {"cbound", p.cbound},
            {"measure", to_string(p.measure)},
            {"system", to_string(p.system)},
            {"operator", to_string(p.op)}}}};
}

Instance instance_from_json(const io::json& j) {
  for (const char* key : {"lattice", "mu", "nu", "b1", "b2", "operator", "radius"})
    if (!j.contains(key)) throw io::SchemaError(std::string("instance: missing field \"") + key + "\"");
  const Lattice lat = io::lattice_from_json(j.at("lattice"));
  InstanceParams p;
  p.n = lat.n();
  p.depth = lat.depth();
  p.radius = j.at("radius").get<int>();
  if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("params")) {
    const auto& q = j.at("params");
    p.delta = q.value("delta", p.delta);
    p.cbound = q.value("cbound", p.cbound);
    if (q.contains("measure")) p.measure = parse_measure_law(q.at("measure").get<std::string>());
    if (q.contains("system")) p.system = parse_system_mode(q.at("system").get<std::string>());
    if (q.contains("operator")) p.op = parse_operator_family(q.at("operator").get<std::string>());
  }
  Measure mu = io::measure_from_json(j.at("mu"));
  Measure nu = io::measure_from_json(j.at("nu"));
  require_same(lat, mu.lattice(), "instance mu");
  require_same(lat, nu.lattice(), "instance nu");
  AccretiveSystem b1 = io::system_from_json(j.at("b1"), lat);
  AccretiveSystem b2 = io::system_from_json(j.at("b2"), lat);
  OperatorRep op = io::operator_from_json(j.at("operator"), mu, nu);
  std::optional<std::map<CubeIndex, double>> lambda;
  const auto& k = j.at("operator").at("kernel");
  if (k.value("mode", "") == "multiplier") {
    lambda.emplace();
    for (const auto& e : k.at("lambda")) (*lambda)[io::cube_from_json(e.at("cube"), lat)] = e.at("value").get<double>();
  }
  return Instance{p, std::move(mu), std::move(nu), std::move(b1), std::move(b2), std::move(op), std::move(lambda)};
}

}  // namespace dyadic
