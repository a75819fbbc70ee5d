// dyadic-lab: generate, check, trace and sweep finite dyadic instances.
#include <CLI11.hpp>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "dyadic/instance.hpp"

using namespace dyadic;
using io::json;

namespace {

struct Options {
  InstanceParams p;
  std::string measure = "uniform";
  std::string system = "constant";
  std::string op = "multiplier";
  std::string out;
  std::string instance;
  double tol = 1e-10;
  int count = 100;
  int threads = 0;
  bool seed_given = false;
};

void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(o.out);
  if (!f) throw Error("cannot write " + o.out);
  f << text;
}

InstanceParams resolve(const Options& o) {
  InstanceParams p = o.p;
  p.measure = parse_measure_law(o.measure);
  p.system = parse_system_mode(o.system);
  p.op = parse_operator_family(o.op);
  return p;
}

struct Frames {
  SystemCalculus s1, s2;
  explicit Frames(const Instance& in) : s1(in.b1, in.mu), s2(in.b2, in.nu) {}
};

int cmd_gen(const Options& o) {
  emit(o, to_json(make_instance(resolve(o))).dump(2) + "\n");
  return 0;
}

int cmd_check(const Options& o) {
  const Instance in = instance_from_json(io::read_file(o.instance));
  const Lattice& lat = in.lattice();
  const PairedSystem ps = make_paired(in.b1, in.b2, in.mu, in.nu);
  const Frames fr(in);
  const WlReport wl = check_wl_local(in.op, fr.s1, fr.s2, in.radius(), o.tol);
  TestingReport tst = testing_local(in.op, fr.s1, fr.s2, in.radius());
  tst.wl_pass = wl.pass;
  tst.wl_max_violation = wl.max_violation;
  tst.csc_kappa = wl.csc_kappa;
  const bool ok = ps.ok() && wl.pass;
  const json rep = {{"pass", ok},
                    {"b1", io::to_json(ps.r1, lat)},
                    {"b2", io::to_json(ps.r2, lat)},
                    {"lambda_b1_nu", ps.lambda_b1_nu},
                    {"lambda_b2_mu", ps.lambda_b2_mu},
                    {"wl", io::to_json(wl, lat)},
                    {"testing", io::to_json(tst)}};
  emit(o, rep.dump(2) + "\n");
  return ok ? 0 : 1;
}

int cmd_norm(const Options& o) {
  const Instance in = instance_from_json(io::read_file(o.instance));
  const Frames fr(in);
  const TestingReport tst = testing_local(in.op, fr.s1, fr.s2, in.radius());
  const double nt = in.op.norm();
  const double na = in.op.adjoint().norm();
  const double denom = std::sqrt(tst.t_a_fwd) + std::sqrt(tst.t_a_adj) + tst.t_b;
  const bool ok = std::abs(nt - na) <= 1e-9 * std::max(1.0, nt);
  const json rep = {{"pass", ok},
                    {"norm", nt},
                    {"adjoint_norm", na},
                    {"testing", io::to_json(tst)},
                    {"ratio", denom > 0.0 ? nt / denom : 0.0}};
  emit(o, rep.dump(2) + "\n");
  return ok ? 0 : 1;
}

/// Local, appendix and (for constant pairs) global traces on random f, g.
json run_traces(const Instance& in, std::uint64_t seed, double tol, bool& ok, bool& applicable) {
  Rng rng(seed);
  const StepFunction f = random_function(in.lattice(), rng);
  const StepFunction g = random_function(in.lattice(), rng);
  TraceOptions opt;
  opt.identity_tol = tol;
  opt.wl_tol = tol;
  const Frames fr(in);
  json rep;
  ok = true;
  applicable = true;
  try {
    const Trace tl = trace_local(in.op, fr.s1, fr.s2, in.radius(), f, g, opt);
    rep["local"] = io::to_json(tl);
    ok = ok && tl.all_pass();
    if (in.b1.is_constant() && in.b2.is_constant()) {
      const Martingale m1(fr.s1.test_function(in.lattice().root()), in.mu);
      const Martingale m2(fr.s2.test_function(in.lattice().root()), in.nu);
      const Trace tg = trace_global(in.op, m1, m2, in.radius(), f, g, opt);
      rep["global"] = io::to_json(tg);
      ok = ok && tg.all_pass();
    }
  } catch (const PreconditionError& e) {
    rep["precondition"] = e.what();
    applicable = false;
  }
  const Trace a1 = trace_appendix(fr.s1, f, opt);
  const Trace a2 = trace_appendix(fr.s2, g, opt);
  rep["appendix_b1"] = io::to_json(a1);
  rep["appendix_b2"] = io::to_json(a2);
  ok = ok && a1.all_pass() && a2.all_pass();
  rep["pass"] = ok;
  return rep;
}

int cmd_trace(const Options& o) {
  const Instance in = instance_from_json(io::read_file(o.instance));
  bool ok = false, applicable = false;
  const json rep = run_traces(in, o.seed_given ? o.p.seed : in.params.seed, o.tol, ok, applicable);
  emit(o, rep.dump(2) + "\n");
  return ok && applicable ? 0 : 1;
}

struct Row {
  std::string text;
  bool failed = false;
};

Row ensemble_row(const InstanceParams& base, std::uint64_t seed, double tol) {
  InstanceParams p = base;
  p.seed = seed;
  std::ostringstream os;
  os.precision(10);
  os << seed << ',' << p.n << ',' << p.depth << ',' << p.radius << ',' << to_string(p.measure) << ','
     << to_string(p.system) << ',' << to_string(p.op) << ',';
  try {
    const Instance in = make_instance(p);
    const Frames fr(in);
    const PairedSystem ps = make_paired(in.b1, in.b2, in.mu, in.nu);
    const WlReport wl = check_wl_local(in.op, fr.s1, fr.s2, p.radius, tol);
    const TestingReport t = testing_local(in.op, fr.s1, fr.s2, p.radius);
    const double nt = in.op.norm();
    const double denom = std::sqrt(t.t_a_fwd) + std::sqrt(t.t_a_adj) + t.t_b;
    bool ok = false, applicable = false;
    const json tr = run_traces(in, seed, tol, ok, applicable);
    double steps = 0, passed = 0, final_constant = 0;
    for (const char* k : {"local", "global", "appendix_b1", "appendix_b2"}) {
      if (!tr.contains(k)) continue;
      for (const auto& s : tr[k]["steps"]) {
        steps += 1;
        passed += s["pass"].get<bool>() ? 1 : 0;
      }
    }
    if (tr.contains("local")) final_constant = tr["local"]["final_constant"].get<double>();
    os << ps.r1.sparsity << ',' << ps.r2.sparsity << ',' << ps.lambda_b1_nu << ',' << ps.lambda_b2_mu << ','
       << t.t_a_fwd << ',' << t.t_a_adj << ',' << t.t_a_fwd_uncut << ',' << t.t_a_adj_uncut << ',' << t.t_b << ','
       << t.t_c_fwd << ',' << t.t_c_adj << ',' << (wl.pass ? 1 : 0) << ',' << wl.max_violation << ','
       << wl.csc_kappa << ',' << nt << ',' << (denom > 0.0 ? nt / denom : 0.0) << ',' << final_constant << ','
       << (steps > 0 ? passed / steps : 0.0) << ',' << (applicable ? (ok ? "pass" : "fail") : "n/a");
    return {os.str(), !ps.ok() || (applicable && !ok)};
  } catch (const Error& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == ',' || c == '\n') c = ';';
    os << ",,,,,,,,,,,,,,,,,,error: " << msg;
    return {os.str(), true};
  }
}

int cmd_ensemble(const Options& o) {
  const InstanceParams base = resolve(o);
  const auto n = static_cast<std::size_t>(std::max(o.count, 0));
  std::vector<Row> rows(n);
  std::atomic<std::size_t> next{0};
  unsigned workers = o.threads > 0 ? static_cast<unsigned>(o.threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) rows[i] = ensemble_row(base, base.seed + i, o.tol);
    });
  for (auto& t : pool) t.join();

  // Rows are stored by seed, so output order does not depend on scheduling.
  std::string out =
      "seed,n,depth,radius,measure,system,operator,lambda_b1_mu,lambda_b2_nu,lambda_b1_nu,lambda_b2_mu,"
      "t_a_fwd,t_a_adj,t_a_fwd_uncut,t_a_adj_uncut,t_b,t_c_fwd,t_c_adj,wl_pass,wl_violation,csc_kappa,"
      "norm,norm_ratio,final_constant,trace_pass_rate,trace\n";
  bool failed = false;
  for (const auto& r : rows) {
    out += r.text + "\n";
    failed = failed || r.failed;
  }
  emit(o, out);
  return failed ? 1 : 0;
}

int cmd_stopping(const Options& o) {
  const InstanceParams p = resolve(o);
  if (static_cast<long>(p.n) * p.depth > 20) throw InfeasibleParams("n*depth exceeds 20");
  Rng rng(p.seed);
  const Lattice lat(p.n, p.depth);
  const Measure m = random_measure(lat, p.measure, rng);
  const StopProvider provider = [&](CubeIndex q) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(lat.num_leaves());
    seg(full, lat, q) = random_stop_function(m, q, p.delta, p.cbound, rng);
    return full;
  };
  const double theta = p.delta * p.delta;
  const StoppingResult res = stopping_construction(provider, m, p.delta, p.cbound, theta);
  const SystemReport sr = verify_system(res.system, m);

  json levels = json::array();
  int max_level = 0;
  for (const auto& r : res.ratios) max_level = std::max(max_level, r.level);
  for (int l = 0; l <= max_level; ++l) {
    double worst = 0.0;
    int count = 0;
    for (const auto& r : res.ratios)
      if (r.level == l) {
        worst = std::max(worst, r.ratio);
        ++count;
      }
    levels.push_back({{"level", l}, {"stops", count}, {"max_ratio", worst}});
  }
  const bool ratios_ok = res.max_ratio <= res.tau + 1e-12;
  const bool sparse_ok = res.sparsity <= 1.0 / (1.0 - res.tau) + 0.01;
  const bool ok = ratios_ok && sparse_ok && sr.ok;
  json rep = io::to_json(res, lat);
  rep["theta"] = theta;
  rep["levels"] = levels;
  rep["sparsity_bound"] = 1.0 / (1.0 - res.tau);
  rep["system"] = io::to_json(sr, lat);
  rep["pass"] = ok;
  emit(o, rep.dump(2) + "\n");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dyadic-lab: finite dyadic two-weight laboratory"};
  app.require_subcommand(1);
  Options o;

  auto add_params = [&](CLI::App* c) {
    c->add_option("--n", o.p.n, "Dimension")->check(CLI::PositiveNumber);
    c->add_option("--depth", o.p.depth, "Depth D")->check(CLI::PositiveNumber);
    c->add_option("--seed", o.p.seed, "Seed");
    c->add_option("--radius", o.p.radius, "Localization radius r")->check(CLI::NonNegativeNumber);
    c->add_option("--delta", o.p.delta, "Accretivity floor");
    c->add_option("--cbound", o.p.cbound, "Sup bound C");
    c->add_option("--measure", o.measure, "uniform | iid-positive | atom-heavy");
    c->add_option("--system", o.system, "constant | stopping | table");
    c->add_option("--operator", o.op, "multiplier | shift-candidate | dense-random | diagonal");
  };
  auto add_common = [&](CLI::App* c) {
    c->add_option("--out", o.out, "Output file (default stdout)");
    c->add_option("--tol", o.tol, "Tolerance for identities and localization");
  };

  auto* gen = app.add_subcommand("gen", "Generate an instance");
  add_params(gen);
  add_common(gen);
  auto* stop = app.add_subcommand("stopping", "Stopping construction report");
  add_params(stop);
  add_common(stop);
  auto* ens = app.add_subcommand("ensemble", "CSV sweep over consecutive seeds");
  add_params(ens);
  add_common(ens);
  ens->add_option("--count", o.count, "Number of instances")->check(CLI::NonNegativeNumber);
  ens->add_option("--threads", o.threads, "Worker threads (default: hardware)");
  CLI::App* on_file[3];
  const char* names[3][2] = {{"check", "Verify an instance"},
                             {"norm", "Operator norm and testing constants"},
                             {"trace", "Replay the estimate chains on random f, g"}};
  for (int i = 0; i < 3; ++i) {
    on_file[i] = app.add_subcommand(names[i][0], names[i][1]);
    on_file[i]->add_option("instance", o.instance, "Instance JSON")->required()->check(CLI::ExistingFile);
    add_common(on_file[i]);
  }
  on_file[2]->add_option("--seed", o.p.seed, "Seed for f and g (default: instance seed)");

  CLI11_PARSE(app, argc, argv);
  o.seed_given = on_file[2]->count("--seed") > 0;
  try {
    if (*gen) return cmd_gen(o);
    if (*stop) return cmd_stopping(o);
    if (*ens) return cmd_ensemble(o);
    if (*on_file[0]) return cmd_check(o);
    if (*on_file[1]) return cmd_norm(o);
    return cmd_trace(o);
  } catch (const std::exception& e) {
    std::cerr << "dyadic-lab: " << e.what() << '\n';
    return 2;
  }
}
