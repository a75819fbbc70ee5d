#include "dyadic/json_io.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dyadic::io {

namespace {

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(where + ": missing field \"" + key + "\"");
  return j.at(key);
}

std::vector<double> numbers(const json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array of numbers");
  std::vector<double> v;
  v.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw SchemaError(where + "[" + std::to_string(i) + "]: expected a number");
    v.push_back(j[i].get<double>());
  }
  return v;
}

/// Offsets within q's leaf range, sorted by lexicographic leaf index.
std::vector<std::int32_t> lex_order(const Lattice& lat, CubeIndex q) {
  const auto r = lat.leaves(q);
  std::vector<std::int32_t> off(static_cast<std::size_t>(r.size()));
  std::iota(off.begin(), off.end(), 0);
  std::sort(off.begin(), off.end(),
            [&](std::int32_t a, std::int32_t b) { return lat.lex_of_slot(r.begin + a) < lat.lex_of_slot(r.begin + b); });
  return off;
}

json pair_json(const Lattice& lat, const WlPair& p) {
  if (p.q == kNoCube) return nullptr;
  return {{"q", to_json(lat.cube(p.q))}, {"r", to_json(lat.cube(p.r))}, {"adjoint", p.adjoint}, {"value", p.value}};
}

}  // namespace

json to_json(const Lattice& lat) { return {{"n", lat.n()}, {"depth", lat.depth()}}; }

Lattice lattice_from_json(const json& j) {
  const int n = field(j, "n", "lattice").get<int>();
  const int d = field(j, "depth", "lattice").get<int>();
  return Lattice(n, d);
}

json to_json(const CubeId& c) { return {{"g", c.g}, {"coords", c.coords}}; }

CubeId cube_id_from_json(const json& j) {
  CubeId c;
  c.g = field(j, "g", "cube").get<int>();
  c.coords = field(j, "coords", "cube").get<std::vector<std::int64_t>>();
  return c;
}

CubeIndex cube_from_json(const json& j, const Lattice& lat) {
  const CubeId c = cube_id_from_json(j);
  if (!lat.valid(c)) throw SchemaError("cube " + c.to_string() + " is not in the lattice");
  return lat.index(c);
}

json to_json(const Measure& m) { return {{"lattice", to_json(m.lattice())}, {"leaf_weights", m.lex_weights()}}; }

Measure measure_from_json(const json& j) {
  const Lattice lat = lattice_from_json(field(j, "lattice", "measure"));
  const auto w = numbers(field(j, "leaf_weights", "measure"), "measure.leaf_weights");
  if (static_cast<std::int64_t>(w.size()) != lat.num_leaves()) throw SchemaError("measure.leaf_weights: wrong length");
  return Measure::from_lex(lat, w);
}

json to_json(const StepFunction& f) { return {{"lattice", to_json(f.lattice)}, {"values", f.lex_values()}}; }

StepFunction step_from_json(const json& j) {
  const Lattice lat = lattice_from_json(field(j, "lattice", "function"));
  const auto v = numbers(field(j, "values", "function"), "function.values");
  if (static_cast<std::int64_t>(v.size()) != lat.num_leaves()) throw SchemaError("function.values: wrong length");
  return StepFunction::from_lex(lat, v);
}

json local_to_json(const Lattice& lat, CubeIndex q, const Eigen::VectorXd& local) {
  json out = json::array();
  for (auto o : lex_order(lat, q)) out.push_back(local[o]);
  return out;
}

Eigen::VectorXd local_from_json(const json& j, const Lattice& lat, CubeIndex q) {
  const auto v = numbers(j, "values");
  const auto ord = lex_order(lat, q);
  if (v.size() != ord.size()) throw SchemaError("values on cube " + lat.cube(q).to_string() + ": wrong length");
  Eigen::VectorXd local(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) local[ord[i]] = v[i];
  return local;
}

json to_json(const AccretiveSystem& sys) {
  const Lattice& lat = sys.lattice();
  json b;
  if (sys.is_constant()) {
    b = {{"mode", "constant"}, {"values", local_to_json(lat, lat.root(), sys.b_local(lat.root()))}};
  } else {
    json entries = json::array();
    for (const auto& [q, v] : sys.entries())
      entries.push_back({{"cube", to_json(lat.cube(q))}, {"values", local_to_json(lat, q, v)}});
    b = {{"mode", "table"}, {"entries", entries}};
  }
  json out = {{"delta", sys.delta()}, {"c", sys.c()}, {"b", b}};
  if (!sys.provenance().empty()) {
    json prov = json::array();
    for (CubeIndex q = 0; q < lat.num_cubes(); ++q)
      if (sys.provenance()[static_cast<std::size_t>(q)] != q)
        prov.push_back({{"cube", to_json(lat.cube(q))},
                        {"from", to_json(lat.cube(sys.provenance()[static_cast<std::size_t>(q)]))}});
    out["provenance"] = prov;
  }
  return out;
}

AccretiveSystem system_from_json(const json& j, const Lattice& lat) {
  const double delta = field(j, "delta", "system").get<double>();
  const double c = field(j, "c", "system").get<double>();
  const json& b = field(j, "b", "system");
  const auto mode = field(b, "mode", "system.b").get<std::string>();
  std::map<CubeIndex, Eigen::VectorXd> entries;
  if (mode == "constant") {
    entries[lat.root()] = local_from_json(field(b, "values", "system.b"), lat, lat.root());
  } else if (mode == "table") {
    const json& es = field(b, "entries", "system.b");
    for (std::size_t i = 0; i < es.size(); ++i) {
      const std::string where = "system.b.entries[" + std::to_string(i) + "]";
      const CubeIndex q = cube_from_json(field(es[i], "cube", where), lat);
      entries[q] = local_from_json(field(es[i], "values", where), lat, q);
    }
  } else {
    throw SchemaError("system.b.mode: expected \"constant\" or \"table\"");
  }
  AccretiveSystem sys = AccretiveSystem::table(lat, delta, c, std::move(entries));
  if (j.contains("provenance")) {
    std::vector<CubeIndex> prov(static_cast<std::size_t>(lat.num_cubes()));
    std::iota(prov.begin(), prov.end(), 0);
    for (const auto& e : j.at("provenance"))
      prov[static_cast<std::size_t>(cube_from_json(field(e, "cube", "provenance"), lat))] =
          cube_from_json(field(e, "from", "provenance"), lat);
    sys.set_provenance(std::move(prov));
  }
  return sys;
}

json to_json(const OperatorRep& t) {
  const Lattice& lat = t.lattice();
  const auto N = lat.num_leaves();
  json rows = json::array();
  for (std::int32_t i = 0; i < N; ++i) {
    json row = json::array();
    for (std::int32_t k = 0; k < N; ++k) row.push_back(t.kernel()(lat.slot_of_lex(i), lat.slot_of_lex(k)));
    rows.push_back(std::move(row));
  }
  return {{"lattice", to_json(lat)}, {"kernel", {{"mode", "dense"}, {"rows", rows}}}};
}

OperatorRep operator_from_json(const json& j, const Measure& mu, const Measure& nu) {
  const Lattice lat = lattice_from_json(field(j, "lattice", "operator"));
  require_same(lat, mu.lattice(), "operator");
  const json& k = field(j, "kernel", "operator");
  const auto mode = field(k, "mode", "operator.kernel").get<std::string>();
  if (mode == "multiplier") {
    std::map<CubeIndex, double> lambda;
    for (const auto& e : field(k, "lambda", "operator.kernel"))
      lambda[cube_from_json(field(e, "cube", "operator.kernel.lambda"), lat)] =
          field(e, "value", "operator.kernel.lambda").get<double>();
    return make_haar_multiplier(mu, lambda);
  }
  if (mode != "dense") throw SchemaError("operator.kernel.mode: expected \"dense\" or \"multiplier\"");
  const json& rows = field(k, "rows", "operator.kernel");
  const auto N = lat.num_leaves();
  if (!rows.is_array() || static_cast<std::int64_t>(rows.size()) != N) throw SchemaError("operator.kernel.rows: wrong length");
  Eigen::MatrixXd m(N, N);
  for (std::int32_t i = 0; i < N; ++i) {
    const auto row = numbers(rows[static_cast<std::size_t>(i)], "operator.kernel.rows[" + std::to_string(i) + "]");
    if (static_cast<std::int64_t>(row.size()) != N)
      throw SchemaError("operator.kernel.rows[" + std::to_string(i) + "]: wrong length");
    for (std::int32_t c = 0; c < N; ++c) m(lat.slot_of_lex(i), lat.slot_of_lex(c)) = row[static_cast<std::size_t>(c)];
  }
  return {std::move(m), mu, nu};
}

json to_json(const CubeSequence& a, const Lattice& lat) {
  json out = json::array();
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q)
    out.push_back({{"cube", to_json(lat.cube(q))}, {"value", a[static_cast<std::size_t>(q)]}});
  return out;
}

json to_json(const TestingReport& r) {
  return {{"radius", r.radius},       {"t_a_fwd", r.t_a_fwd},
          {"t_a_adj", r.t_a_adj},     {"t_a_fwd_uncut", r.t_a_fwd_uncut},
          {"t_a_adj_uncut", r.t_a_adj_uncut}, {"t_b", r.t_b},
          {"t_b_delta", r.t_b_delta}, {"t_c_fwd", r.t_c_fwd},
          {"t_c_adj", r.t_c_adj},     {"wl_pass", r.wl_pass},
          {"wl_max_violation", r.wl_max_violation}, {"csc_kappa", r.csc_kappa}};
}

json to_json(const WlReport& r, const Lattice& lat) {
  return {{"radius", r.radius},
          {"tol", r.tol},
          {"pass", r.pass},
          {"max_violation", r.max_violation},
          {"worst", pair_json(lat, r.worst)},
          {"boundary_violation", r.boundary_violation},
          {"worst_boundary", pair_json(lat, r.worst_boundary)},
          {"csc_kappa", r.csc_kappa},
          {"worst_csc", pair_json(lat, r.worst_csc)},
          {"csc_identity_gap", r.csc_identity_gap},
          {"pairs_scanned", r.pairs_scanned}};
}

json to_json(const SystemReport& r, const Lattice& lat) {
  json cs = json::array();
  for (CubeIndex q : r.change_set) cs.push_back(to_json(lat.cube(q)));
  json viol = json::array();
  for (const auto& v : r.violations)
    viol.push_back({{"cube", to_json(lat.cube(v.cube))}, {"condition", v.condition}, {"value", v.value}});
  return {{"ok", r.ok},
          {"delta", r.delta},
          {"c", r.c},
          {"change_set", cs},
          {"sparsity", r.sparsity},
          {"provenance_consistent", r.provenance_consistent},
          {"violations", viol}};
}

json to_json(const StoppingResult& r, const Lattice& lat) {
  json ratios = json::array();
  for (const auto& s : r.ratios)
    ratios.push_back({{"cube", to_json(lat.cube(s.cube))}, {"level", s.level}, {"ratio", s.ratio}});
  json stops = json::array();
  for (CubeIndex q : r.stops) stops.push_back(to_json(lat.cube(q)));
  return {{"tau", r.tau}, {"max_ratio", r.max_ratio}, {"sparsity", r.sparsity}, {"stops", stops}, {"ratios", ratios}};
}

json to_json(const Trace& t) {
  json steps = json::array();
  for (const auto& s : t.steps)
    steps.push_back({{"name", s.name},
                     {"lhs", s.lhs},
                     {"rhs", s.rhs},
                     {"constant", s.constant},
                     {"formula", s.formula},
                     {"identity", s.identity},
                     {"pass", s.pass}});
  return {{"value", t.value},
          {"final_constant", t.final_constant},
          {"operator_norm", t.operator_norm},
          {"pass", t.all_pass()},
          {"flags", t.flags},
          {"steps", steps}};
}

json decomposition_to_json(const Decomposition& d, const Measure& m, bool with_vectors) {
  const Lattice& lat = m.lattice();
  const auto& w = m.weights();
  json out = json::array();
  out.push_back({{"cube", to_json(lat.cube(lat.root()))}, {"top", true}, {"piece_norm", wnorm(d.top, w)}});
  if (with_vectors) out.back()["values"] = local_to_json(lat, lat.root(), d.top);
  for (const auto& p : d.pieces) {
    json e = {{"cube", to_json(lat.cube(p.cube))}, {"piece_norm", wnorm(p.local, seg(w, lat, p.cube))}};
    if (with_vectors) e["values"] = local_to_json(lat, p.cube, p.local);
    out.push_back(std::move(e));
  }
  return out;
}

json read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    const auto nl = text.rfind('\n', upto == 0 ? 0 : upto - 1);
    const auto col = nl == std::string::npos ? upto + 1 : upto - nl;
    throw SchemaError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON");
  }
}

void write_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace dyadic::io
