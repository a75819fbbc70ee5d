#pragma once

#include <json.hpp>
#include <string>

#include "dyadic/tracer.hpp"

// Leaf-indexed arrays are written in lexicographic leaf order; a local vector
// on a cube lists that cube's leaves in the same order.
namespace dyadic::io {

using json = nlohmann::json;

/// Malformed or inconsistent document; the message names the offending path.
class SchemaError : public Error {
 public:
  using Error::Error;
};

json to_json(const Lattice& lat);
Lattice lattice_from_json(const json& j);

json to_json(const CubeId& c);
CubeId cube_id_from_json(const json& j);
CubeIndex cube_from_json(const json& j, const Lattice& lat);

json to_json(const Measure& m);
Measure measure_from_json(const json& j);

json to_json(const StepFunction& f);
StepFunction step_from_json(const json& j);

/// Local slot-order vector on q, listed in lexicographic leaf order.
json local_to_json(const Lattice& lat, CubeIndex q, const Eigen::VectorXd& local);
Eigen::VectorXd local_from_json(const json& j, const Lattice& lat, CubeIndex q);

json to_json(const AccretiveSystem& sys);
AccretiveSystem system_from_json(const json& j, const Lattice& lat);

/// Dense kernel rows (target leaves) by columns (source leaves).
json to_json(const OperatorRep& t);
/// Dense or multiplier form; multipliers use standard differences over mu.
OperatorRep operator_from_json(const json& j, const Measure& mu, const Measure& nu);

json to_json(const CubeSequence& a, const Lattice& lat);
json to_json(const TestingReport& r);
json to_json(const WlReport& r, const Lattice& lat);
json to_json(const SystemReport& r, const Lattice& lat);
json to_json(const StoppingResult& r, const Lattice& lat);
json to_json(const Trace& t);
json decomposition_to_json(const Decomposition& d, const Measure& m, bool with_vectors);

/// Parse a file; syntax errors report line and column.
json read_file(const std::string& path);
void write_file(const std::string& path, const json& j);

}  // namespace dyadic::io
