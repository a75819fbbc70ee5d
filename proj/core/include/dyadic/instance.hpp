#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "dyadic/json_io.hpp"

namespace dyadic {

/// Parameters that cannot produce an instance (too deep, generator exhausted, bad names).
class InfeasibleParams : public Error {
 public:
  using Error::Error;
};

enum class MeasureLaw { Uniform, IidPositive, AtomHeavy };
enum class SystemMode { Constant, Stopping, Table };
enum class OperatorFamily { Multiplier, ShiftCandidate, DenseRandom, Diagonal };

MeasureLaw parse_measure_law(const std::string& s);
SystemMode parse_system_mode(const std::string& s);
OperatorFamily parse_operator_family(const std::string& s);
std::string to_string(MeasureLaw m);
std::string to_string(SystemMode m);
std::string to_string(OperatorFamily f);

struct InstanceParams {
  int n = 1;
  int depth = 3;
  std::uint64_t seed = 0;
  int radius = 0;
  double delta = 0.5;
  double cbound = 2.0;
  MeasureLaw measure = MeasureLaw::Uniform;
  SystemMode system = SystemMode::Constant;
  OperatorFamily op = OperatorFamily::Multiplier;
};

/// Leaf weights drawn from the law, normalized to total mass 1.
Measure random_measure(const Lattice& lat, MeasureLaw law, Rng& rng);
/// Real b with sup |b| <= c and |<b>_Q| >= delta on every cube; mostly positive with some sign changes.
StepFunction random_accretive(const Measure& m, double delta, double c, Rng& rng);
/// Local vector on q with the same bounds on every sub-cube of q.
Eigen::VectorXd random_accretive_local(const Measure& m, CubeIndex q, double delta, double c, Rng& rng);
/// Test function on q whose integral is at least delta mu(q) in size but may dip on sub-cubes.
Eigen::VectorXd random_stop_function(const Measure& m, CubeIndex q, double delta, double c, Rng& rng);
AccretiveSystem random_system(const Measure& m, SystemMode mode, double delta, double c, Rng& rng);
StepFunction random_function(const Lattice& lat, Rng& rng);

struct Instance {
  InstanceParams params;
  Measure mu;
  Measure nu;
  AccretiveSystem b1;
  AccretiveSystem b2;
  OperatorRep op;
  std::optional<std::map<CubeIndex, double>> lambda;  // set for multipliers

  const Lattice& lattice() const { return mu.lattice(); }
  int radius() const { return params.radius; }
};

/// Deterministic in params (including the seed).
Instance make_instance(const InstanceParams& p);

io::json to_json(const Instance& inst);
Instance instance_from_json(const io::json& j);

}  // namespace dyadic
