#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dyadic/lattice.hpp"

namespace dyadic {

/// Sums leaf values (slot order) over every cube, children before parents.
std::vector<double> cube_sums(const Lattice& lat, const Eigen::VectorXd& slot_values);

/// Nonnegative leaf atoms with cube masses aggregated bottom-up.
class Measure {
 public:
  /// Weights given in slot (Z) order.
  Measure(Lattice lat, Eigen::VectorXd slot_weights);
  /// Weights given in lexicographic leaf order, as in JSON.
  static Measure from_lex(const Lattice& lat, const std::vector<double>& lex_weights);
  static Measure uniform(const Lattice& lat);

  const Lattice& lattice() const { return lat_; }
  const Eigen::VectorXd& weights() const { return w_; }
  double mass(CubeIndex q) const { return mass_[static_cast<std::size_t>(q)]; }
  double mass(const CubeId& c) const { return mass(lat_.index(c)); }
  double total() const { return mass(lat_.root()); }
  const std::vector<double>& masses() const { return mass_; }
  std::vector<double> lex_weights() const;
  /// Sup over parent/child pairs of mu(parent)/mu(child); infinite if a positive parent has a null child.
  double doubling_constant() const;

 private:
  Lattice lat_;
  Eigen::VectorXd w_;
  std::vector<double> mass_;
};

/// Leaf-constant real function, values in slot order.
struct StepFunction {
  Lattice lattice;
  Eigen::VectorXd values;

  StepFunction(Lattice lat, Eigen::VectorXd v);
  explicit StepFunction(Lattice lat) : StepFunction(lat, Eigen::VectorXd::Zero(lat.num_leaves())) {}

  static StepFunction from_lex(const Lattice& lat, const std::vector<double>& lex_values);
  static StepFunction constant(const Lattice& lat, double c);
  static StepFunction indicator(const Lattice& lat, CubeIndex q);
  std::vector<double> lex_values() const;

  /// 1_Q f.
  StepFunction restricted(CubeIndex q) const;
  double sup_abs() const { return values.size() ? values.cwiseAbs().maxCoeff() : 0.0; }
};

double integral(const StepFunction& f, const Measure& m, CubeIndex q);
/// Weighted average over q; 0 on null cubes.
double average(const StepFunction& f, CubeIndex q, const Measure& m);
/// Averages over every cube at once.
std::vector<double> averages(const StepFunction& f, const Measure& m);
double inner(const StepFunction& f, const StepFunction& g, const Measure& m);
double norm(const StepFunction& f, const Measure& m);
/// Weighted L2 norm of a slot vector.
double wnorm(const Eigen::VectorXd& v, const Eigen::VectorXd& w);
StepFunction dyadic_maximal(const StepFunction& f, const Measure& m);

}  // namespace dyadic
