#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dyadic/measure.hpp"

namespace dyadic {

/// Nonnegative value per cube, indexed by CubeIndex.
using CubeSequence = std::vector<double>;

/// max over positive-mass R of sum_{Q in R} a_Q / mu(R); infinite if a null cube carries mass.
double carleson_constant(const CubeSequence& a, const Measure& m);
/// sum a_Q <f>_Q^2 / ||f||^2.
double embedding_ratio(const CubeSequence& a, const Measure& m, const StepFunction& f);
/// Carleson constant of mu(Q) 1_{Q in S}.
double sparsity_check(const std::vector<bool>& in_set, const Measure& m);
double sparsity_check(const std::vector<CubeIndex>& set, const Measure& m);
/// sum_{Q != root} |<f>_{parent} - <f>_Q|^2 mu(Q) / ||f||^2.
double usf_ratio(const StepFunction& f, const Measure& m);

/// sup over f of f^T A f / f^T W f, restricted to positive-weight coordinates (A symmetric).
double weighted_quadratic_sup(const Eigen::MatrixXd& A, const Eigen::VectorXd& w);
/// Exact sup over f of embedding_ratio, by a symmetric eigen-solve.
double embedding_sup(const CubeSequence& a, const Measure& m);
/// Exact sup over f of usf_ratio.
double usf_sup(const Measure& m);

}  // namespace dyadic
