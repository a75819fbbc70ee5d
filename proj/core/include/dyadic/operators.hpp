#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dyadic/accretive_system.hpp"
#include "dyadic/rng.hpp"

namespace dyadic {

/// Raised when rejection sampling runs out of attempts.
class GeneratorExhausted : public Error {
 public:
  using Error::Error;
};

/// Dense kernel acting from L2(mu) to L2(nu); rows and columns in slot order.
class OperatorRep {
 public:
  /// Largest leaf count accepted for a dense kernel.
  static constexpr std::int32_t kMaxLeaves = 4096;

  OperatorRep(Eigen::MatrixXd kernel, Measure mu, Measure nu);
  static OperatorRep identity(const Measure& mu, const Measure& nu);
  static OperatorRep zero(const Measure& mu, const Measure& nu);

  const Lattice& lattice() const { return mu_.lattice(); }
  const Eigen::MatrixXd& kernel() const { return k_; }
  const Measure& mu() const { return mu_; }
  const Measure& nu() const { return nu_; }

  StepFunction apply(const StepFunction& f) const;
  double bilinear(const StepFunction& f, const StepFunction& g) const;
  /// T* = W_mu^{-1} K^T W_nu, with zero rows at null mu leaves.
  OperatorRep adjoint() const;
  /// Largest singular value of W_nu^{1/2} K W_mu^{-1/2} over positive-weight coordinates.
  double norm() const;

  /// T applied to a function supported on q, read back on the leaves of r.
  Eigen::VectorXd block_apply(CubeIndex r, CubeIndex q, const Eigen::VectorXd& local_on_q) const;

 private:
  Eigen::MatrixXd k_;
  Measure mu_;
  Measure nu_;
};

double operator_norm(const OperatorRep& t);

struct WlPair {
  CubeIndex q = kNoCube;
  CubeIndex r = kNoCube;
  bool adjoint = false;
  double value = 0.0;
};

struct WlReport {
  int radius = 0;
  double tol = 1e-10;
  bool pass = true;
  double max_violation = 0.0;       // normalized, over pairs the definition constrains
  WlPair worst;
  double boundary_violation = 0.0;  // R = Q^(1), reported only
  WlPair worst_boundary;
  // Local checks only.
  double csc_kappa = 0.0;
  WlPair worst_csc;
  double csc_identity_gap = 0.0;
  std::size_t pairs_scanned = 0;
};

/// Triangular localization against the frames' test functions and difference ranges.
/// frame1 lives on mu (source), frame2 on nu (target).
WlReport check_wl_global(const OperatorRep& t, const AdaptedFrame& frame1, const AdaptedFrame& frame2, int r,
                         double tol = 1e-10);
/// As above with system frames, plus the cross-scale comparison scan.
WlReport check_wl_local(const OperatorRep& t, const SystemCalculus& sys1, const SystemCalculus& sys2, int r,
                        double tol = 1e-10);

struct TestingReport {
  int radius = 0;
  double t_a_fwd = 0.0;
  double t_a_adj = 0.0;
  double t_a_fwd_uncut = 0.0;
  double t_a_adj_uncut = 0.0;
  double t_b = 0.0;
  double t_b_delta = 0.0;  // difference-range compression form
  double t_c_fwd = 0.0;
  double t_c_adj = 0.0;
  // Filled by callers from check_wl_*; the testing functions leave them unset.
  bool wl_pass = false;
  double wl_max_violation = 0.0;
  double csc_kappa = 0.0;
};

TestingReport testing_global(const OperatorRep& t, const AdaptedFrame& frame1, const AdaptedFrame& frame2, int r);
TestingReport testing_local(const OperatorRep& t, const SystemCalculus& sys1, const SystemCalculus& sys2, int r);

/// sup ||1_Q T(b_Q)||^2 / mu(Q) (cut) or ||T(b_Q)||^2 / mu(Q) (uncut).
double testing_a(const OperatorRep& t, const AdaptedFrame& frame1, bool cut);
/// sup of the compression norm of T between ran Delta_Q (mu) and ran Delta_R (nu), |g_Q - g_R| <= r.
double testing_b_delta(const OperatorRep& t, const AdaptedFrame& frame1, const AdaptedFrame& frame2, int r);
/// sup over Q and P in ch^{r+1}(Q) inside the target change set of ||1_P T(b_Q)||^2 / mu(P).
double testing_c(const OperatorRep& t, const AdaptedFrame& frame1, const std::vector<bool>& target_set, int r);

/// Delta-range compression norm for one pair.
double compression_norm(const OperatorRep& t, const Eigen::MatrixXd& basis_q, CubeIndex q, const Eigen::MatrixXd& basis_r,
                        CubeIndex r);

/// sum_Q lambda_Q Delta_Q with the frame's differences (standard ones when b = 1).
OperatorRep make_multiplier(const AdaptedFrame& frame, const std::map<CubeIndex, double>& lambda);
/// Multiplier built from standard (b = 1) differences over m.
OperatorRep make_haar_multiplier(const Measure& m, const std::map<CubeIndex, double>& lambda);

struct ShiftParams {
  int s = 0;  // source complexity
  int t = 0;  // target complexity
  double coef_bound = 1.0;
  double density = 1.0;  // probability that a given top cube Q0 carries terms
  int max_attempts = 50;
};

/// Complexity guaranteed by the localization structure for radius r: max(r - 1, 0).
int default_shift_complexity(int r);

/// Shift-type candidate: sum over Q0 of rank-one couplings between ran (Delta_{R'})^* on nu
/// and ran (Delta_{Q'})^* on mu, Q' in ch^s Q0, R' in ch^t Q0.
OperatorRep shift_candidate(const AdaptedFrame& frame1, const AdaptedFrame& frame2, const ShiftParams& p, Rng& rng);
/// Rejection-samples shift_candidate against the global checker; throws GeneratorExhausted.
OperatorRep make_shift_candidate(const AdaptedFrame& frame1, const AdaptedFrame& frame2, int r, const ShiftParams& p,
                                 Rng& rng);
/// Rejection-samples against the local checker.
OperatorRep make_shift_candidate_local(const SystemCalculus& sys1, const SystemCalculus& sys2, int r,
                                       const ShiftParams& p, Rng& rng);
/// Diagonal multiplication operator with entries in [-bound, bound].
OperatorRep make_diagonal(const Measure& mu, const Measure& nu, double bound, Rng& rng);
/// I.i.d. normal kernel entries scaled by 1/sqrt(N).
OperatorRep make_dense_random(const Measure& mu, const Measure& nu, Rng& rng);
/// One entry coupling the first and last leaves.
OperatorRep make_far_entry(const Measure& mu, const Measure& nu, double value = 1.0);

}  // namespace dyadic
