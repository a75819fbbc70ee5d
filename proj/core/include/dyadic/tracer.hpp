#pragma once

#include <string>
#include <vector>

#include "dyadic/operators.hpp"

namespace dyadic {

/// Raised when a trace is requested for an operator that fails localization.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// One step of a replayed proof: pass iff lhs <= constant * rhs (+ slack).
struct TraceStep {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double constant = 0.0;
  std::string formula;
  bool identity = false;  // equality step: lhs is |difference|, constant is the relative tolerance
  bool pass = false;
};

struct Trace {
  std::vector<TraceStep> steps;
  double value = 0.0;           // <Tf, g>_nu
  double final_constant = 0.0;  // sum of the per-term constants
  double operator_norm = 0.0;
  std::vector<std::string> flags;
  bool all_pass() const;
  const TraceStep* find(const std::string& name) const;
};

struct TraceOptions {
  double identity_tol = 1e-10;
  double bound_slack = 1e-9;
  double wl_tol = 1e-10;
  bool require_wl = true;
};

// Explicit constants. C = sup|b|, delta = accretivity floor, lambda = sparsity of the change set.
double k_bd(double delta, double c);
double k_sq_single(double delta, double c);
double k_dsq_single(double delta, double c);
double lambda_beta_bound(double c, double lambda);
double k_sq_system(double delta, double c, double lambda);
double k_dsq_system(double delta, double c, double lambda);
double k_defect(double delta, double c);
/// Max pairs per cube in the comparable window: sum_{s=0}^r 2^{n(r+s)} and (r+1) 2^{nr}.
double pair_count_m(int n, int r);
double pair_count_n(int n, int r);

/// a_Q = sum over R in ch^r(Q) of ||(Delta_R)^* T(b_Q)||^2, for every cube.
CubeSequence carleson_aq(const OperatorRep& t, const AdaptedFrame& frame1, const AdaptedFrame& frame2, int r);

struct AqReport {
  CubeSequence a;
  double carleson = 0.0;
  double bound = 0.0;  // K_dsq2 * t_a_fwd
  double localization_gap = 0.0;
  bool pass = false;
};
AqReport carleson_aq_global(const OperatorRep& t, const Martingale& b1, const Martingale& b2, int r,
                            const TraceOptions& opt = {});

Trace trace_global(const OperatorRep& t, const Martingale& b1, const Martingale& b2, int r, const StepFunction& f,
                   const StepFunction& g, const TraceOptions& opt = {});
Trace trace_local(const OperatorRep& t, const SystemCalculus& sys1, const SystemCalculus& sys2, int r,
                  const StepFunction& f, const StepFunction& g, const TraceOptions& opt = {});
Trace trace_appendix(const SystemCalculus& sys, const StepFunction& f, const TraceOptions& opt = {});

}  // namespace dyadic
