#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dyadic/carleson.hpp"
#include "dyadic/martingale.hpp"

namespace dyadic {

/// Family {b_Q} stored compactly: a few "source" cubes carry explicit
/// vectors and every other cube inherits b_Q = b_{Q^(1)} 1_Q.
class AccretiveSystem {
 public:
  /// b_Q = b 1_Q for all Q.
  static AccretiveSystem constant(const StepFunction& b, double delta, double c);
  /// Explicit entries (local vectors on their cube); the root is required.
  static AccretiveSystem table(const Lattice& lat, double delta, double c, std::map<CubeIndex, Eigen::VectorXd> entries);

  const Lattice& lattice() const { return lat_; }
  double delta() const { return delta_; }
  double c() const { return c_; }
  bool is_constant() const { return entries_.size() == 1; }

  /// Cube whose stored vector supplies b_Q.
  CubeIndex source(CubeIndex q) const { return source_[static_cast<std::size_t>(q)]; }
  Eigen::VectorXd b_local(CubeIndex q) const;
  StepFunction b(CubeIndex q) const;
  const std::map<CubeIndex, Eigen::VectorXd>& entries() const { return entries_; }

  /// Provenance recorded by a construction (assigned ancestor per cube), if any.
  const std::vector<CubeIndex>& provenance() const { return provenance_; }
  void set_provenance(std::vector<CubeIndex> p) { provenance_ = std::move(p); }

  /// Non-root Q with b_Q != b_{Q^(1)} 1_Q, by value comparison at tolerance tol.
  std::vector<bool> change_set(double tol = 1e-12) const;

 private:
  AccretiveSystem(Lattice lat, double delta, double c, std::map<CubeIndex, Eigen::VectorXd> entries);

  Lattice lat_;
  double delta_;
  double c_;
  std::map<CubeIndex, Eigen::VectorXd> entries_;
  std::vector<CubeIndex> source_;
  std::vector<CubeIndex> provenance_;
};

struct SystemViolation {
  CubeIndex cube;
  std::string condition;
  double value;
};

struct SystemReport {
  bool ok = false;
  double delta = 0.0;  // min |<b_Q>_Q| over positive-mass Q
  double c = 0.0;      // max sup |b_Q| over positive-weight leaves
  std::vector<bool> in_change_set;
  std::vector<CubeIndex> change_set;
  double sparsity = 0.0;
  bool provenance_consistent = true;
  std::vector<SystemViolation> violations;
};

SystemReport verify_system(const AccretiveSystem& sys, const Measure& m);

/// Pair of systems: b1 over mu, b2 over nu, with the four sparsity constants.
struct PairedSystem {
  AccretiveSystem b1;
  AccretiveSystem b2;
  SystemReport r1;  // b1 against mu
  SystemReport r2;  // b2 against nu
  double lambda_b1_nu = 0.0;
  double lambda_b2_mu = 0.0;
  bool ok() const;
};

PairedSystem make_paired(AccretiveSystem b1, AccretiveSystem b2, const Measure& mu, const Measure& nu);

/// D_b / C_b split: p[Q] is the minimal P in S containing Q, or kNoCube if Q is in C_b.
struct Partition {
  std::vector<bool> in_set;
  std::vector<CubeIndex> p;
  bool in_db(CubeIndex q) const { return p[static_cast<std::size_t>(q)] != kNoCube; }
};

Partition partition(const std::vector<bool>& in_set, const Lattice& lat);
Partition partition(const AccretiveSystem& sys);

/// b(x) = b_Q(x) for x in any C_b cube Q, 0 elsewhere; throws on inconsistency.
StepFunction global_b(const AccretiveSystem& sys, const Partition& part);

/// phi_P for one stopping child P of Q, on P's leaves.
struct DefectPiece {
  CubeIndex cube;
  Eigen::VectorXd local;
};

/// Expectations and differences adapted to a system.
class SystemCalculus final : public AdaptedFrame {
 public:
  SystemCalculus(AccretiveSystem sys, Measure m);

  const AccretiveSystem& system() const { return sys_; }
  const std::vector<bool>& in_change_set() const { return in_s_; }

  Eigen::VectorXd b_local(CubeIndex q) const override;
  /// Explicit dual formula: sum over children of (<b_c g>_c/<b_c>_c - <b_Q g>_Q/<b_Q>_Q) 1_c.
  Eigen::VectorXd adjoint_difference_local(CubeIndex q, const Eigen::VectorXd& g_on_q) const override;

  /// phi_P for P in ch(Q) and S_b.
  std::vector<DefectPiece> defect(CubeIndex q, const Eigen::VectorXd& f) const;
  /// beta_Q = |<b_{Q^(1)}>_Q - <b_{Q^(1)}>_{Q^(1)}|^2 mu(Q) for non-root Q outside S_b.
  CubeSequence beta_sequence() const;

 private:
  AccretiveSystem sys_;
  std::vector<bool> in_s_;
};

/// b-tilde attached to a stopping cube (a full slot-order vector; only its values on the cube matter).
using StopProvider = std::function<Eigen::VectorXd(CubeIndex)>;

struct StopRatio {
  CubeIndex cube;
  int level;     // stopping generation j of the cube
  double ratio;  // mass of next-level stops inside / mass of cube
};

struct StoppingResult {
  AccretiveSystem system;
  std::vector<CubeIndex> stops;  // every stopping cube, root first
  std::vector<StopRatio> ratios;
  double tau = 0.0;
  double max_ratio = 0.0;
  double sparsity = 0.0;
};

/// Threshold/floor pair bound: (C - delta) / (C - theta).
double stopping_tau(double delta, double c, double theta);

/// Maximal sub-cubes with |int_Q b_R| < theta mu(Q) become new stops, recursively.
/// Throws if b_top breaks its stated constants.
StoppingResult stopping_construction(const StopProvider& provider, const Measure& m, double delta, double c, double theta);
/// Same, with b_top at the root and 1 on every later stop.
StoppingResult stopping_construction(const StepFunction& b_top, const Measure& m, double delta, double c);

}  // namespace dyadic
