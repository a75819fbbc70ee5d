#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dyadic/measure.hpp"

namespace dyadic {

/// Thrown when adapted expectations would divide by a vanishing average.
class NotAccretiveError : public Error {
 public:
  using Error::Error;
};

/// Thrown by ratio functions given a zero-norm input.
class ZeroNormError : public Error {
 public:
  using Error::Error;
};

/// Outcome of an accretivity scan.
struct AccretiveReport {
  bool ok = false;
  double delta = 0.0;  // min |<b>_Q| over positive-mass Q
  double c_inf = 0.0;  // ess sup |b|
  std::vector<CubeIndex> offending;
};

AccretiveReport check_accretive(const StepFunction& b, const Measure& m);

/// Slot-range view of a global vector on cube q.
inline auto seg(Eigen::VectorXd& v, const Lattice& lat, CubeIndex q) {
  const auto r = lat.leaves(q);
  return v.segment(r.begin, r.size());
}
inline auto seg(const Eigen::VectorXd& v, const Lattice& lat, CubeIndex q) {
  const auto r = lat.leaves(q);
  return v.segment(r.begin, r.size());
}

/// One non-leaf martingale piece, stored on its own cube.
struct Piece {
  CubeIndex cube;
  Eigen::VectorXd local;
};

struct Decomposition {
  Eigen::VectorXd top;  // E_root f, global
  std::vector<Piece> pieces;
  StepFunction reconstruct(const Lattice& lat) const;
};

/// Expectations and differences adapted to a family of test functions b_Q.
///
/// "Local" vectors live on the leaf range of their cube; global vectors are
/// full slot-order arrays. A cube with zero mass or zero b-integral has
/// ratio 0, so it contributes nothing.
class AdaptedFrame {
 public:
  explicit AdaptedFrame(Measure m) : m_(std::move(m)) {}
  virtual ~AdaptedFrame() = default;

  const Measure& measure() const { return m_; }
  const Lattice& lattice() const { return m_.lattice(); }

  /// b_Q on the leaves of Q.
  virtual Eigen::VectorXd b_local(CubeIndex q) const = 0;
  /// <b_Q>_Q.
  double b_mean(CubeIndex q) const { return bmean_[static_cast<std::size_t>(q)]; }
  StepFunction test_function(CubeIndex q) const;

  /// <f>_Q / <b_Q>_Q for every cube.
  std::vector<double> ratios(const Eigen::VectorXd& f) const;
  double ratio(CubeIndex q, const Eigen::VectorXd& f) const;

  Eigen::VectorXd expectation_local(CubeIndex q, const Eigen::VectorXd& f) const;
  Eigen::VectorXd difference_local(CubeIndex q, const Eigen::VectorXd& f) const;
  Eigen::VectorXd difference_from_ratios(CubeIndex q, const std::vector<double>& rho) const;
  /// (E_Q)^* g = (<b_Q g>_Q / <b_Q>_Q) 1_Q.
  Eigen::VectorXd adjoint_expectation_local(CubeIndex q, const Eigen::VectorXd& g) const;
  /// (Delta_Q)^* applied to g given on Q's leaves only.
  virtual Eigen::VectorXd adjoint_difference_local(CubeIndex q, const Eigen::VectorXd& g_on_q) const;
  /// Pairing transpose W^{-1} Delta^T W of the factored local map; zero on null leaves.
  Eigen::VectorXd adjoint_difference_transpose(CubeIndex q, const Eigen::VectorXd& g_on_q) const;

  /// Delta_Q = U V^T on Q's leaves (columns: children, then -Q).
  void difference_factors(CubeIndex q, Eigen::MatrixXd& U, Eigen::MatrixXd& V) const;
  /// Columns form a weighted-orthonormal basis of ran Delta_Q (local).
  Eigen::MatrixXd difference_range_basis(CubeIndex q) const;

  StepFunction expectation(CubeIndex q, const StepFunction& f) const;
  StepFunction difference(CubeIndex q, const StepFunction& f) const;
  StepFunction adjoint_difference(CubeIndex q, const StepFunction& g) const;

  Decomposition decompose(const StepFunction& f) const;
  /// (sum ||Delta_Q f||^2 + ||E_root f||^2) / ||f||^2.
  double square_fn_ratio(const StepFunction& f) const;
  /// sum ||(Delta_Q)^* f||^2 / ||f||^2.
  double dual_square_fn_ratio(const StepFunction& f) const;
  /// Entry d: ||sum over non-leaf Q with g(Q) >= d of Delta_Q f||, d = 0..D.
  std::vector<double> truncated_sum_norms(const StepFunction& f) const;

 protected:
  /// Caches <b_Q>_Q; derived constructors call this once b_local is usable.
  void init_means();
  Eigen::VectorXd embed(CubeIndex q, const Eigen::VectorXd& local) const;

 private:
  Measure m_;
  std::vector<double> bmean_;
};

/// Calculus adapted to a single accretive function: b_Q = b 1_Q.
class Martingale final : public AdaptedFrame {
 public:
  /// Throws NotAccretiveError if b fails the accretivity scan.
  Martingale(StepFunction b, Measure m);

  const StepFunction& b() const { return b_; }
  const AccretiveReport& report() const { return report_; }
  double delta() const { return report_.delta; }
  double c_inf() const { return report_.c_inf; }

  Eigen::VectorXd b_local(CubeIndex q) const override;

 private:
  StepFunction b_;
  AccretiveReport report_;
};

}  // namespace dyadic
