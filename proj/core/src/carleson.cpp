#include "dyadic/carleson.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "dyadic/martingale.hpp"

namespace dyadic {

namespace {

void require_size(const CubeSequence& a, const Lattice& lat) {
  if (static_cast<CubeIndex>(a.size()) != lat.num_cubes()) throw ShapeError("cube sequence size does not match lattice");
}

}  // namespace

double carleson_constant(const CubeSequence& a, const Measure& m) {
  const Lattice& lat = m.lattice();
  require_size(a, lat);
  // Subtree sums bottom-up: children have larger indices than parents.
  std::vector<double> sub(a);
  for (CubeIndex q = lat.num_cubes() - 1; q > 0; --q) sub[static_cast<std::size_t>(lat.parent(q))] += sub[static_cast<std::size_t>(q)];
  double best = 0.0;
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q) {
    const double s = sub[static_cast<std::size_t>(q)];
    const double mq = m.mass(q);
    if (mq > 0.0) best = std::max(best, s / mq);
    else if (s > 0.0) return std::numeric_limits<double>::infinity();
  }
  return best;
}

double embedding_ratio(const CubeSequence& a, const Measure& m, const StepFunction& f) {
  require_size(a, m.lattice());
  const double nf = norm(f, m);
  if (nf <= 0.0) throw ZeroNormError("embedding_ratio: zero-norm input");
  const auto avg = averages(f, m);
  double s = 0.0;
  for (std::size_t q = 0; q < a.size(); ++q) s += a[q] * avg[q] * avg[q];
  return s / (nf * nf);
}

double sparsity_check(const std::vector<bool>& in_set, const Measure& m) {
  CubeSequence a(static_cast<std::size_t>(m.lattice().num_cubes()), 0.0);
  for (std::size_t q = 0; q < a.size() && q < in_set.size(); ++q)
    if (in_set[q]) a[q] = m.masses()[q];
  return carleson_constant(a, m);
}

double sparsity_check(const std::vector<CubeIndex>& set, const Measure& m) {
  std::vector<bool> in(static_cast<std::size_t>(m.lattice().num_cubes()), false);
  for (CubeIndex q : set) in[static_cast<std::size_t>(q)] = true;
  return sparsity_check(in, m);
}

double usf_ratio(const StepFunction& f, const Measure& m) {
  const double nf = norm(f, m);
  if (nf <= 0.0) throw ZeroNormError("usf_ratio: zero-norm input");
  const Lattice& lat = m.lattice();
  const auto avg = averages(f, m);
  double s = 0.0;
  for (CubeIndex q = 1; q < lat.num_cubes(); ++q) {
    const double d = avg[static_cast<std::size_t>(lat.parent(q))] - avg[static_cast<std::size_t>(q)];
    s += d * d * m.mass(q);
  }
  return s / (nf * nf);
}

double weighted_quadratic_sup(const Eigen::MatrixXd& A, const Eigen::VectorXd& w) {
  std::vector<Eigen::Index> pos;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w[i] > 0.0) pos.push_back(i);
  const auto k = static_cast<Eigen::Index>(pos.size());
  if (k == 0) return 0.0;
  Eigen::MatrixXd B(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      B(i, j) = A(pos[static_cast<std::size_t>(i)], pos[static_cast<std::size_t>(j)]) /
                std::sqrt(w[pos[static_cast<std::size_t>(i)]] * w[pos[static_cast<std::size_t>(j)]]);
  B = 0.5 * (B + B.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B, Eigen::EigenvaluesOnly);
  return std::max(es.eigenvalues().maxCoeff(), 0.0);
}

namespace {

// Row vector v with v.f = <f>_Q.
Eigen::VectorXd average_functional(const Measure& m, CubeIndex q) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(m.lattice().num_leaves());
  if (m.mass(q) > 0.0) seg(v, m.lattice(), q) = seg(m.weights(), m.lattice(), q) / m.mass(q);
  return v;
}

}  // namespace

double embedding_sup(const CubeSequence& a, const Measure& m) {
  require_size(a, m.lattice());
  const auto N = m.lattice().num_leaves();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  for (CubeIndex q = 0; q < m.lattice().num_cubes(); ++q) {
    const double aq = a[static_cast<std::size_t>(q)];
    if (aq == 0.0) continue;
    const Eigen::VectorXd v = average_functional(m, q);
    A.noalias() += aq * v * v.transpose();
  }
  return weighted_quadratic_sup(A, m.weights());
}

double usf_sup(const Measure& m) {
  const Lattice& lat = m.lattice();
  const auto N = lat.num_leaves();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  for (CubeIndex q = 1; q < lat.num_cubes(); ++q) {
    const Eigen::VectorXd v = average_functional(m, lat.parent(q)) - average_functional(m, q);
    A.noalias() += m.mass(q) * v * v.transpose();
  }
  return weighted_quadratic_sup(A, m.weights());
}

}  // namespace dyadic
