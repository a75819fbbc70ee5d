#include "dyadic/martingale.hpp"

#include <cmath>
#include <limits>

namespace dyadic {

AccretiveReport check_accretive(const StepFunction& b, const Measure& m) {
  require_same(b.lattice, m.lattice(), "check_accretive");
  AccretiveReport rep;
  const auto& w = m.weights();
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w[i] > 0.0) rep.c_inf = std::max(rep.c_inf, std::abs(b.values[i]));
  const auto avg = averages(b, m);
  rep.delta = std::numeric_limits<double>::infinity();
  const double zero = 1e-14 * std::max(rep.c_inf, 1.0);
  for (CubeIndex q = 0; q < m.lattice().num_cubes(); ++q) {
    if (m.mass(q) <= 0.0) continue;
    const double a = std::abs(avg[static_cast<std::size_t>(q)]);
    if (a <= zero) rep.offending.push_back(q);
    rep.delta = std::min(rep.delta, a);
  }
  if (!std::isfinite(rep.delta)) rep.delta = 0.0;  // null measure
  rep.ok = rep.offending.empty() && rep.delta > 0.0;
  return rep;
}

StepFunction Decomposition::reconstruct(const Lattice& lat) const {
  StepFunction f(lat, top);
  for (const auto& p : pieces) seg(f.values, lat, p.cube) += p.local;
  return f;
}

void AdaptedFrame::init_means() {
  const Lattice& lat = lattice();
  bmean_.assign(static_cast<std::size_t>(lat.num_cubes()), 0.0);
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q) {
    const double mq = m_.mass(q);
    if (mq > 0.0) bmean_[static_cast<std::size_t>(q)] = b_local(q).dot(seg(m_.weights(), lat, q)) / mq;
  }
}

Eigen::VectorXd AdaptedFrame::embed(CubeIndex q, const Eigen::VectorXd& local) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(lattice().num_leaves());
  seg(v, lattice(), q) = local;
  return v;
}

StepFunction AdaptedFrame::test_function(CubeIndex q) const { return {lattice(), embed(q, b_local(q))}; }

std::vector<double> AdaptedFrame::ratios(const Eigen::VectorXd& f) const {
  const auto s = cube_sums(lattice(), f.cwiseProduct(m_.weights()));
  std::vector<double> rho(s.size(), 0.0);
  for (std::size_t q = 0; q < s.size(); ++q) {
    const double mq = m_.masses()[q];
    if (mq > 0.0 && bmean_[q] != 0.0) rho[q] = s[q] / (mq * bmean_[q]);
  }
  return rho;
}

double AdaptedFrame::ratio(CubeIndex q, const Eigen::VectorXd& f) const {
  const double mq = m_.mass(q);
  const double bq = b_mean(q);
  if (mq <= 0.0 || bq == 0.0) return 0.0;
  return seg(f, lattice(), q).dot(seg(m_.weights(), lattice(), q)) / (mq * bq);
}

Eigen::VectorXd AdaptedFrame::expectation_local(CubeIndex q, const Eigen::VectorXd& f) const {
  return ratio(q, f) * b_local(q);
}

Eigen::VectorXd AdaptedFrame::difference_local(CubeIndex q, const Eigen::VectorXd& f) const {
  const Lattice& lat = lattice();
  if (lat.is_leaf(q)) throw DepthError("difference on a leaf cube");
  const auto base = lat.leaves(q).begin;
  Eigen::VectorXd out = -ratio(q, f) * b_local(q);
  for (CubeIndex c : lat.children(q)) {
    const auto r = lat.leaves(c);
    out.segment(r.begin - base, r.size()) += ratio(c, f) * b_local(c);
  }
  return out;
}

Eigen::VectorXd AdaptedFrame::difference_from_ratios(CubeIndex q, const std::vector<double>& rho) const {
  const Lattice& lat = lattice();
  const auto base = lat.leaves(q).begin;
  Eigen::VectorXd out = -rho[static_cast<std::size_t>(q)] * b_local(q);
  for (CubeIndex c : lat.children(q)) {
    const auto r = lat.leaves(c);
    out.segment(r.begin - base, r.size()) += rho[static_cast<std::size_t>(c)] * b_local(c);
  }
  return out;
}

Eigen::VectorXd AdaptedFrame::adjoint_expectation_local(CubeIndex q, const Eigen::VectorXd& g) const {
  const auto n = lattice().leaves(q).size();
  const double mq = m_.mass(q);
  const double bq = b_mean(q);
  if (mq <= 0.0 || bq == 0.0) return Eigen::VectorXd::Zero(n);
  const double num = b_local(q).cwiseProduct(seg(g, lattice(), q)).dot(seg(m_.weights(), lattice(), q));
  return Eigen::VectorXd::Constant(n, num / (mq * bq));
}

Eigen::VectorXd AdaptedFrame::adjoint_difference_local(CubeIndex q, const Eigen::VectorXd& g_on_q) const {
  return adjoint_difference_transpose(q, g_on_q);
}

void AdaptedFrame::difference_factors(CubeIndex q, Eigen::MatrixXd& U, Eigen::MatrixXd& V) const {
  const Lattice& lat = lattice();
  if (lat.is_leaf(q)) throw DepthError("difference on a leaf cube");
  const auto base = lat.leaves(q).begin;
  const auto n = lat.leaves(q).size();
  const auto kids = lat.children(q);
  const auto k = static_cast<Eigen::Index>(kids.size());
  U.setZero(n, k + 1);
  V.setZero(n, k + 1);
  auto fill = [&](Eigen::Index col, CubeIndex c, double sign) {
    const auto r = lat.leaves(c);
    const double den = m_.mass(c) * b_mean(c);
    U.col(col).segment(r.begin - base, r.size()) = sign * b_local(c);
    if (den != 0.0) V.col(col).segment(r.begin - base, r.size()) = m_.weights().segment(r.begin, r.size()) / den;
  };
  for (Eigen::Index i = 0; i < k; ++i) fill(i, kids[static_cast<std::size_t>(i)], 1.0);
  fill(k, q, -1.0);
}

Eigen::VectorXd AdaptedFrame::adjoint_difference_transpose(CubeIndex q, const Eigen::VectorXd& g_on_q) const {
  Eigen::MatrixXd U, V;
  difference_factors(q, U, V);
  const auto w = seg(m_.weights(), lattice(), q);
  Eigen::VectorXd out = V * (U.transpose() * w.cwiseProduct(g_on_q));
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = w[i] > 0.0 ? out[i] / w[i] : 0.0;
  return out;
}

Eigen::MatrixXd AdaptedFrame::difference_range_basis(CubeIndex q) const {
  const Lattice& lat = lattice();
  const auto n = lat.leaves(q).size();
  const Eigen::VectorXd sw = seg(m_.weights(), lat, q).cwiseSqrt();
  const auto kids = lat.children(q);
  Eigen::MatrixXd A(n, static_cast<Eigen::Index>(kids.size()));
  for (std::size_t i = 0; i < kids.size(); ++i) {
    Eigen::VectorXd ind = Eigen::VectorXd::Zero(lat.num_leaves());
    seg(ind, lat, kids[i]).setOnes();
    A.col(static_cast<Eigen::Index>(i)) = sw.cwiseProduct(difference_local(q, ind));
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  const double cut = 1e-11 * std::max(s.size() ? s[0] : 0.0, 1e-300);
  Eigen::Index rank = 0;
  while (rank < s.size() && s[rank] > cut) ++rank;
  Eigen::MatrixXd B = svd.matrixU().leftCols(rank);
  for (Eigen::Index i = 0; i < n; ++i) B.row(i) = sw[i] > 0.0 ? Eigen::RowVectorXd(B.row(i) / sw[i]) : Eigen::RowVectorXd::Zero(rank);
  return B;
}

StepFunction AdaptedFrame::expectation(CubeIndex q, const StepFunction& f) const {
  require_same(f.lattice, lattice(), "expectation");
  return {lattice(), embed(q, expectation_local(q, f.values))};
}

StepFunction AdaptedFrame::difference(CubeIndex q, const StepFunction& f) const {
  require_same(f.lattice, lattice(), "difference");
  return {lattice(), embed(q, difference_local(q, f.values))};
}

StepFunction AdaptedFrame::adjoint_difference(CubeIndex q, const StepFunction& g) const {
  require_same(g.lattice, lattice(), "adjoint_difference");
  if (lattice().is_leaf(q)) throw DepthError("adjoint difference on a leaf cube");
  return {lattice(), embed(q, adjoint_difference_local(q, seg(g.values, lattice(), q)))};
}

Decomposition AdaptedFrame::decompose(const StepFunction& f) const {
  require_same(f.lattice, lattice(), "decompose");
  const Lattice& lat = lattice();
  const auto rho = ratios(f.values);
  Decomposition d;
  d.top = embed(lat.root(), rho[0] * b_local(lat.root()));
  if (lat.depth() == 0) return d;
  d.pieces.reserve(static_cast<std::size_t>(lat.generation_begin(lat.depth())));
  for (CubeIndex q = 0; q < lat.generation_begin(lat.depth()); ++q) d.pieces.push_back({q, difference_from_ratios(q, rho)});
  return d;
}

double AdaptedFrame::square_fn_ratio(const StepFunction& f) const {
  const double nf = norm(f, m_);
  if (nf <= 0.0) throw ZeroNormError("square_fn_ratio: zero-norm input");
  const Lattice& lat = lattice();
  const auto rho = ratios(f.values);
  double s = std::pow(wnorm(rho[0] * b_local(lat.root()), m_.weights()), 2);
  for (CubeIndex q = 0; lat.depth() > 0 && q < lat.generation_begin(lat.depth()); ++q)
    s += difference_from_ratios(q, rho).cwiseAbs2().dot(seg(m_.weights(), lat, q));
  return s / (nf * nf);
}

double AdaptedFrame::dual_square_fn_ratio(const StepFunction& f) const {
  const double nf = norm(f, m_);
  if (nf <= 0.0) throw ZeroNormError("dual_square_fn_ratio: zero-norm input");
  const Lattice& lat = lattice();
  double s = 0.0;
  for (CubeIndex q = 0; lat.depth() > 0 && q < lat.generation_begin(lat.depth()); ++q)
    s += adjoint_difference_local(q, seg(f.values, lat, q)).cwiseAbs2().dot(seg(m_.weights(), lat, q));
  return s / (nf * nf);
}

std::vector<double> AdaptedFrame::truncated_sum_norms(const StepFunction& f) const {
  const Lattice& lat = lattice();
  const auto rho = ratios(f.values);
  std::vector<double> out(static_cast<std::size_t>(lat.depth()) + 1, 0.0);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(lat.num_leaves());
  for (int g = lat.depth() - 1; g >= 0; --g) {
    for (CubeIndex q = lat.generation_begin(g); q < lat.generation_end(g); ++q) seg(acc, lat, q) += difference_from_ratios(q, rho);
    out[static_cast<std::size_t>(g)] = wnorm(acc, m_.weights());
  }
  return out;
}

Martingale::Martingale(StepFunction b, Measure m) : AdaptedFrame(std::move(m)), b_(std::move(b)) {
  report_ = check_accretive(b_, measure());
  if (!report_.ok)
    throw NotAccretiveError("function is not weakly accretive: " + std::to_string(report_.offending.size()) +
                            " cube(s) with vanishing average");
  init_means();
}

Eigen::VectorXd Martingale::b_local(CubeIndex q) const { return seg(b_.values, lattice(), q); }

}  // namespace dyadic
