#include "dyadic/operators.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>

namespace dyadic {

OperatorRep::OperatorRep(Eigen::MatrixXd kernel, Measure mu, Measure nu)
    : k_(std::move(kernel)), mu_(std::move(mu)), nu_(std::move(nu)) {
  require_same(mu_.lattice(), nu_.lattice(), "operator");
  const auto n = mu_.lattice().num_leaves();
  if (n > kMaxLeaves) throw ShapeError("operator: dense kernels support at most " + std::to_string(kMaxLeaves) + " leaves");
  if (k_.rows() != n || k_.cols() != n) throw ShapeError("operator: kernel shape does not match lattice");
  if (!k_.allFinite()) throw Error("operator: kernel has non-finite entries");
}

OperatorRep OperatorRep::identity(const Measure& mu, const Measure& nu) {
  const auto n = mu.lattice().num_leaves();
  return {Eigen::MatrixXd::Identity(n, n), mu, nu};
}

OperatorRep OperatorRep::zero(const Measure& mu, const Measure& nu) {
  const auto n = mu.lattice().num_leaves();
  return {Eigen::MatrixXd::Zero(n, n), mu, nu};
}

StepFunction OperatorRep::apply(const StepFunction& f) const {
  require_same(f.lattice, lattice(), "apply");
  return {lattice(), k_ * f.values};
}

double OperatorRep::bilinear(const StepFunction& f, const StepFunction& g) const { return inner(apply(f), g, nu_); }

OperatorRep OperatorRep::adjoint() const {
  const auto& wm = mu_.weights();
  Eigen::MatrixXd a = k_.transpose() * nu_.weights().asDiagonal();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (wm[i] > 0.0) a.row(i) /= wm[i];
    else a.row(i).setZero();
  }
  return {std::move(a), nu_, mu_};
}

double OperatorRep::norm() const {
  const auto& wm = mu_.weights();
  std::vector<Eigen::Index> pos;
  for (Eigen::Index i = 0; i < wm.size(); ++i)
    if (wm[i] > 0.0) pos.push_back(i);
  if (pos.empty()) return 0.0;
  const Eigen::VectorXd snu = nu_.weights().cwiseSqrt();
  Eigen::MatrixXd m(k_.rows(), static_cast<Eigen::Index>(pos.size()));
  for (std::size_t j = 0; j < pos.size(); ++j)
    m.col(static_cast<Eigen::Index>(j)) = snu.cwiseProduct(k_.col(pos[j])) / std::sqrt(wm[pos[j]]);
  if (m.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()[0];
}

Eigen::VectorXd OperatorRep::block_apply(CubeIndex r, CubeIndex q, const Eigen::VectorXd& local_on_q) const {
  const auto rr = lattice().leaves(r);
  const auto rq = lattice().leaves(q);
  return k_.block(rr.begin, rq.begin, rr.size(), rq.size()) * local_on_q;
}

double operator_norm(const OperatorRep& t) { return t.norm(); }

namespace {

// Scans one direction: T maps frame_s.measure() to frame_t.measure().
void scan_triangular(const OperatorRep& t, const AdaptedFrame& fs, const AdaptedFrame& ft, int r, double tnorm,
                     bool adjoint, WlReport& rep) {
  const Lattice& lat = fs.lattice();
  const int D = lat.depth();
  if (D == 0 || tnorm == 0.0) return;
  const auto& wt = ft.measure().weights();
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q) {
    const double mq = fs.measure().mass(q);
    if (mq <= 0.0) continue;
    const auto rq = lat.leaves(q);
    const Eigen::VectorXd v = t.kernel().middleCols(rq.begin, rq.size()) * fs.b_local(q);
    const double scale = tnorm * std::sqrt(mq);
    const CubeIndex up = lat.ancestor(q, r);
    const CubeIndex par = lat.parent(q);
    const int gq = lat.generation(q);
    for (int g = std::max(gq - 1, 0); g < D; ++g) {
      for (CubeIndex R = lat.generation_begin(g); R < lat.generation_end(g); ++R) {
        const bool constrained = !lat.contains(up, R) || (g >= gq + r && !lat.contains(q, R));
        if (!constrained) continue;
        const bool boundary = (R == par);
        const Eigen::VectorXd a = ft.adjoint_difference_local(R, seg(v, lat, R));
        const double val = wnorm(a, seg(wt, lat, R)) / scale;
        ++rep.pairs_scanned;
        if (boundary) {
          if (val > rep.boundary_violation) {
            rep.boundary_violation = val;
            rep.worst_boundary = {q, R, adjoint, val};
          }
        } else if (val > rep.max_violation) {
          rep.max_violation = val;
          rep.worst = {q, R, adjoint, val};
        }
      }
    }
  }
}

}  // namespace

WlReport check_wl_global(const OperatorRep& t, const AdaptedFrame& frame1, const AdaptedFrame& frame2, int r,
                         double tol) {
  require_same(frame1.lattice(), t.lattice(), "check_wl");
  WlReport rep;
  rep.radius = r;
  rep.tol = tol;
  const double tn = t.norm();
  scan_triangular(t, frame1, frame2, r, tn, false, rep);
  scan_triangular(t.adjoint(), frame2, frame1, r, tn, true, rep);
  rep.pass = rep.max_violation <= tol;
  return rep;
}

WlReport check_wl_local(const OperatorRep& t, const SystemCalculus& sys1, const SystemCalculus& sys2, int r,
                        double tol) {
  WlReport rep = check_wl_global(t, sys1, sys2, r, tol);
  const double tn = t.norm();
  const Lattice& lat = t.lattice();
  const int D = lat.depth();
  const Partition p1 = partition(sys1.in_change_set(), lat);
  const auto& wn = sys2.measure().weights();
  double kappa = 1.0;  // Q = S always gives ratio 1
  for (CubeIndex q = 1; q < lat.num_cubes() && tn > 0.0; ++q) {
    const double mq = sys1.measure().mass(q);
    if (mq <= 0.0) continue;
    const int gq = lat.generation(q);
    const auto rq = lat.leaves(q);
    const Eigen::VectorXd bq = sys1.b_local(q);
    const double zero = std::pow(tol * tn, 2) * mq;
    for (CubeIndex s = lat.parent(q); s != kNoCube; s = lat.parent(s)) {
      if (p1.p[static_cast<std::size_t>(q)] != p1.p[static_cast<std::size_t>(s)]) continue;
      const auto rs = lat.leaves(s);
      const Eigen::VectorXd bs = sys1.b_local(s);
      const Eigen::VectorXd bs_on_q = bs.segment(rq.begin - rs.begin, rq.size());
      // The two test functions coincide on Q when no change cube separates Q from S.
      const Eigen::VectorXd diff = t.kernel().middleCols(rq.begin, rq.size()) * (bq - bs_on_q);
      rep.csc_identity_gap = std::max(rep.csc_identity_gap, wnorm(diff, wn) / (tn * std::sqrt(mq)));
      if (gq + r > D - 1) continue;
      for (CubeIndex R : lat.descendants_at(q, r)) {
        const Eigen::VectorXd num_v = sys2.adjoint_difference_local(R, t.block_apply(R, q, bs_on_q));
        const Eigen::VectorXd den_v = sys2.adjoint_difference_local(R, t.block_apply(R, s, bs));
        const double num = std::pow(wnorm(num_v, seg(wn, lat, R)), 2);
        const double den = std::pow(wnorm(den_v, seg(wn, lat, R)), 2);
        if (num <= zero) continue;
        const double k = den <= zero ? std::numeric_limits<double>::infinity() : num / den;
        if (k > kappa) {
          kappa = k;
          rep.worst_csc = {q, R, false, k};
        }
      }
    }
  }
  rep.csc_kappa = kappa;
  rep.pass = rep.pass && rep.csc_identity_gap <= tol;
  return rep;
}

double testing_a(const OperatorRep& t, const AdaptedFrame& frame1, bool cut) {
  const Lattice& lat = t.lattice();
  const auto& wn = t.nu().weights();
  double best = 0.0;
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q) {
    const double mq = frame1.measure().mass(q);
    if (mq <= 0.0) continue;
    const auto rq = lat.leaves(q);
    const Eigen::VectorXd v = t.kernel().middleCols(rq.begin, rq.size()) * frame1.b_local(q);
    const double nv = cut ? wnorm(seg(v, lat, q), seg(wn, lat, q)) : wnorm(v, wn);
    best = std::max(best, nv * nv / mq);
  }
  return best;
}

double compression_norm(const OperatorRep& t, const Eigen::MatrixXd& bq, CubeIndex q, const Eigen::MatrixXd& br,
                        CubeIndex r) {
  if (bq.cols() == 0 || br.cols() == 0) return 0.0;
  const Lattice& lat = t.lattice();
  const auto rr = lat.leaves(r);
  const auto rq = lat.leaves(q);
  const Eigen::MatrixXd m = br.transpose() * seg(t.nu().weights(), lat, r).asDiagonal() *
                            t.kernel().block(rr.begin, rq.begin, rr.size(), rq.size()) * bq;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
}

double testing_b_delta(const OperatorRep& t, const AdaptedFrame& frame1, const AdaptedFrame& frame2, int r) {
  const Lattice& lat = t.lattice();
  const int D = lat.depth();
  if (D == 0) return 0.0;
  const CubeIndex nonleaf = lat.generation_begin(D);
  std::vector<Eigen::MatrixXd> b1(static_cast<std::size_t>(nonleaf)), b2(static_cast<std::size_t>(nonleaf));
  for (CubeIndex q = 0; q < nonleaf; ++q) {
    b1[static_cast<std::size_t>(q)] = frame1.difference_range_basis(q);
    b2[static_cast<std::size_t>(q)] = frame2.difference_range_basis(q);
  }
  const auto& wn = t.nu().weights();
  double best = 0.0;
  for (CubeIndex q = 0; q < nonleaf; ++q) {
    const auto& bq = b1[static_cast<std::size_t>(q)];
    if (bq.cols() == 0) continue;
    const auto rq = lat.leaves(q);
    const Eigen::MatrixXd tb = t.kernel().middleCols(rq.begin, rq.size()) * bq;
    const int gq = lat.generation(q);
    for (int g = std::max(gq - r, 0); g <= std::min(gq + r, D - 1); ++g)
      for (CubeIndex R = lat.generation_begin(g); R < lat.generation_end(g); ++R) {
        const auto& br = b2[static_cast<std::size_t>(R)];
        if (br.cols() == 0) continue;
        const auto rr = lat.leaves(R);
        const Eigen::MatrixXd m = br.transpose() * wn.segment(rr.begin, rr.size()).asDiagonal() * tb.middleRows(rr.begin, rr.size());
        if (m.cwiseAbs().maxCoeff() == 0.0) continue;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
        best = std::max(best, svd.singularValues()[0]);
      }
  }
  return best;
}

double testing_c(const OperatorRep& t, const AdaptedFrame& frame1, const std::vector<bool>& target_set, int r) {
  const Lattice& lat = t.lattice();
  const auto& wn = t.nu().weights();
  double best = 0.0;
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q) {
    if (lat.generation(q) + r + 1 > lat.depth()) continue;
    if (frame1.measure().mass(q) <= 0.0) continue;
    const auto rq = lat.leaves(q);
    std::optional<Eigen::VectorXd> v;
    for (CubeIndex p : lat.descendants_at(q, r + 1)) {
      if (!target_set[static_cast<std::size_t>(p)]) continue;
      const double mp = frame1.measure().mass(p);
      if (!v) v = t.kernel().middleCols(rq.begin, rq.size()) * frame1.b_local(q);
      const double np = wnorm(seg(*v, lat, p), seg(wn, lat, p));
      if (mp > 0.0) best = std::max(best, np * np / mp);
      else if (np > 0.0) return std::numeric_limits<double>::infinity();
    }
  }
  return best;
}

TestingReport testing_global(const OperatorRep& t, const AdaptedFrame& frame1, const AdaptedFrame& frame2, int r) {
  const Lattice& lat = t.lattice();
  const OperatorRep ta = t.adjoint();
  TestingReport rep;
  rep.radius = r;
  rep.t_a_fwd = testing_a(t, frame1, true);
  rep.t_a_adj = testing_a(ta, frame2, true);
  rep.t_a_fwd_uncut = testing_a(t, frame1, false);
  rep.t_a_adj_uncut = testing_a(ta, frame2, false);

  const auto& wm = t.mu().weights();
  const auto& wn = t.nu().weights();
  std::vector<double> n2(static_cast<std::size_t>(lat.num_cubes()));
  for (CubeIndex R = 0; R < lat.num_cubes(); ++R) n2[static_cast<std::size_t>(R)] = wnorm(frame2.b_local(R), seg(wn, lat, R));
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q) {
    const Eigen::VectorXd bq = frame1.b_local(q);
    const double n1 = wnorm(bq, seg(wm, lat, q));
    if (n1 <= 0.0) continue;
    const auto rq = lat.leaves(q);
    const Eigen::VectorXd v = t.kernel().middleCols(rq.begin, rq.size()) * bq;
    const int gq = lat.generation(q);
    for (int g = std::max(gq - r, 0); g <= std::min(gq + r, lat.depth()); ++g)
      for (CubeIndex R = lat.generation_begin(g); R < lat.generation_end(g); ++R) {
        const double d = n2[static_cast<std::size_t>(R)];
        if (d <= 0.0) continue;
        const double pr = seg(v, lat, R).cwiseProduct(frame2.b_local(R)).dot(seg(wn, lat, R));
        rep.t_b = std::max(rep.t_b, std::abs(pr) / (n1 * d));
      }
  }
  rep.t_b_delta = testing_b_delta(t, frame1, frame2, r);
  return rep;
}

TestingReport testing_local(const OperatorRep& t, const SystemCalculus& sys1, const SystemCalculus& sys2, int r) {
  const OperatorRep ta = t.adjoint();
  TestingReport rep;
  rep.radius = r;
  rep.t_a_fwd_uncut = testing_a(t, sys1, false);
  rep.t_a_adj_uncut = testing_a(ta, sys2, false);
  rep.t_a_fwd = rep.t_a_fwd_uncut;
  rep.t_a_adj = rep.t_a_adj_uncut;
  rep.t_b_delta = testing_b_delta(t, sys1, sys2, r);
  rep.t_b = rep.t_b_delta;
  rep.t_c_fwd = testing_c(t, sys1, sys2.in_change_set(), r);
  rep.t_c_adj = testing_c(ta, sys2, sys1.in_change_set(), r);
  return rep;
}

OperatorRep make_multiplier(const AdaptedFrame& frame, const std::map<CubeIndex, double>& lambda) {
  const Lattice& lat = frame.lattice();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(lat.num_leaves(), lat.num_leaves());
  Eigen::MatrixXd U, V;
  for (const auto& [q, l] : lambda) {
    if (l == 0.0 || lat.is_leaf(q)) continue;
    frame.difference_factors(q, U, V);
    const auto rq = lat.leaves(q);
    k.block(rq.begin, rq.begin, rq.size(), rq.size()) += l * U * V.transpose();
  }
  return {std::move(k), frame.measure(), frame.measure()};
}

OperatorRep make_haar_multiplier(const Measure& m, const std::map<CubeIndex, double>& lambda) {
  const Martingale std_frame(StepFunction::constant(m.lattice(), 1.0), m);
  return make_multiplier(std_frame, lambda);
}

int default_shift_complexity(int r) { return std::max(r - 1, 0); }

OperatorRep shift_candidate(const AdaptedFrame& frame1, const AdaptedFrame& frame2, const ShiftParams& p, Rng& rng) {
  const Lattice& lat = frame1.lattice();
  const int D = lat.depth();
  const auto& wm = frame1.measure().weights();
  const auto& wn = frame2.measure().weights();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(lat.num_leaves(), lat.num_leaves());
  for (CubeIndex q0 = 0; q0 < lat.num_cubes(); ++q0) {
    const int g0 = lat.generation(q0);
    if (g0 + std::max(p.s, p.t) > D - 1) break;
    if (!rng.bernoulli(p.density)) continue;
    for (CubeIndex qs : lat.descendants_at(q0, p.s))
      for (CubeIndex rt : lat.descendants_at(q0, p.t)) {
        const auto rq = lat.leaves(qs);
        const auto rr = lat.leaves(rt);
        Eigen::VectorXd u(rr.size()), v(rq.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.normal();
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
        Eigen::VectorXd x = frame2.adjoint_difference_local(rt, u);
        Eigen::VectorXd y = frame1.adjoint_difference_local(qs, v);
        const double nx = wnorm(x, wn.segment(rr.begin, rr.size()));
        const double ny = wnorm(y, wm.segment(rq.begin, rq.size()));
        if (nx <= 0.0 || ny <= 0.0) continue;
        x /= nx;
        y = y.cwiseProduct(wm.segment(rq.begin, rq.size())) / ny;
        const double c = rng.uniform(-p.coef_bound, p.coef_bound);
        k.block(rr.begin, rq.begin, rr.size(), rq.size()) += c * x * y.transpose();
      }
  }
  return {std::move(k), frame1.measure(), frame2.measure()};
}

OperatorRep make_shift_candidate(const AdaptedFrame& frame1, const AdaptedFrame& frame2, int r, const ShiftParams& p,
                                 Rng& rng) {
  for (int attempt = 0; attempt < p.max_attempts; ++attempt) {
    OperatorRep t = shift_candidate(frame1, frame2, p, rng);
    if (check_wl_global(t, frame1, frame2, r).pass) return t;
  }
  throw GeneratorExhausted("shift candidate: no well-localized sample in " + std::to_string(p.max_attempts) + " attempts");
}

OperatorRep make_shift_candidate_local(const SystemCalculus& sys1, const SystemCalculus& sys2, int r,
                                       const ShiftParams& p, Rng& rng) {
  for (int attempt = 0; attempt < p.max_attempts; ++attempt) {
    OperatorRep t = shift_candidate(sys1, sys2, p, rng);
    if (check_wl_local(t, sys1, sys2, r).pass) return t;
  }
  throw GeneratorExhausted("local shift candidate: no well-localized sample in " + std::to_string(p.max_attempts) +
                           " attempts");
}

OperatorRep make_diagonal(const Measure& mu, const Measure& nu, double bound, Rng& rng) {
  const auto n = mu.lattice().num_leaves();
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) d[i] = rng.uniform(-bound, bound);
  return {Eigen::MatrixXd(d.asDiagonal()), mu, nu};
}

OperatorRep make_dense_random(const Measure& mu, const Measure& nu, Rng& rng) {
  const auto n = mu.lattice().num_leaves();
  Eigen::MatrixXd k(n, n);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) k(i, j) = s * rng.normal();
  return {std::move(k), mu, nu};
}

OperatorRep make_far_entry(const Measure& mu, const Measure& nu, double value) {
  const auto n = mu.lattice().num_leaves();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  k(n - 1, 0) = value;
  return {std::move(k), mu, nu};
}

}  // namespace dyadic
