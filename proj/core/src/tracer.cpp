#include "dyadic/tracer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dyadic {

bool Trace::all_pass() const {
  return std::all_of(steps.begin(), steps.end(), [](const TraceStep& s) { return s.pass; });
}

const TraceStep* Trace::find(const std::string& name) const {
  for (const auto& s : steps)
    if (s.name == name) return &s;
  return nullptr;
}

double k_bd(double delta, double c) { return 1.0 + c / delta; }

double k_sq_single(double delta, double c) {
  const double q = c * c / (delta * delta);
  return q * (3.0 + 8.0 * q);
}

double k_dsq_single(double delta, double c) {
  const double q = c * c / (delta * delta);
  return q * (2.0 + 8.0 * q);
}

double lambda_beta_bound(double c, double lambda) { return c * c * (5.0 + lambda); }

double k_sq_system(double delta, double c, double lambda) {
  const double d2 = delta * delta;
  return c * c / d2 * (24.0 * lambda + 7.0) + 8.0 * c * c * lambda_beta_bound(c, lambda) / (d2 * d2);
}

double k_dsq_system(double delta, double c, double lambda) {
  const double d2 = delta * delta;
  return c * c / d2 * (40.0 * lambda + 4.0) + 8.0 * c * c * lambda_beta_bound(c, lambda) / (d2 * d2);
}

double k_defect(double delta, double c) { return (c / delta) * (c / delta + 1.0); }

double pair_count_m(int n, int r) {
  double s = 0.0;
  for (int k = 0; k <= r; ++k) s += std::ldexp(1.0, n * (r + k));
  return s;
}

double pair_count_n(int n, int r) { return (r + 1) * std::ldexp(1.0, n * r); }

namespace {

using Eigen::VectorXd;

std::size_t ix(CubeIndex q) { return static_cast<std::size_t>(q); }

class StepLog {
 public:
  StepLog(Trace& tr, const TraceOptions& opt) : tr_(tr), opt_(opt) {}

  /// lhs <= constant * rhs.
  void bound(const std::string& name, double lhs, double constant, double rhs, const std::string& formula) {
    const double cap = constant * rhs;
    const bool ok = std::isfinite(lhs) && lhs <= cap + opt_.bound_slack * std::max(1.0, std::abs(cap));
    tr_.steps.push_back({name, lhs, rhs, constant, formula, false, ok});
  }

  /// |a - b| <= tol * scale.
  void identity(const std::string& name, double a, double b, double scale, const std::string& formula) {
    const double d = std::abs(a - b);
    const double s = std::max(scale, std::numeric_limits<double>::min());
    const bool ok = std::isfinite(d) && (d == 0.0 || d <= opt_.identity_tol * s);
    tr_.steps.push_back({name, d, s, opt_.identity_tol, formula, true, ok});
  }

 private:
  Trace& tr_;
  const TraceOptions& opt_;
};

/// Function with the values on null leaves cleared; those leaves carry no L2 mass.
VectorXd masked(const StepFunction& f, const Measure& m) {
  VectorXd v = f.values;
  const auto& w = m.weights();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (w[i] <= 0.0) v[i] = 0.0;
  return v;
}

double wdot(const VectorXd& a, const VectorXd& b, const VectorXd& w) { return a.cwiseProduct(b).dot(w); }

/// The bilinear form split into top/bottom pieces and scale windows.
struct Split {
  VectorXd f, g;  // masked inputs
  std::vector<double> rho_f, rho_g;
  std::vector<VectorXd> df, dg;  // local differences per cube (empty at leaves)
  double nf = 0.0, ng = 0.0;
  double value = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
  double s11 = 0.0, s12 = 0.0, s13 = 0.0, s14 = 0.0;
  double s13_pairs = 0.0, s14_pairs = 0.0;
  double pair_ratio = 0.0;  // max |<T Delta_Q f, Delta_R g>| / (||Delta_Q f|| ||Delta_R g||)
  int count_m = 0, count_n = 0;
  double sq_f = 0.0, sq_g = 0.0;  // square functions including the top term
  double scale = 0.0;             // ||T|| ||f|| ||g||, floor for identity checks
};

Split split(const OperatorRep& t, const AdaptedFrame& fr1, const AdaptedFrame& fr2, int r, const StepFunction& f,
            const StepFunction& g) {
  const Lattice& lat = t.lattice();
  const int D = lat.depth();
  const auto& wm = t.mu().weights();
  const auto& wn = t.nu().weights();
  const Eigen::MatrixXd& K = t.kernel();
  Split s;
  s.f = masked(f, t.mu());
  s.g = masked(g, t.nu());
  s.nf = wnorm(s.f, wm);
  s.ng = wnorm(s.g, wn);
  if (s.nf <= 0.0 || s.ng <= 0.0) throw ZeroNormError("trace: zero-norm input");
  s.rho_f = fr1.ratios(s.f);
  s.rho_g = fr2.ratios(s.g);

  const VectorXd f2 = s.rho_f[0] * fr1.b_local(lat.root());
  const VectorXd g2 = s.rho_g[0] * fr2.b_local(lat.root());
  const VectorXd f1 = s.f - f2;
  const VectorXd g1 = s.g - g2;
  s.value = wdot(K * s.f, s.g, wn);
  s.s1 = wdot(K * f1, g1, wn);
  s.s2 = wdot(K * f2, g1, wn);
  s.s3 = wdot(K * f1, g2, wn);
  s.s4 = wdot(K * f2, g2, wn);

  const auto nc = ix(lat.num_cubes());
  s.df.assign(nc, VectorXd());
  s.dg.assign(nc, VectorXd());
  std::vector<VectorXd> F(static_cast<std::size_t>(D), VectorXd::Zero(lat.num_leaves()));
  std::vector<VectorXd> G = F;
  s.sq_f = std::pow(wnorm(f2, wm), 2);
  s.sq_g = std::pow(wnorm(g2, wn), 2);
  for (CubeIndex q = 0; q < lat.generation_begin(D); ++q) {
    const auto gq = static_cast<std::size_t>(lat.generation(q));
    s.df[ix(q)] = fr1.difference_from_ratios(q, s.rho_f);
    s.dg[ix(q)] = fr2.difference_from_ratios(q, s.rho_g);
    seg(F[gq], lat, q) += s.df[ix(q)];
    seg(G[gq], lat, q) += s.dg[ix(q)];
    s.sq_f += std::pow(wnorm(s.df[ix(q)], seg(wm, lat, q)), 2);
    s.sq_g += std::pow(wnorm(s.dg[ix(q)], seg(wn, lat, q)), 2);
  }
  for (int k = 0; k < D; ++k) {
    const VectorXd tf = K * F[static_cast<std::size_t>(k)];
    for (int l = 0; l < D; ++l) {
      const double m = wdot(tf, G[static_cast<std::size_t>(l)], wn);
      if (l > k + r) s.s11 += m;
      else if (k > l + r) s.s12 += m;
      else if (l >= k) s.s13 += m;
      else s.s14 += m;
    }
  }

  // Pairs that survive localization, summed one by one.
  std::vector<int> q13(nc, 0), r13(nc, 0), q14(nc, 0), r14(nc, 0);
  for (CubeIndex q = 0; q < lat.generation_begin(D); ++q) {
    const int gq = lat.generation(q);
    const auto rq = lat.leaves(q);
    const double nq = wnorm(s.df[ix(q)], seg(wm, lat, q));
    const VectorXd v = K.middleCols(rq.begin, rq.size()) * s.df[ix(q)];
    auto visit = [&](CubeIndex R, bool upper) {
      const double p = wdot(seg(v, lat, R), s.dg[ix(R)], seg(wn, lat, R));
      (upper ? s.s13_pairs : s.s14_pairs) += p;
      ++(upper ? q13 : q14)[ix(q)];
      ++(upper ? r13 : r14)[ix(R)];
      const double nr = wnorm(s.dg[ix(R)], seg(wn, lat, R));
      if (nq > 0.0 && nr > 0.0) s.pair_ratio = std::max(s.pair_ratio, std::abs(p) / (nq * nr));
    };
    const CubeIndex a = lat.ancestor(q, r);
    for (int gr = gq; gr <= std::min(gq + r, D - 1); ++gr)
      for (CubeIndex R : lat.descendants_at(a, gr - lat.generation(a))) visit(R, true);
    for (int gr = std::max(gq - r, 0); gr < gq; ++gr) {
      const CubeIndex top = lat.ancestor(q, gq - std::max(gr - r, 0));
      for (CubeIndex R : lat.descendants_at(top, gr - lat.generation(top))) visit(R, false);
    }
  }
  for (std::size_t i = 0; i < nc; ++i) {
    s.count_m = std::max({s.count_m, q13[i], r14[i]});
    s.count_n = std::max({s.count_n, r13[i], q14[i]});
  }
  s.scale = t.norm() * s.nf * s.ng;
  return s;
}

/// Far-window sum collapsed onto the test functions: main = sum_Q rho_Q <T b_Q, sum_{R in ch^r Q} Delta_R x>
/// over g(Q) >= 1, top = -rho_root <T b_root, sum_{g(R) > r} Delta_R x>.
struct Collapse {
  double main = 0.0, top = 0.0;
  double t1 = 0.0, t2 = 0.0;  // main split through Delta_R^2 and the defects
  CubeSequence a;             // a_Q
  CubeSequence bseq;          // sum over P in ch^{r+1}(Q) of the target change set of ||1_P T b_Q||^2
  std::vector<double> adj_norm;  // per R: ||(Delta_R)^* T b_{Q}|| with Q the r-th ancestor
  double defect_sq = 0.0;        // sum over R of sum_P ||phi_P(x)||^2
};

Collapse collapse(const OperatorRep& t, const AdaptedFrame& fe, const AdaptedFrame& fd, const std::vector<double>& rho_e,
                  const VectorXd& x, const std::vector<double>& rho_x, int r, const std::vector<bool>* target_set) {
  const Lattice& lat = t.lattice();
  const int D = lat.depth();
  const auto& wd = t.nu().weights();
  const Eigen::MatrixXd& K = t.kernel();
  const auto* sd = dynamic_cast<const SystemCalculus*>(&fd);
  Collapse c;
  c.a.assign(ix(lat.num_cubes()), 0.0);
  c.bseq.assign(ix(lat.num_cubes()), 0.0);
  c.adj_norm.assign(ix(lat.num_cubes()), 0.0);

  VectorXd far = VectorXd::Zero(lat.num_leaves());
  for (CubeIndex R = lat.generation_begin(std::min(r + 1, D)); R < lat.generation_begin(D); ++R)
    seg(far, lat, R) += fd.difference_from_ratios(R, rho_x);
  c.top = -rho_e[0] * wdot(K * fe.b_local(lat.root()), far, wd);

  for (CubeIndex q = 0; q < lat.num_cubes(); ++q) {
    const int gq = lat.generation(q);
    if (gq + r > D - 1) break;
    const auto rq = lat.leaves(q);
    const VectorXd v = K.middleCols(rq.begin, rq.size()) * fe.b_local(q);
    const double rho = gq >= 1 ? rho_e[ix(q)] : 0.0;
    for (CubeIndex R : lat.descendants_at(q, r)) {
      const VectorXd vr = seg(v, lat, R);
      const VectorXd wr = seg(wd, lat, R);
      const VectorXd adj = fd.adjoint_difference_local(R, vr);
      const double an = wnorm(adj, wr);
      c.adj_norm[ix(R)] = an;
      c.a[ix(q)] += an * an;
      const VectorXd dr = fd.difference_from_ratios(R, rho_x);
      c.main += rho * wdot(vr, dr, wr);
      c.t1 += rho * wdot(adj, dr, wr);
      if (sd) {
        for (const auto& piece : sd->defect(R, x)) {
          const VectorXd wp = seg(wd, lat, piece.cube);
          c.t2 += rho * wdot(seg(v, lat, piece.cube), piece.local, wp);
          c.defect_sq += std::pow(wnorm(piece.local, wp), 2);
        }
      }
      if (target_set)
        for (CubeIndex P : lat.children(R))
          if ((*target_set)[ix(P)]) c.bseq[ix(q)] += std::pow(wnorm(seg(v, lat, P), seg(wd, lat, P)), 2);
    }
  }
  return c;
}

/// max over Q, R in ch^r(Q) and strict ancestors H of Q of
/// | ||(Delta_R)^* T b_Q|| - ||(Delta_R)^* 1_H T b_H|| |.
double localization_gap(const OperatorRep& t, const AdaptedFrame& fe, const AdaptedFrame& fd, int r,
                        const std::vector<double>& adj_norm) {
  const Lattice& lat = t.lattice();
  const int D = lat.depth();
  const auto& wd = t.nu().weights();
  double gap = 0.0;
  for (CubeIndex h = 0; h < lat.num_cubes(); ++h) {
    const int gh = lat.generation(h);
    if (gh + 1 + r > D - 1) break;
    const auto rh = lat.leaves(h);
    const VectorXd v = t.kernel().middleCols(rh.begin, rh.size()) * fe.b_local(h);
    for (int gr = gh + 1 + r; gr <= D - 1; ++gr)
      for (CubeIndex R : lat.descendants_at(h, gr - gh)) {
        const double an = wnorm(fd.adjoint_difference_local(R, seg(v, lat, R)), seg(wd, lat, R));
        gap = std::max(gap, std::abs(an - adj_norm[ix(R)]));
      }
  }
  return gap;
}

/// Same operator with the couplings to null leaves removed; equal as a map L2(mu) -> L2(nu).
OperatorRep effective(const OperatorRep& t) {
  Eigen::MatrixXd k = t.kernel();
  const auto& wm = t.mu().weights();
  const auto& wn = t.nu().weights();
  for (Eigen::Index j = 0; j < k.cols(); ++j)
    if (wm[j] <= 0.0) k.col(j).setZero();
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    if (wn[i] <= 0.0) k.row(i).setZero();
  return {std::move(k), t.mu(), t.nu()};
}

double weighted_ratio_sum(const std::vector<double>& rho, const CubeSequence& a, const Lattice& lat) {
  double s = 0.0;
  for (CubeIndex q = lat.generation_begin(1); q < lat.num_cubes(); ++q) s += rho[ix(q)] * rho[ix(q)] * a[ix(q)];
  return s;
}

/// Steps shared by both chains: the splits, windows and pair bookkeeping.
void split_steps(StepLog& log, const Split& s, const Collapse& fwd, const Collapse& adj, double m_th, double n_th,
                 double t_b_delta) {
  const double sc = s.scale;
  log.identity("split", s.value, s.s1 + s.s2 + s.s3 + s.s4,
               sc + std::abs(s.s1) + std::abs(s.s2) + std::abs(s.s3) + std::abs(s.s4), "<Tf,g> = S1+S2+S3+S4");
  log.identity("windows", s.s1, s.s11 + s.s12 + s.s13 + s.s14,
               sc + std::abs(s.s11) + std::abs(s.s12) + std::abs(s.s13) + std::abs(s.s14), "S1 = S11+S12+S13+S14");
  log.identity("collapse-fwd", s.s11, fwd.main + fwd.top, sc + std::abs(fwd.main) + std::abs(fwd.top),
               "S11 = S111+S112");
  log.identity("collapse-adj", s.s12, adj.main + adj.top, sc + std::abs(adj.main) + std::abs(adj.top),
               "S12 = S121+S122");
  log.identity("support-13", s.s13, s.s13_pairs, sc + std::abs(s.s13), "S13 over pairs R in Q^(r)");
  log.identity("support-14", s.s14, s.s14_pairs, sc + std::abs(s.s14), "S14 over pairs Q in R^(r)");
  log.bound("pair-count-m", s.count_m, m_th, 1.0, "pairs per cube <= sum_s 2^{n(r+s)}");
  log.bound("pair-count-n", s.count_n, n_th, 1.0, "pairs per cube <= (r+1) 2^{nr}");
  log.bound("pair-testing", s.pair_ratio, t_b_delta, 1.0, "|<T Delta_Q f, Delta_R g>| <= t_b ||Delta_Q f|| ||Delta_R g||");
}

void finish(Trace& tr, StepLog& log, const Split& s, double norm) {
  tr.value = s.value;
  tr.operator_norm = norm;
  log.bound("total", std::abs(s.value), tr.final_constant, s.nf * s.ng, "|<Tf,g>| <= K ||f|| ||g||");
  log.bound("norm", norm, tr.final_constant, 1.0, "||T|| <= K");
}

}  // namespace

CubeSequence carleson_aq(const OperatorRep& t, const AdaptedFrame& frame1, const AdaptedFrame& frame2, int r) {
  const OperatorRep te = effective(t);
  const std::vector<double> zero(ix(t.lattice().num_cubes()), 0.0);
  const VectorXd x = VectorXd::Zero(t.lattice().num_leaves());
  return collapse(te, frame1, frame2, zero, x, zero, r, nullptr).a;
}

AqReport carleson_aq_global(const OperatorRep& t, const Martingale& b1, const Martingale& b2, int r,
                            const TraceOptions&) {
  const OperatorRep te = effective(t);
  const Lattice& lat = t.lattice();
  const std::vector<double> zero(ix(lat.num_cubes()), 0.0);
  const VectorXd x = VectorXd::Zero(lat.num_leaves());
  Collapse c = collapse(te, b1, b2, zero, x, zero, r, nullptr);
  AqReport rep;
  rep.a = std::move(c.a);
  rep.carleson = carleson_constant(rep.a, t.mu());
  rep.bound = k_dsq_single(b2.delta(), b2.c_inf()) * testing_a(te, b1, true);
  rep.localization_gap = localization_gap(te, b1, b2, r, c.adj_norm);
  rep.pass = rep.carleson <= rep.bound * (1.0 + 1e-9) + 1e-12;
  return rep;
}

Trace trace_global(const OperatorRep& t, const Martingale& b1, const Martingale& b2, int r, const StepFunction& f,
                   const StepFunction& g, const TraceOptions& opt) {
  require_same(t.lattice(), b1.lattice(), "trace_global");
  require_same(t.lattice(), b2.lattice(), "trace_global");
  const OperatorRep te = effective(t);
  const WlReport wl = check_wl_global(te, b1, b2, r, opt.wl_tol);
  if (opt.require_wl && !wl.pass) throw PreconditionError("trace_global: operator fails localization");
  const TestingReport tst = testing_global(te, b1, b2, r);
  const OperatorRep ta = te.adjoint();
  const Lattice& lat = t.lattice();

  Trace tr;
  StepLog log(tr, opt);
  const Split s = split(te, b1, b2, r, f, g);
  const Collapse fwd = collapse(te, b1, b2, s.rho_f, s.g, s.rho_g, r, nullptr);
  const Collapse adj = collapse(ta, b2, b1, s.rho_g, s.f, s.rho_f, r, nullptr);

  const double d1 = b1.delta(), c1 = b1.c_inf(), d2 = b2.delta(), c2 = b2.c_inf();
  const double ksq1 = k_sq_single(d1, c1), ksq2 = k_sq_single(d2, c2);
  const double kdsq1 = k_dsq_single(d1, c1), kdsq2 = k_dsq_single(d2, c2);
  const double m_th = pair_count_m(lat.n(), r), n_th = pair_count_n(lat.n(), r);
  const double nfg = s.nf * s.ng;

  split_steps(log, s, fwd, adj, m_th, n_th, tst.t_b_delta);
  log.identity("projection-fwd", fwd.main, fwd.t1, s.scale + std::abs(fwd.main), "Delta_R^2 = Delta_R");
  log.identity("projection-adj", adj.main, adj.t1, s.scale + std::abs(adj.main), "Delta_Q^2 = Delta_Q");
  log.identity("localization-fwd", localization_gap(te, b1, b2, r, fwd.adj_norm), 0.0,
               te.norm() * std::sqrt(t.mu().total()) * c1, "||(Delta_R)^* T(b 1_Q)|| = ||(Delta_R)^* 1_H T(b 1_H)||");
  log.identity("localization-adj", localization_gap(ta, b2, b1, r, adj.adj_norm), 0.0,
               te.norm() * std::sqrt(t.nu().total()) * c2, "||(Delta_Q)^* T*(b 1_R)|| = ||(Delta_Q)^* 1_H T*(b 1_H)||");

  log.bound("square-fn-1", s.sq_f, ksq1, s.nf * s.nf, "sum ||Delta_Q f||^2 + ||E f||^2 <= K_sq ||f||^2");
  log.bound("square-fn-2", s.sq_g, ksq2, s.ng * s.ng, "sum ||Delta_R g||^2 + ||E g||^2 <= K_sq ||g||^2");
  const StepFunction fm(lat, s.f), gm(lat, s.g);
  log.bound("dual-square-fn-1", b1.dual_square_fn_ratio(fm), kdsq1, 1.0, "sum ||(Delta_Q)^* f||^2 <= K_dsq ||f||^2");
  log.bound("dual-square-fn-2", b2.dual_square_fn_ratio(gm), kdsq2, 1.0, "sum ||(Delta_R)^* g||^2 <= K_dsq ||g||^2");

  const double lam_a = carleson_constant(fwd.a, t.mu());
  const double lam_a_adj = carleson_constant(adj.a, t.nu());
  log.bound("aq-carleson-fwd", lam_a, kdsq2 * tst.t_a_fwd, 1.0, "Lambda(a) <= K_dsq t_a");
  log.bound("aq-carleson-adj", lam_a_adj, kdsq1 * tst.t_a_adj, 1.0, "Lambda(a*) <= K_dsq t_a*");
  log.bound("aq-embedding-fwd", weighted_ratio_sum(s.rho_f, fwd.a, lat), 4.0 * lam_a / (d1 * d1), s.nf * s.nf,
            "sum rho_Q^2 a_Q <= 4 Lambda(a) ||f||^2 / delta^2");
  log.bound("aq-embedding-adj", weighted_ratio_sum(s.rho_g, adj.a, lat), 4.0 * lam_a_adj / (d2 * d2), s.ng * s.ng,
            "sum rho_R^2 a*_R <= 4 Lambda(a*) ||g||^2 / delta^2");

  struct Term {
    const char* name;
    double value;
    double constant;
    const char* formula;
  };
  const double c13 = tst.t_b_delta * std::sqrt(m_th * n_th) * std::sqrt(ksq1 * ksq2);
  const Term terms[] = {
      {"S2", s.s2, std::sqrt(tst.t_a_fwd) / d1 * k_bd(d2, c2), "sqrt(t_a) K_bd / delta"},
      {"S3", s.s3, std::sqrt(tst.t_a_adj) / d2 * k_bd(d1, c1), "sqrt(t_a*) K_bd / delta"},
      {"S4", s.s4, tst.t_b * c1 * c2 / (d1 * d2), "t_b C1 C2 / (delta1 delta2)"},
      {"S13", s.s13, c13, "t_b sqrt(M N) sqrt(K_sq1 K_sq2)"},
      {"S14", s.s14, c13, "t_b sqrt(M N) sqrt(K_sq1 K_sq2)"},
      {"S111", fwd.main, std::sqrt(4.0 * kdsq2 * tst.t_a_fwd * ksq2) / d1, "sqrt(4 K_dsq t_a K_sq) / delta"},
      {"S112", fwd.top, std::sqrt(tst.t_a_fwd) / d1 * k_bd(d2, c2), "sqrt(t_a) K_bd / delta"},
      {"S121", adj.main, std::sqrt(4.0 * kdsq1 * tst.t_a_adj * ksq1) / d2, "sqrt(4 K_dsq t_a* K_sq) / delta"},
      {"S122", adj.top, std::sqrt(tst.t_a_adj) / d2 * k_bd(d1, c1), "sqrt(t_a*) K_bd / delta"},
  };
  for (const auto& term : terms) {
    log.bound(term.name, std::abs(term.value), term.constant, nfg, term.formula);
    tr.final_constant += term.constant;
  }
  finish(tr, log, s, te.norm());
  return tr;
}

namespace {

/// sup_H T11(H)/m(H) and sup_H T12(H)/m(H): the a_Q inside H split by whether Q shares H's stopping parent.
std::pair<double, double> segment_sups(const CubeSequence& a, const Partition& part, const Measure& m) {
  const Lattice& lat = m.lattice();
  std::vector<double> same(a.size(), 0.0), other(a.size(), 0.0);
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q) {
    if (a[ix(q)] == 0.0) continue;
    for (CubeIndex h = q;; h = lat.parent(h)) {
      (part.p[ix(q)] == part.p[ix(h)] ? same : other)[ix(h)] += a[ix(q)];
      if (h == lat.root()) break;
    }
  }
  double s1 = 0.0, s2 = 0.0;
  for (CubeIndex h = 0; h < lat.num_cubes(); ++h) {
    const double mh = m.mass(h);
    if (mh > 0.0) {
      s1 = std::max(s1, same[ix(h)] / mh);
      s2 = std::max(s2, other[ix(h)] / mh);
    } else if (same[ix(h)] + other[ix(h)] > 0.0) {
      return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    }
  }
  return {s1, s2};
}

struct Side {
  const char* tag;
  double delta_e, c_e;                 // expectation side
  double delta_d, c_d;                 // difference side
  double k_sq_d, k_dsq_d;              // difference side square functions
  double t_a, t_c, kappa;
  double lambda_e;                     // change set of the expectation side, its own measure
  double lambda_d_on_e, lambda_d;      // difference-side change set on the source / target measure
  double nx, ny;                       // ||input on e side||, ||input on d side||
};

/// Steps for the defect split of one collapsed far window; returns the constant for its main term.
double defect_steps(StepLog& log, const Collapse& c, const Side& sd, const Partition& part_e, const Measure& me,
                    const std::vector<double>& rho_e, double scale) {
  const std::string tag = sd.tag;
  const Lattice& lat = me.lattice();
  log.identity("defect-split-" + tag, c.main, c.t1 + c.t2, scale + std::abs(c.t1) + std::abs(c.t2),
               "S_x11 = T1 + T2");
  const double base = sd.kappa * sd.k_dsq_d * sd.t_a;
  const auto [t11, t12] = segment_sups(c.a, part_e, me);
  log.bound("t11-" + tag, t11, base, 1.0, "T11(H)/mu(H) <= kappa K_dsq t_a");
  log.bound("t12-" + tag, t12, base * sd.lambda_e, 1.0, "T12(H)/mu(H) <= kappa K_dsq t_a Lambda");
  const double lam_a_bound = base * (1.0 + sd.lambda_e);
  const double lam_a = carleson_constant(c.a, me);
  log.bound("aq-carleson-" + tag, lam_a, lam_a_bound, 1.0, "Lambda(a) <= kappa K_dsq t_a (1 + Lambda)");
  log.bound("aq-embedding-" + tag, weighted_ratio_sum(rho_e, c.a, lat), 4.0 * lam_a / (sd.delta_e * sd.delta_e),
            sd.nx * sd.nx, "sum rho_Q^2 a_Q <= 4 Lambda(a) ||f||^2 / delta^2");
  const double c_t1 = std::sqrt(4.0 * lam_a_bound * sd.k_sq_d) / sd.delta_e;
  log.bound("T1-" + tag, std::abs(c.t1), c_t1, sd.nx * sd.ny, "sqrt(4 Lambda(a) K_sq) / delta");

  const double lam_b = carleson_constant(c.bseq, me);
  log.bound("bq-carleson-" + tag, lam_b, sd.t_c * sd.lambda_d_on_e, 1.0, "Lambda(b) <= t_c Lambda(S, mu)");
  const double kphi = k_defect(sd.delta_d, sd.c_d);
  log.bound("defect-sum-" + tag, c.defect_sq, kphi * kphi * 4.0 * sd.lambda_d, sd.ny * sd.ny,
            "sum ||phi_P||^2 <= K_phi^2 4 Lambda(S, nu) ||g||^2");
  const double c_t2 =
      std::sqrt(4.0 * sd.t_c * sd.lambda_d_on_e) / sd.delta_e * kphi * std::sqrt(4.0 * sd.lambda_d);
  log.bound("T2-" + tag, std::abs(c.t2), c_t2, sd.nx * sd.ny, "sqrt(4 t_c Lambda) K_phi sqrt(4 Lambda) / delta");
  log.bound("S" + std::string(tag == "fwd" ? "111" : "121"), std::abs(c.main), c_t1 + c_t2, sd.nx * sd.ny,
            "|T1| + |T2|");
  return c_t1 + c_t2;
}

}  // namespace

Trace trace_local(const OperatorRep& t, const SystemCalculus& sys1, const SystemCalculus& sys2, int r,
                  const StepFunction& f, const StepFunction& g, const TraceOptions& opt) {
  require_same(t.lattice(), sys1.lattice(), "trace_local");
  require_same(t.lattice(), sys2.lattice(), "trace_local");
  const OperatorRep te = effective(t);
  const OperatorRep ta = te.adjoint();
  const WlReport wl = check_wl_local(te, sys1, sys2, r, opt.wl_tol);
  const WlReport wl_adj = check_wl_local(ta, sys2, sys1, r, opt.wl_tol);
  if (opt.require_wl && !wl.pass) throw PreconditionError("trace_local: operator fails localization");
  const TestingReport tst = testing_local(te, sys1, sys2, r);
  const Lattice& lat = t.lattice();
  const Measure& mu = t.mu();
  const Measure& nu = t.nu();

  Trace tr;
  StepLog log(tr, opt);
  const double cut_fwd = testing_a(te, sys1, true), cut_adj = testing_a(ta, sys2, true);
  if (tst.t_a_fwd_uncut > 10.0 * cut_fwd) tr.flags.push_back("t_a forward: uncut exceeds cut by more than 10x");
  if (tst.t_a_adj_uncut > 10.0 * cut_adj) tr.flags.push_back("t_a adjoint: uncut exceeds cut by more than 10x");

  const Split s = split(te, sys1, sys2, r, f, g);
  const Collapse fwd = collapse(te, sys1, sys2, s.rho_f, s.g, s.rho_g, r, &sys2.in_change_set());
  const Collapse adj = collapse(ta, sys2, sys1, s.rho_g, s.f, s.rho_f, r, &sys1.in_change_set());

  const double d1 = sys1.system().delta(), c1 = sys1.system().c();
  const double d2 = sys2.system().delta(), c2 = sys2.system().c();
  const double lam1 = sparsity_check(sys1.in_change_set(), mu), lam2 = sparsity_check(sys2.in_change_set(), nu);
  const double lam1_nu = sparsity_check(sys1.in_change_set(), nu), lam2_mu = sparsity_check(sys2.in_change_set(), mu);
  const double ksq1 = k_sq_system(d1, c1, lam1), ksq2 = k_sq_system(d2, c2, lam2);
  const double kdsq1 = k_dsq_system(d1, c1, lam1), kdsq2 = k_dsq_system(d2, c2, lam2);
  const double m_th = pair_count_m(lat.n(), r), n_th = pair_count_n(lat.n(), r);
  const double nfg = s.nf * s.ng;

  split_steps(log, s, fwd, adj, m_th, n_th, tst.t_b_delta);
  log.bound("square-fn-1", s.sq_f, ksq1, s.nf * s.nf, "sum ||Delta_Q f||^2 + ||E f||^2 <= K_sq ||f||^2");
  log.bound("square-fn-2", s.sq_g, ksq2, s.ng * s.ng, "sum ||Delta_R g||^2 + ||E g||^2 <= K_sq ||g||^2");
  const StepFunction fm(lat, s.f), gm(lat, s.g);
  log.bound("dual-square-fn-1", sys1.dual_square_fn_ratio(fm), kdsq1, 1.0, "sum ||(Delta_Q)^* f||^2 <= K_dsq ||f||^2");
  log.bound("dual-square-fn-2", sys2.dual_square_fn_ratio(gm), kdsq2, 1.0, "sum ||(Delta_R)^* g||^2 <= K_dsq ||g||^2");

  const Side side_fwd{"fwd", d1, c1, d2, c2, ksq2, kdsq2, tst.t_a_fwd, tst.t_c_fwd, wl.csc_kappa,
                      lam1, lam2_mu, lam2, s.nf, s.ng};
  const Side side_adj{"adj", d2, c2, d1, c1, ksq1, kdsq1, tst.t_a_adj, tst.t_c_adj, wl_adj.csc_kappa,
                      lam2, lam1_nu, lam1, s.ng, s.nf};
  const double c111 = defect_steps(log, fwd, side_fwd, partition(sys1.system()), mu, s.rho_f, s.scale);
  const double c121 = defect_steps(log, adj, side_adj, partition(sys2.system()), nu, s.rho_g, s.scale);

  const double c13 = tst.t_b_delta * std::sqrt(m_th * n_th) * std::sqrt(ksq1 * ksq2);
  const double c2_ = std::sqrt(tst.t_a_fwd) / d1 * k_bd(d2, c2);
  const double c3_ = std::sqrt(tst.t_a_adj) / d2 * k_bd(d1, c1);
  log.bound("S2", std::abs(s.s2), c2_, nfg, "sqrt(t_a) K_bd / delta");
  log.bound("S3", std::abs(s.s3), c3_, nfg, "sqrt(t_a*) K_bd / delta");
  const double c4 = std::sqrt(tst.t_a_fwd) * c2 / (d1 * d2);
  log.bound("S4", std::abs(s.s4), c4, nfg, "sqrt(t_a) C2 / (delta1 delta2)");
  log.bound("S13", std::abs(s.s13), c13, nfg, "t_b sqrt(M N) sqrt(K_sq1 K_sq2)");
  log.bound("S14", std::abs(s.s14), c13, nfg, "t_b sqrt(M N) sqrt(K_sq1 K_sq2)");
  log.bound("S112", std::abs(fwd.top), c2_, nfg, "sqrt(t_a) K_bd / delta");
  log.bound("S122", std::abs(adj.top), c3_, nfg, "sqrt(t_a*) K_bd / delta");
  tr.final_constant = c2_ + c3_ + c4 + 2.0 * c13 + c111 + c121 + c2_ + c3_;
  finish(tr, log, s, te.norm());
  return tr;
}

namespace {

/// Average over J of a vector given on the leaves of K (J inside K).
double avg_in(const VectorXd& on_k, CubeIndex k, CubeIndex j, const Measure& m) {
  const Lattice& lat = m.lattice();
  const double mj = m.mass(j);
  if (mj <= 0.0) return 0.0;
  const auto rj = lat.leaves(j);
  const auto off = rj.begin - lat.leaves(k).begin;
  return on_k.segment(off, rj.size()).dot(seg(m.weights(), lat, j)) / mj;
}

double safe_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

}  // namespace

Trace trace_appendix(const SystemCalculus& sys, const StepFunction& f, const TraceOptions& opt) {
  const Measure& m = sys.measure();
  const Lattice& lat = m.lattice();
  require_same(lat, f.lattice, "trace_appendix");
  const auto& w = m.weights();
  const VectorXd fv = masked(f, m);
  const double nf = wnorm(fv, w);
  if (nf <= 0.0) throw ZeroNormError("trace_appendix: zero-norm input");
  const double nf2 = nf * nf;
  const double delta = sys.system().delta(), c = sys.system().c();
  const auto& in_s = sys.in_change_set();
  const Partition part = partition(in_s, lat);
  const double lam = sparsity_check(in_s, m);
  const StepFunction fm(lat, fv);
  const auto abs_avg = averages(StepFunction(lat, fv.cwiseAbs()), m);

  Trace tr;
  StepLog log(tr, opt);

  double dual = 0.0;
  for (CubeIndex k = 0; k < lat.generation_begin(lat.depth()); ++k)
    dual += std::pow(wnorm(sys.adjoint_difference_local(k, seg(fv, lat, k)), seg(w, lat, k)), 2);

  // A_K = <b_K f>_K, B_K = <b_K>_K; primes use the parent's test function on the child.
  std::vector<double> A(ix(lat.num_cubes()));
  for (CubeIndex k = 0; k < lat.num_cubes(); ++k)
    A[ix(k)] = avg_in(sys.b_local(k).cwiseProduct(seg(fv, lat, k)), k, k, m);
  double rewritten = 0.0, s3 = 0.0, s3_avg = 0.0, s4 = 0.0, s4_beta = 0.0, s51 = 0.0, s52 = 0.0;
  const CubeSequence beta = sys.beta_sequence();
  for (CubeIndex q = 1; q < lat.num_cubes(); ++q) {
    const CubeIndex p1 = lat.parent(q);
    const double mq = m.mass(q);
    const double aq = A[ix(q)], bq = sys.b_mean(q);
    const double ap = avg_in(sys.b_local(p1).cwiseProduct(seg(fv, lat, p1)), p1, q, m);
    const double ra = safe_div(aq, bq) - safe_div(A[ix(p1)], sys.b_mean(p1));
    rewritten += ra * ra * mq;
    if (in_s[ix(q)]) {
      s3 += (aq * aq + ap * ap) * mq;
      s3_avg += abs_avg[ix(q)] * abs_avg[ix(q)] * mq;
    } else {
      const double db = bq - sys.b_mean(p1);
      s4 += aq * aq * db * db * mq;
      s4_beta += aq * aq * beta[ix(q)];
    }
    const double d5 = A[ix(p1)] - ap;
    (part.in_db(p1) ? s52 : s51) += d5 * d5 * mq;
  }
  log.identity("dual-rewrite", dual, rewritten, dual + rewritten, "sum ||(Delta_Q)^* f||^2 as averages");
  const double d2 = delta * delta;
  log.bound("dual-split", rewritten, 1.0, 4.0 / d2 * s3 + 2.0 / (d2 * d2) * s4 + 2.0 / d2 * (s51 + s52),
            "(4/delta^2) S3 + (2/delta^4) S4 + (2/delta^2) S5");
  log.bound("S3-averages", s3, 2.0 * c * c, s3_avg, "S3 <= 2 C^2 sum_S <|f|>^2 mu");
  log.bound("S3", s3, 8.0 * lam * c * c, nf2, "S3 <= 8 Lambda C^2 ||f||^2");
  log.identity("S4-beta", s4, s4_beta, s4 + s4_beta, "S4 = sum |A_Q|^2 beta_Q");
  const double lam_beta = carleson_constant(beta, m);
  log.bound("beta-carleson", lam_beta, lambda_beta_bound(c, lam), 1.0, "Lambda(beta) <= C^2 (5 + Lambda)");
  log.bound("S4", s4, 4.0 * c * c * lambda_beta_bound(c, lam), nf2, "S4 <= 4 C^2 Lambda(beta) ||f||^2");

  const StepFunction bglob = global_b(sys.system(), part);
  const double nbf = wnorm(bglob.values.cwiseProduct(fv), w);
  log.bound("S5-1-usf", s51, 1.0, nbf * nbf, "S5' <= ||b f||^2");
  log.bound("S5-1", s51, c * c, nf2, "S5' <= C^2 ||f||^2");

  // h_P keeps b_P f off the maximal stops inside P and replaces it by its average on them.
  double h_gap = 0.0, h_sq = 0.0, s52_h = 0.0, h_scale = 0.0;
  for (CubeIndex p = 1; p < lat.num_cubes(); ++p) {
    if (!in_s[ix(p)]) continue;
    const auto rp = lat.leaves(p);
    const VectorXd bf = sys.b_local(p).cwiseProduct(seg(fv, lat, p));
    VectorXd h = bf;
    for (CubeIndex s = p + 1; s < lat.num_cubes(); ++s) {
      if (!in_s[ix(s)] || !lat.contains(p, s) || lat.parent(s) == kNoCube) continue;
      if (part.p[ix(lat.parent(s))] != p) continue;  // not maximal
      const auto rs = lat.leaves(s);
      h.segment(rs.begin - rp.begin, rs.size()).setConstant(avg_in(bf, p, s, m));
    }
    h_sq += std::pow(wnorm(h, seg(w, lat, p)), 2);
    for (CubeIndex q = p + 1; q < lat.num_cubes(); ++q) {
      const CubeIndex q1 = lat.parent(q);
      if (!lat.contains(p, q) || part.p[ix(q1)] != p) continue;
      for (CubeIndex j : {q, q1}) {
        const double x = avg_in(bf, p, j, m), y = avg_in(h, p, j, m);
        h_gap = std::max(h_gap, std::abs(x - y));
        h_scale = std::max(h_scale, std::abs(x));
      }
      const double d = avg_in(h, p, q1, m) - avg_in(h, p, q, m);
      s52_h += d * d * m.mass(q);
    }
  }
  log.identity("h-identity", h_gap, 0.0, c * abs_avg[0] + h_scale, "<b_P f>_J = <h_P>_J for J = Q, Q^(1)");
  log.identity("S5-2-h", s52, s52_h, s52 + s52_h, "S5'' in terms of h_P");
  log.bound("S5-2-usf", s52, 1.0, h_sq, "S5'' <= sum_P ||h_P||^2");
  log.bound("h-norms", h_sq, c * c * (1.0 + 4.0 * lam), nf2, "sum_P ||h_P||^2 <= C^2 (1 + 4 Lambda) ||f||^2");
  log.bound("S5-2", s52, c * c * (1.0 + 4.0 * lam), nf2, "S5'' <= C^2 (1 + 4 Lambda) ||f||^2");

  tr.final_constant = k_dsq_system(delta, c, lam);
  tr.value = dual;
  log.bound("dual-total", dual, tr.final_constant, nf2, "sum ||(Delta_Q)^* f||^2 <= K_dsq ||f||^2");
  return tr;
}

}  // namespace dyadic
