#include <gtest/gtest.h>

#include "dyadic/instance.hpp"
#include "oracles.hpp"

using namespace dyadic;

namespace {

Eigen::VectorXd lexw(const Measure& m) {
  const auto v = m.lex_weights();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Kernel rewritten in lex order on both sides.
Eigen::MatrixXd lex_kernel(const OperatorRep& t) {
  const Lattice& lat = t.lattice();
  const auto N = lat.num_leaves();
  Eigen::MatrixXd k(N, N);
  for (std::int32_t i = 0; i < N; ++i)
    for (std::int32_t j = 0; j < N; ++j) k(i, j) = t.kernel()(lat.slot_of_lex(i), lat.slot_of_lex(j));
  return k;
}

std::map<CubeIndex, double> random_lambda(const Lattice& lat, Rng& rng) {
  std::map<CubeIndex, double> l;
  for (CubeIndex q = 0; q < lat.generation_begin(lat.depth()); ++q) l[q] = rng.uniform(-1.0, 1.0);
  return l;
}

}  // namespace

TEST(Operators, IdentityAndZeroApply) {
  Rng rng(3);
  const Lattice lat(2, 2);
  const Measure m = random_measure(lat, MeasureLaw::IidPositive, rng);
  const StepFunction f = random_function(lat, rng);
  EXPECT_EQ((OperatorRep::identity(m, m).apply(f).values - f.values).norm(), 0.0);
  EXPECT_EQ(OperatorRep::zero(m, m).apply(f).values.norm(), 0.0);
  EXPECT_NEAR(OperatorRep::identity(m, m).norm(), 1.0, 1e-12);
  EXPECT_EQ(OperatorRep::zero(m, m).norm(), 0.0);
}

TEST(Operators, TwoLeafNorm) {
  const Lattice lat(1, 1);
  const Measure mu = Measure::from_lex(lat, {1.0, 1.0});
  const Measure nu = Measure::from_lex(lat, {4.0, 1.0});
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2, 2);
  k(lat.slot_of_lex(0), lat.slot_of_lex(1)) = 1.0;
  const OperatorRep t(k, mu, nu);
  EXPECT_NEAR(t.norm(), 2.0, 1e-12);
  EXPECT_NEAR(t.adjoint().norm(), 2.0, 1e-12);
}

TEST(Operators, AdjointPairing) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Lattice lat(1 + trial % 2, 3);
    const Measure mu = random_measure(lat, MeasureLaw::IidPositive, rng);
    const Measure nu = random_measure(lat, MeasureLaw::AtomHeavy, rng);
    const OperatorRep t = make_dense_random(mu, nu, rng);
    const StepFunction f = random_function(lat, rng), g = random_function(lat, rng);
    const double lhs = inner(t.apply(f), g, nu);
    const double rhs = inner(f, t.adjoint().apply(g), mu);
    EXPECT_NEAR(lhs, rhs, 1e-11 * (1 + std::abs(lhs)));
    EXPECT_NEAR(t.bilinear(f, g), lhs, 1e-11 * (1 + std::abs(lhs)));
  }
}

TEST(Operators, NormAgreesWithPowerIteration) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Lattice lat(1, 2 + trial % 3);
    const Measure mu = random_measure(lat, MeasureLaw::IidPositive, rng);
    const Measure nu = random_measure(lat, MeasureLaw::AtomHeavy, rng);
    const OperatorRep t = make_dense_random(mu, nu, rng);
    const double ref = oracle::power_norm(lex_kernel(t), lexw(mu), lexw(nu));
    EXPECT_NEAR(t.norm(), ref, 1e-8 * ref);
    EXPECT_NEAR(t.norm(), t.adjoint().norm(), 1e-10 * ref);
    // The norm dominates every ratio.
    const StepFunction f = random_function(lat, rng);
    EXPECT_LE(norm(t.apply(f), nu), t.norm() * norm(f, mu) * (1 + 1e-12));
  }
}

TEST(Operators, LocalizationExamples) {
  Rng rng(9);
  const Lattice lat(1, 4);
  const Measure m = random_measure(lat, MeasureLaw::IidPositive, rng);
  const Martingale one(StepFunction::constant(lat, 1.0), m);
  EXPECT_TRUE(check_wl_global(OperatorRep::identity(m, m), one, one, 0).pass);
  EXPECT_TRUE(check_wl_global(make_haar_multiplier(m, random_lambda(lat, rng)), one, one, 0).pass);
  const WlReport far = check_wl_global(make_far_entry(m, m), one, one, 0);
  EXPECT_FALSE(far.pass);
  EXPECT_GT(far.max_violation, 1e-6);
}

TEST(Operators, MultiplierBounds) {
  Rng rng(11);
  const Lattice lat(1, 5);
  const Measure m = random_measure(lat, MeasureLaw::AtomHeavy, rng);
  std::map<CubeIndex, double> ones;
  for (CubeIndex q = 0; q < lat.generation_begin(lat.depth()); ++q) ones[q] = 1.0;
  EXPECT_LE(make_haar_multiplier(m, ones).norm(), 1.0 + 1e-12);
  const auto lam = random_lambda(lat, rng);
  EXPECT_LE(make_haar_multiplier(m, lam).norm(), 1.0 + 1e-12);
  // A multiplier acts as lambda_Q on each Haar difference.
  const Martingale one(StepFunction::constant(lat, 1.0), m);
  const StepFunction f = random_function(lat, rng);
  const CubeIndex q = lat.index(CubeId{2, {3}});
  const StepFunction h = one.difference(q, f);
  EXPECT_LT((make_haar_multiplier(m, lam).apply(h).values - lam.at(q) * h.values).norm(), 1e-12 * h.values.norm());
}

TEST(Operators, TestingConstantsForIdentity) {
  Rng rng(13);
  const Lattice lat(1, 4);
  const Measure m = random_measure(lat, MeasureLaw::IidPositive, rng);
  const auto sys = AccretiveSystem::constant(StepFunction::constant(lat, 1.0), 1.0, 1.0);
  const SystemCalculus sc(sys, m);
  const TestingReport rep = testing_local(OperatorRep::identity(m, m), sc, sc, 1);
  const WlReport wl = check_wl_local(OperatorRep::identity(m, m), sc, sc, 1);
  EXPECT_TRUE(wl.pass);
  EXPECT_NEAR(wl.csc_kappa, 1.0, 1e-12);
  EXPECT_NEAR(rep.t_a_fwd, 1.0, 1e-12);
  EXPECT_NEAR(rep.t_a_adj, 1.0, 1e-12);
  EXPECT_LE(rep.t_b, 1.0 + 1e-12);
  EXPECT_LE(rep.t_b_delta, 1.0 + 1e-12);
  EXPECT_EQ(rep.t_c_fwd, 0.0);
  EXPECT_EQ(rep.t_c_adj, 0.0);
}

TEST(Operators, GeneratedFamiliesLocalize) {
  for (auto fam : {OperatorFamily::Multiplier, OperatorFamily::ShiftCandidate, OperatorFamily::Diagonal}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      InstanceParams p;
      p.depth = 4;
      p.seed = seed;
      p.radius = fam == OperatorFamily::ShiftCandidate ? 1 : 0;
      p.measure = MeasureLaw::IidPositive;
      p.system = SystemMode::Stopping;
      p.op = fam;
      const Instance inst = make_instance(p);
      const SystemCalculus s1(inst.b1, inst.mu), s2(inst.b2, inst.nu);
      const WlReport wl = check_wl_local(inst.op, s1, s2, p.radius);
      EXPECT_TRUE(wl.pass) << to_string(fam) << " seed " << seed << " violation " << wl.max_violation;
      EXPECT_TRUE(check_wl_local(inst.op.adjoint(), s2, s1, p.radius).pass);
    }
  }
}

TEST(Operators, TooManyLeavesRejected) {
  const Lattice lat(1, 13);
  const Measure m = Measure::uniform(lat);
  EXPECT_THROW(OperatorRep::identity(m, m), Error);
}
