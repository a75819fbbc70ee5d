#include <gtest/gtest.h>

#include "dyadic/instance.hpp"
#include "oracles.hpp"

using namespace dyadic;

namespace {

Eigen::VectorXd lexv(const StepFunction& f) {
  const auto v = f.lex_values();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::VectorXd lexw(const Measure& m) {
  const auto v = m.lex_weights();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

TEST(Accretive, Examples) {
  const Lattice lat(1, 1);
  const Measure u = Measure::uniform(lat);
  const auto r1 = check_accretive(StepFunction::constant(lat, 1.0), u);
  EXPECT_TRUE(r1.ok);
  EXPECT_DOUBLE_EQ(r1.delta, 1.0);
  EXPECT_DOUBLE_EQ(r1.c_inf, 1.0);
  const auto r2 = check_accretive(StepFunction::from_lex(lat, {1, -1}), u);
  EXPECT_FALSE(r2.ok);
  ASSERT_FALSE(r2.offending.empty());
  EXPECT_EQ(r2.offending.front(), lat.root());
  const auto r3 = check_accretive(StepFunction::from_lex(lat, {2, 1}), u);
  EXPECT_DOUBLE_EQ(r3.delta, 1.0);
  EXPECT_DOUBLE_EQ(r3.c_inf, 2.0);
  EXPECT_THROW(Martingale(StepFunction::from_lex(lat, {1, -1}), u), NotAccretiveError);
}

TEST(Martingale, DepthOneExamples) {
  const Lattice lat(1, 1);
  const Measure u = Measure::uniform(lat);
  const Martingale mb(StepFunction::from_lex(lat, {2, 1}), u);
  const auto e = mb.expectation(lat.root(), StepFunction::from_lex(lat, {1, 3})).lex_values();
  EXPECT_NEAR(e[0], 8.0 / 3.0, 1e-15);
  EXPECT_NEAR(e[1], 4.0 / 3.0, 1e-15);

  const Martingale std1(StepFunction::constant(lat, 1.0), u);
  const auto d = std1.difference(lat.root(), StepFunction::from_lex(lat, {1, 3})).lex_values();
  EXPECT_NEAR(d[0], -1.0, 1e-15);
  EXPECT_NEAR(d[1], 1.0, 1e-15);

  // f = b reproduces itself and has no differences.
  const auto eb = mb.expectation(lat.root(), mb.b()).lex_values();
  EXPECT_NEAR(eb[0], 2.0, 1e-15);
  EXPECT_NEAR(eb[1], 1.0, 1e-15);
  EXPECT_NEAR(mb.difference(lat.root(), mb.b()).values.norm(), 0.0, 1e-15);
  EXPECT_EQ(mb.expectation(lat.root(), StepFunction(lat)).values.norm(), 0.0);
}

TEST(Martingale, ReconstructsDepthTwo) {
  const Lattice lat(1, 2);
  const Measure u = Measure::uniform(lat);
  const Martingale m(StepFunction::constant(lat, 1.0), u);
  const StepFunction f = StepFunction::from_lex(lat, {1, 0, 0, 1});
  const Decomposition dec = m.decompose(f);
  EXPECT_NEAR(dec.top.sum(), 2.0, 1e-15);  // E f = 1/2 on each of 4 leaves
  EXPECT_NEAR((dec.reconstruct(lat).values - f.values).norm(), 0.0, 1e-14);
  // Parseval for standard differences.
  EXPECT_NEAR(m.square_fn_ratio(f), 1.0, 1e-12);
}

TEST(Martingale, SelfIsSinglePiece) {
  Rng rng(2);
  const Lattice lat(1, 4);
  const Measure m = random_measure(lat, MeasureLaw::IidPositive, rng);
  const Martingale mb(random_accretive(m, 0.5, 2.0, rng), m);
  const Decomposition dec = mb.decompose(mb.b());
  EXPECT_NEAR((dec.top - mb.b().values).norm(), 0.0, 1e-12);
  for (const auto& p : dec.pieces) EXPECT_NEAR(p.local.norm(), 0.0, 1e-12);
}

// Differences and their adjoints against dense lexicographic matrices.
TEST(Martingale, MatchesDenseOracle) {
  Rng rng(3);
  for (auto [n, D] : {std::pair{1, 3}, std::pair{2, 2}}) {
    const Lattice lat(n, D);
    const Measure m = random_measure(lat, MeasureLaw::IidPositive, rng);
    const Martingale mb(random_accretive(m, 0.5, 2.0, rng), m);
    const Eigen::VectorXd b = lexv(mb.b()), w = lexw(m);
    const StepFunction f = random_function(lat, rng);
    const Eigen::VectorXd fv = lexv(f);
    for (CubeIndex q = 0; q < lat.generation_begin(D); ++q) {
      const auto dq = oracle::difference(n, D, b, w, lat.cube(q));
      EXPECT_LT((lexv(mb.difference(q, f)) - dq * fv).norm(), 1e-12);
      EXPECT_LT((lexv(mb.adjoint_difference(q, f)) - oracle::weighted_adjoint(dq, w) * fv).norm(), 1e-11);
      // Range basis: weighted-orthonormal and fixed by Delta_Q.
      const Eigen::MatrixXd basis = mb.difference_range_basis(q);
      const auto ws = seg(m.weights(), lat, q);
      const Eigen::MatrixXd gram = basis.transpose() * ws.asDiagonal() * basis;
      EXPECT_LT((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).norm(), 1e-10);
      for (Eigen::Index c = 0; c < basis.cols(); ++c) {
        Eigen::VectorXd full = Eigen::VectorXd::Zero(lat.num_leaves());
        seg(full, lat, q) = basis.col(c);
        const Eigen::VectorXd back = mb.difference_local(q, full);
        EXPECT_LT((back - basis.col(c)).norm(), 1e-9);
      }
    }
  }
}

TEST(Martingale, ReconstructionRandom) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Lattice lat(1 + trial % 2, trial % 2 ? 3 : 5);
    const Measure m = random_measure(lat, MeasureLaw::AtomHeavy, rng);
    const Martingale mb(random_accretive(m, 0.3, 3.0, rng), m);
    const StepFunction f = random_function(lat, rng);
    const double err = (mb.decompose(f).reconstruct(lat).values - f.values).norm();
    EXPECT_LE(err, 1e-10 * f.values.norm());
  }
}

TEST(Martingale, TruncatedSums) {
  Rng rng(6);
  const Lattice lat(1, 5);
  const Measure m = random_measure(lat, MeasureLaw::IidPositive, rng);
  const Martingale mb(random_accretive(m, 0.5, 2.0, rng), m);
  const StepFunction f = random_function(lat, rng);
  const auto t = mb.truncated_sum_norms(f);
  ASSERT_EQ(t.size(), 6u);
  EXPECT_LE(t[0], (1.0 + mb.c_inf() / mb.delta()) * norm(f, m) + 1e-12);
  EXPECT_EQ(t[5], 0.0);
  EXPECT_NEAR(mb.truncated_sum_norms(mb.b())[0], 0.0, 1e-12);
}

// Exact sup over f of the square-function quadratic forms on small trees stays under the derived constants.
TEST(Martingale, SquareFunctionConstants) {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const int D = 1 + trial % 3;
    const Lattice lat(1, D);
    const Measure m = random_measure(lat, trial % 2 ? MeasureLaw::AtomHeavy : MeasureLaw::IidPositive, rng);
    const Martingale mb(random_accretive(m, 0.4, 2.0, rng), m);
    const Eigen::VectorXd b = lexv(mb.b()), w = lexw(m);
    const auto N = lat.num_leaves();
    Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(N, N), dsq = sq;
    const Eigen::MatrixXd e = oracle::expectation(1, D, b, w, lat.cube(lat.root()));
    sq += e.transpose() * w.asDiagonal() * e;
    for (CubeIndex q = 0; q < lat.generation_begin(D); ++q) {
      const Eigen::MatrixXd d = oracle::difference(1, D, b, w, lat.cube(q));
      const Eigen::MatrixXd da = oracle::weighted_adjoint(d, w);
      sq += d.transpose() * w.asDiagonal() * d;
      dsq += da.transpose() * w.asDiagonal() * da;
    }
    EXPECT_LE(weighted_quadratic_sup(sq, w), k_sq_single(mb.delta(), mb.c_inf()));
    EXPECT_LE(weighted_quadratic_sup(dsq, w), k_dsq_single(mb.delta(), mb.c_inf()));
    // The ratio functions never beat the exact sup.
    const StepFunction f = random_function(lat, rng);
    EXPECT_LE(mb.square_fn_ratio(f), weighted_quadratic_sup(sq, w) * (1 + 1e-10));
    EXPECT_LE(mb.dual_square_fn_ratio(f), weighted_quadratic_sup(dsq, w) * (1 + 1e-10));
  }
}
