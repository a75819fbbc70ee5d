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

std::size_t ix(CubeIndex q) { return static_cast<std::size_t>(q); }

/// Dense difference for a system: children use their own b_c, the parent its b_Q.
Eigen::MatrixXd system_difference(const SystemCalculus& s, CubeIndex q) {
  const Lattice& lat = s.lattice();
  const auto w = lexw(s.measure());
  Eigen::MatrixXd d = -oracle::expectation(lat.n(), lat.depth(), lexv(s.system().b(q)), w, lat.cube(q));
  for (CubeIndex c : lat.children(q)) d += oracle::expectation(lat.n(), lat.depth(), lexv(s.system().b(c)), w, lat.cube(c));
  return d;
}

struct Fixture {
  Lattice lat{1, 4};
  Rng rng{21};
  Measure m = random_measure(lat, MeasureLaw::IidPositive, rng);
  StepFunction b = random_accretive(m, 0.5, 2.0, rng);
};

}  // namespace

TEST(System, ConstantHasEmptyChangeSet) {
  Fixture fx;
  const auto sys = AccretiveSystem::constant(fx.b, 0.5, 2.0);
  const SystemReport rep = verify_system(sys, fx.m);
  EXPECT_TRUE(rep.ok);
  EXPECT_TRUE(rep.change_set.empty());
  EXPECT_EQ(rep.sparsity, 0.0);
  const Partition part = partition(sys);
  for (CubeIndex q = 0; q < fx.lat.num_cubes(); ++q) EXPECT_FALSE(part.in_db(q));
  EXPECT_LT((global_b(sys, part).values - fx.b.values).norm(), 1e-15);
}

TEST(System, OneAlteredCube) {
  Fixture fx;
  const CubeIndex p0 = fx.lat.index(CubeId{2, {1}});
  std::map<CubeIndex, Eigen::VectorXd> e{{fx.lat.root(), fx.b.values}, {p0, -seg(fx.b.values, fx.lat, p0)}};
  const auto sys = AccretiveSystem::table(fx.lat, 0.5, 2.0, e);
  const SystemReport rep = verify_system(sys, fx.m);
  EXPECT_TRUE(rep.ok);
  EXPECT_EQ(rep.change_set, std::vector<CubeIndex>{p0});
  const Partition part = partition(sys);
  for (CubeIndex q = 0; q < fx.lat.num_cubes(); ++q) EXPECT_EQ(part.in_db(q), fx.lat.contains(p0, q));
  // Every leaf sits in the root, a C_b cube, so the global b is b_root there.
  const StepFunction gb = global_b(sys, part);
  for (CubeIndex q = 0; q < fx.lat.num_cubes(); ++q) {
    if (part.in_db(q)) continue;
    EXPECT_LT((seg(gb.values, fx.lat, q) - sys.b_local(q)).norm(), 1e-15);
  }
  EXPECT_EQ(gb.values, fx.b.values);

  const SystemCalculus sc(sys, fx.m);
  const StepFunction f = random_function(fx.lat, fx.rng);
  const CubeIndex parent = fx.lat.parent(p0);
  const auto phi = sc.defect(parent, f.values);
  ASSERT_EQ(phi.size(), 1u);
  EXPECT_EQ(phi[0].cube, p0);
  EXPECT_TRUE(sc.defect(fx.lat.root(), f.values).empty());
}

TEST(System, PartitionExtremes) {
  const Lattice lat(1, 3);
  std::vector<bool> none(ix(lat.num_cubes()), false), root_only = none;
  root_only[0] = true;
  const Partition a = partition(none, lat);
  const Partition b = partition(root_only, lat);
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q) {
    EXPECT_FALSE(a.in_db(q));
    EXPECT_EQ(b.p[ix(q)], lat.root());
  }
}

TEST(System, ConstantReducesToMartingale) {
  Fixture fx;
  const Martingale mb(fx.b, fx.m);
  const SystemCalculus sc(AccretiveSystem::constant(fx.b, 0.5, 2.0), fx.m);
  const StepFunction f = random_function(fx.lat, fx.rng);
  for (CubeIndex q = 0; q < fx.lat.generation_begin(fx.lat.depth()); ++q) {
    EXPECT_LT((mb.difference(q, f).values - sc.difference(q, f).values).norm(), 1e-13);
    EXPECT_LT((mb.adjoint_difference(q, f).values - sc.adjoint_difference(q, f).values).norm(), 1e-12);
  }
  const auto d1 = mb.decompose(f), d2 = sc.decompose(f);
  EXPECT_LT((d1.top - d2.top).norm(), 1e-13);
  // Constant input gives vanishing dual differences.
  for (CubeIndex q = 0; q < fx.lat.generation_begin(fx.lat.depth()); ++q)
    EXPECT_LT(sc.adjoint_difference(q, StepFunction::constant(fx.lat, 3.0)).values.norm(), 1e-12);
}

TEST(System, StoppingWithOneFunctionHasNoStops) {
  const Lattice lat(1, 5);
  const Measure m = Measure::uniform(lat);
  const StoppingResult r = stopping_construction(StepFunction::constant(lat, 1.0), m, 0.5, 2.0);
  EXPECT_EQ(r.stops.size(), 1u);
  EXPECT_TRUE(verify_system(r.system, m).change_set.empty());
  EXPECT_NEAR(stopping_tau(0.5, 2.0, 0.25), 6.0 / 7.0, 1e-15);
  const SystemCalculus sc(r.system, m);
  for (double v : sc.beta_sequence()) EXPECT_EQ(v, 0.0);
}

TEST(System, StoppingOutputsVerify) {
  Rng rng(31);
  for (int seed = 0; seed < 20; ++seed) {
    const Lattice lat(1 + seed % 2, seed % 2 ? 4 : 7);
    const Measure m = random_measure(lat, MeasureLaw::IidPositive, rng);
    const auto sys = random_system(m, SystemMode::Stopping, 0.5, 2.0, rng);
    const SystemReport rep = verify_system(sys, m);
    EXPECT_TRUE(rep.ok);
    EXPECT_TRUE(rep.provenance_consistent);
    EXPECT_NEAR(sys.delta(), 0.25, 0.0);
  }
}

// Definitions checked against dense matrices on random sparse systems.
TEST(System, DifferencesDefectsAndDualFormula) {
  Rng rng(41);
  for (int trial = 0; trial < 12; ++trial) {
    const Lattice lat(1 + trial % 2, trial % 2 ? 3 : 4);
    const Measure m = random_measure(lat, MeasureLaw::IidPositive, rng);
    const SystemCalculus sc(random_system(m, trial % 3 ? SystemMode::Stopping : SystemMode::Table, 0.5, 2.0, rng), m);
    const StepFunction f = random_function(lat, rng);
    const auto w = lexw(m);
    const double nf = norm(f, m);
    for (CubeIndex q = 0; q < lat.generation_begin(lat.depth()); ++q) {
      const Eigen::MatrixXd d = system_difference(sc, q);
      EXPECT_LT((lexv(sc.difference(q, f)) - d * lexv(f)).norm(), 1e-11 * std::max(1.0, nf));
      EXPECT_LT((lexv(sc.adjoint_difference(q, f)) - oracle::weighted_adjoint(d, w) * lexv(f)).norm(),
                1e-10 * std::max(1.0, nf));
      // Delta - Delta^2 is the sum of the defect pieces, each inside its stopping child.
      const StepFunction df = sc.difference(q, f);
      Eigen::VectorXd gap = df.values - sc.difference(q, df).values;
      for (const auto& p : sc.defect(q, f.values)) {
        EXPECT_TRUE(sc.in_change_set()[ix(p.cube)]);
        EXPECT_EQ(lat.parent(p.cube), q);
        seg(gap, lat, p.cube) -= p.local;
      }
      EXPECT_LT(gap.norm(), 1e-10 * std::max(1.0, nf));
    }
    EXPECT_LE((sc.decompose(f).reconstruct(lat).values - f.values).norm(), 1e-10 * f.values.norm());
  }
}

TEST(System, SquareFunctionConstants) {
  Rng rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    const int D = 2 + trial % 2;
    const Lattice lat(1, D);
    const Measure m = random_measure(lat, MeasureLaw::IidPositive, rng);
    const SystemCalculus sc(random_system(m, trial % 2 ? SystemMode::Stopping : SystemMode::Table, 0.5, 2.0, rng), m);
    const auto w = lexw(m);
    const auto N = lat.num_leaves();
    Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(N, N), dsq = sq;
    const Eigen::MatrixXd e = oracle::expectation(1, D, lexv(sc.system().b(lat.root())), w, lat.cube(lat.root()));
    sq += e.transpose() * w.asDiagonal() * e;
    for (CubeIndex q = 0; q < lat.generation_begin(D); ++q) {
      const Eigen::MatrixXd d = system_difference(sc, q);
      const Eigen::MatrixXd da = oracle::weighted_adjoint(d, w);
      sq += d.transpose() * w.asDiagonal() * d;
      dsq += da.transpose() * w.asDiagonal() * da;
    }
    const double lam = sparsity_check(sc.in_change_set(), m);
    const double delta = sc.system().delta(), c = sc.system().c();
    EXPECT_LE(weighted_quadratic_sup(sq, w), k_sq_system(delta, c, lam));
    EXPECT_LE(weighted_quadratic_sup(dsq, w), k_dsq_system(delta, c, lam));
    EXPECT_LE(carleson_constant(sc.beta_sequence(), m), lambda_beta_bound(c, lam) * (1 + 1e-12));
  }
}

TEST(System, PairedSparsity) {
  Rng rng(61);
  const Lattice lat(1, 5);
  const Measure mu = random_measure(lat, MeasureLaw::IidPositive, rng);
  const Measure nu = random_measure(lat, MeasureLaw::AtomHeavy, rng);
  const PairedSystem ps = make_paired(random_system(mu, SystemMode::Stopping, 0.5, 2.0, rng),
                                      random_system(nu, SystemMode::Stopping, 0.5, 2.0, rng), mu, nu);
  EXPECT_TRUE(ps.ok());
  EXPECT_NEAR(ps.lambda_b1_nu, sparsity_check(ps.r1.in_change_set, nu), 0.0);
}
