#include <gtest/gtest.h>

#include "dyadic/instance.hpp"
#include "oracles.hpp"

using namespace dyadic;

namespace {

Eigen::VectorXd lex(const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

TEST(Measure, MassExamples) {
  const Lattice lat(1, 2);
  EXPECT_NEAR(Measure::uniform(lat).mass(lat.root()), 1.0, 1e-15);
  const Measure m = Measure::from_lex(lat, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(m.mass(CubeId{1, {0}}), 3.0);
  const Measure zero = Measure::from_lex(lat, {0, 0, 0, 0});
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q) EXPECT_EQ(zero.mass(q), 0.0);
}

TEST(Measure, AverageExamples) {
  const Lattice l1(1, 1);
  const Measure u = Measure::uniform(l1);
  EXPECT_DOUBLE_EQ(average(StepFunction::from_lex(l1, {1, 3}), l1.root(), u), 2.0);
  const Lattice l2(1, 2);
  const Measure m = Measure::from_lex(l2, {0, 0, 1, 2});
  const auto one = StepFunction::constant(l2, 1.0);
  EXPECT_EQ(average(one, l2.index(CubeId{1, {0}}), m), 0.0);
  EXPECT_DOUBLE_EQ(average(one, l2.index(CubeId{1, {1}}), m), 1.0);
}

TEST(Measure, InnerAndMaximalExamples) {
  const Lattice lat(1, 1);
  const Measure u = Measure::uniform(lat);
  EXPECT_EQ(inner(StepFunction::from_lex(lat, {1, -1}), StepFunction::from_lex(lat, {1, 1}), u), 0.0);
  const auto mf = dyadic_maximal(StepFunction::constant(lat, -2.5), u);
  for (double v : mf.lex_values()) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(Measure, DoublingExamples) {
  EXPECT_DOUBLE_EQ(Measure::uniform(Lattice(2, 3)).doubling_constant(), 4.0);
  EXPECT_DOUBLE_EQ(Measure::from_lex(Lattice(1, 1), {1, 3}).doubling_constant(), 4.0);
  EXPECT_TRUE(std::isinf(Measure::from_lex(Lattice(1, 2), {0, 0, 1, 0}).doubling_constant()));
}

// Random measures and functions against lexicographic brute force.
TEST(Measure, AgreesWithOracle) {
  Rng rng(11);
  for (auto [n, D] : {std::pair{1, 4}, std::pair{2, 2}, std::pair{3, 1}}) {
    const Lattice lat(n, D);
    const Measure m = random_measure(lat, MeasureLaw::AtomHeavy, rng);
    const StepFunction f = random_function(lat, rng);
    const auto w = lex(m.lex_weights());
    const auto fv = lex(f.lex_values());
    const auto avgs = averages(f, m);
    const auto mf = dyadic_maximal(f, m).lex_values();
    const auto cubes = oracle::all_cubes(n, D);
    for (CubeIndex q = 0; q < lat.num_cubes(); ++q) {
      const auto& c = cubes[static_cast<std::size_t>(q)];
      EXPECT_NEAR(m.mass(q), oracle::mass(n, D, w, c), 1e-14);
      EXPECT_NEAR(avgs[static_cast<std::size_t>(q)], oracle::average(n, D, fv, w, c), 1e-12);
      for (std::int32_t k = 0; k < lat.num_leaves(); ++k)
        if (oracle::leaf_in(n, D, k, c))
          EXPECT_GE(mf[static_cast<std::size_t>(k)] + 1e-12, std::abs(oracle::average(n, D, fv, w, c)));
    }
  }
}

TEST(Measure, RefiningKeepsAverages) {
  // Split every leaf weight evenly one level down; averages of coarse cubes stay put.
  const Lattice coarse(1, 3), fine(1, 4);
  Rng rng(5);
  const Measure mc = random_measure(coarse, MeasureLaw::IidPositive, rng);
  std::vector<double> wf, ff;
  const StepFunction fc = random_function(coarse, rng);
  const auto wc = mc.lex_weights();
  const auto vc = fc.lex_values();
  for (std::size_t k = 0; k < wc.size(); ++k)
    for (int h = 0; h < 2; ++h) {
      wf.push_back(wc[k] / 2);
      ff.push_back(vc[k]);
    }
  const Measure mf = Measure::from_lex(fine, wf);
  const StepFunction f2 = StepFunction::from_lex(fine, ff);
  for (CubeIndex q = 0; q < coarse.num_cubes(); ++q)
    EXPECT_NEAR(average(fc, q, mc), average(f2, fine.index(coarse.cube(q)), mf), 1e-12);
}

TEST(Measure, RejectsBadWeights) {
  const Lattice lat(1, 1);
  EXPECT_THROW(Measure::from_lex(lat, {1.0, -1.0}), Error);
  EXPECT_THROW(Measure::from_lex(lat, {1.0}), Error);
}
