#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "dyadic/lattice.hpp"
#include "oracles.hpp"

using namespace dyadic;

TEST(Lattice, ParentExamples) {
  const Lattice l1(1, 3);
  EXPECT_EQ(*l1.parent(CubeId{2, {1}}), (CubeId{1, {0}}));
  EXPECT_FALSE(l1.parent(CubeId{0, {0}}).has_value());
  const Lattice l2(2, 3);
  EXPECT_EQ(*l2.parent(CubeId{3, {5, 2}}), (CubeId{2, {2, 1}}));
}

TEST(Lattice, AncestorExamples) {
  const Lattice lat(1, 3);
  EXPECT_EQ(lat.ancestor(CubeId{3, {5}}, 2), (CubeId{1, {1}}));
  EXPECT_EQ(lat.ancestor(CubeId{3, {5}}, 0), (CubeId{3, {5}}));
  EXPECT_EQ(lat.ancestor(CubeId{1, {0}}, 5), lat.cube(lat.root()));
}

TEST(Lattice, DescendantsExamples) {
  const Lattice l1(1, 3);
  const auto d = l1.descendants_at(CubeId{0, {0}}, 2);
  ASSERT_EQ(d.size(), 4u);
  for (std::int64_t k = 0; k < 4; ++k) EXPECT_EQ(d[static_cast<std::size_t>(k)], (CubeId{2, {k}}));
  EXPECT_EQ(l1.descendants_at(CubeId{2, {3}}, 0), std::vector<CubeId>{(CubeId{2, {3}})});
  const Lattice l2(2, 2);
  EXPECT_EQ(l2.children(CubeId{0, {0, 0}}).size(), 4u);
  EXPECT_THROW(l1.descendants_at(CubeId{2, {0}}, 2), DepthError);
}

TEST(Lattice, ContainsExamples) {
  const Lattice lat(1, 3);
  EXPECT_TRUE(lat.contains(lat.cube(lat.root()), CubeId{3, {6}}));
  EXPECT_TRUE(lat.contains(CubeId{2, {1}}, CubeId{2, {1}}));
  EXPECT_FALSE(lat.contains(CubeId{1, {0}}, CubeId{1, {1}}));
}

TEST(Lattice, TooDeepIsRejected) { EXPECT_THROW(Lattice(1, 40), Error); }

// Every structural query agrees with the coordinate-arithmetic oracle.
class LatticeShapes : public ::testing::TestWithParam<std::pair<int, int>> {};

TEST_P(LatticeShapes, MatchesCoordinateOracle) {
  const auto [n, D] = GetParam();
  const Lattice lat(n, D);
  const auto cubes = oracle::all_cubes(n, D);
  ASSERT_EQ(static_cast<std::size_t>(lat.num_cubes()), cubes.size());
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q) {
    const CubeId& c = cubes[static_cast<std::size_t>(q)];
    ASSERT_EQ(lat.cube(q), c);
    ASSERT_EQ(lat.index(c), q);
    EXPECT_EQ(lat.generation(q), c.g);
    // Leaf ranges hold exactly the lexicographic leaves inside the cube.
    std::set<std::int32_t> from_range, from_oracle;
    const auto r = lat.leaves(q);
    for (auto s = r.begin; s < r.end; ++s) from_range.insert(lat.lex_of_slot(s));
    for (std::int32_t k = 0; k < lat.num_leaves(); ++k)
      if (oracle::leaf_in(n, D, k, c)) from_oracle.insert(k);
    EXPECT_EQ(from_range, from_oracle);
    if (c.g < D) {
      std::set<std::string> want, got;
      for (const auto& x : oracle::children(c)) want.insert(x.to_string());
      for (const auto& x : lat.children(c)) got.insert(x.to_string());
      EXPECT_EQ(want, got);
      for (CubeIndex k : lat.children(q)) EXPECT_EQ(lat.parent(k), q);
    }
  }
  for (std::int32_t k = 0; k < lat.num_leaves(); ++k) EXPECT_EQ(lat.lex_of_slot(lat.slot_of_lex(k)), k);
}

TEST_P(LatticeShapes, AncestorOfDescendantRoundTrips) {
  const auto [n, D] = GetParam();
  const Lattice lat(n, D);
  for (CubeIndex q = 0; q < lat.num_cubes(); ++q)
    for (int r = 0; r + lat.generation(q) <= D; ++r)
      for (CubeIndex d : lat.descendants_at(q, r)) {
        EXPECT_EQ(lat.ancestor(d, r), q);
        EXPECT_TRUE(lat.contains(q, d));
      }
}

INSTANTIATE_TEST_SUITE_P(Shapes, LatticeShapes,
                         ::testing::Values(std::pair{1, 1}, std::pair{1, 4}, std::pair{2, 2}, std::pair{2, 3},
                                           std::pair{3, 2}));
