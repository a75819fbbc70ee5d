#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dyadic {

/// Base class for all errors thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested a generation deeper than the lattice depth.
class DepthError : public Error {
 public:
  using Error::Error;
};

/// Lattice sizes or operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Flat index of a cube in (generation, lexicographic coords) order.
using CubeIndex = std::int32_t;
inline constexpr CubeIndex kNoCube = -1;

/// A dyadic cube addressed by generation and integer coordinates.
struct CubeId {
  int g = 0;
  std::vector<std::int64_t> coords;

  friend bool operator==(const CubeId&, const CubeId&) = default;
  std::string to_string() const;
};

/// Half-open range of leaf slots covered by a cube.
struct LeafRange {
  std::int32_t begin = 0;
  std::int32_t end = 0;
  std::int32_t size() const { return end - begin; }
  bool contains(std::int32_t slot) const { return slot >= begin && slot < end; }
};

/// Finite dyadic tree of dimension n and depth D rooted at the unit cube.
///
/// Cubes are numbered in (generation, lexicographic coords) order, with
/// coords[0] the most significant axis. Leaves are stored in Z-order
/// ("slots") so every cube covers one contiguous slot range; external
/// formats use lexicographic leaf order and convert at the boundary.
///
/// Copies share the immutable navigation tables.
class Lattice {
 public:
  /// Largest supported n * depth (2^20 leaves).
  static constexpr int kMaxLeafBits = 20;

  Lattice(int n, int depth);

  int n() const { return n_; }
  int depth() const { return depth_; }
  std::int32_t num_leaves() const { return tables_->num_leaves; }
  CubeIndex num_cubes() const { return static_cast<CubeIndex>(tables_->gen.size()); }
  CubeIndex root() const { return 0; }

  CubeIndex generation_begin(int g) const { return tables_->gen_offset.at(static_cast<std::size_t>(g)); }
  CubeIndex generation_end(int g) const { return tables_->gen_offset.at(static_cast<std::size_t>(g) + 1); }
  CubeIndex cubes_in_generation(int g) const { return generation_end(g) - generation_begin(g); }

  int generation(CubeIndex q) const { return tables_->gen[static_cast<std::size_t>(q)]; }
  bool is_leaf(CubeIndex q) const { return generation(q) == depth_; }
  double side_length(CubeIndex q) const;

  CubeIndex parent(CubeIndex q) const { return tables_->parent[static_cast<std::size_t>(q)]; }
  std::span<const CubeIndex> children(CubeIndex q) const;
  /// Q^{(r)}; clamps to the root when r exceeds the generation.
  CubeIndex ancestor(CubeIndex q, int r) const;
  /// Cubes of generation g(q) + r inside q, in enumeration order.
  std::vector<CubeIndex> descendants_at(CubeIndex q, int r) const;
  /// All cubes contained in q (q included), in enumeration order.
  std::vector<CubeIndex> subtree(CubeIndex q) const;
  /// True iff b is a (not necessarily strict) subcube of a.
  bool contains(CubeIndex a, CubeIndex b) const;

  LeafRange leaves(CubeIndex q) const { return tables_->range[static_cast<std::size_t>(q)]; }
  /// Generation-D cube occupying a leaf slot.
  CubeIndex leaf_cube(std::int32_t slot) const { return cube_at(slot, depth_); }
  /// The generation-g cube containing a leaf slot.
  CubeIndex cube_at(std::int32_t slot, int g) const;

  /// Leaf slot of the k-th leaf in lexicographic order, and back.
  std::int32_t slot_of_lex(std::int32_t k) const { return tables_->slot_of_lex[static_cast<std::size_t>(k)]; }
  std::int32_t lex_of_slot(std::int32_t slot) const { return tables_->lex_of_slot[static_cast<std::size_t>(slot)]; }

  bool valid(const CubeId& c) const;
  CubeIndex index(const CubeId& c) const;
  CubeId cube(CubeIndex q) const;

  // CubeId-level navigation.
  std::optional<CubeId> parent(const CubeId& c) const;
  CubeId ancestor(const CubeId& c, int r) const;
  std::vector<CubeId> children(const CubeId& c) const;
  std::vector<CubeId> descendants_at(const CubeId& c, int r) const;
  bool contains(const CubeId& a, const CubeId& b) const;

  friend bool operator==(const Lattice& a, const Lattice& b) { return a.n_ == b.n_ && a.depth_ == b.depth_; }

 private:
  struct Tables {
    std::int32_t num_leaves = 0;
    std::vector<CubeIndex> gen_offset;
    std::vector<int> gen;
    std::vector<CubeIndex> parent;
    std::vector<CubeIndex> child_list;  // 2^n entries per non-leaf cube, ascending
    std::vector<LeafRange> range;
    std::vector<CubeIndex> morton_cube;  // per generation: Z-order position -> cube
    std::vector<std::int32_t> slot_of_lex;
    std::vector<std::int32_t> lex_of_slot;
  };

  int n_;
  int depth_;
  std::shared_ptr<const Tables> tables_;
};

/// Throws ShapeError unless the two lattices are identical.
void require_same(const Lattice& a, const Lattice& b, const char* what);

}  // namespace dyadic
