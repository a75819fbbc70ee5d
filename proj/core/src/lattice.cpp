#include "dyadic/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dyadic {

namespace {

// Z-order position of a cube among its generation (coords[0] supplies the high bit of each digit).
std::int64_t morton(const std::vector<std::int64_t>& coords, int n, int g) {
  std::int64_t m = 0;
  for (int level = g - 1; level >= 0; --level) {
    std::int64_t digit = 0;
    for (int k = 0; k < n; ++k) digit = (digit << 1) | ((coords[static_cast<std::size_t>(k)] >> level) & 1);
    m = (m << n) | digit;
  }
  return m;
}

std::int64_t lex(const std::vector<std::int64_t>& coords, int n, int g) {
  std::int64_t x = 0;
  for (int k = 0; k < n; ++k) x = (x << g) | coords[static_cast<std::size_t>(k)];
  return x;
}

std::vector<std::int64_t> unlex(std::int64_t x, int n, int g) {
  std::vector<std::int64_t> c(static_cast<std::size_t>(n));
  const std::int64_t mask = (std::int64_t{1} << g) - 1;
  for (int k = n - 1; k >= 0; --k) {
    c[static_cast<std::size_t>(k)] = x & mask;
    x >>= g;
  }
  return c;
}

}  // namespace

std::string CubeId::to_string() const {
  std::ostringstream os;
  os << "(g=" << g << ", [";
  for (std::size_t i = 0; i < coords.size(); ++i) os << (i ? "," : "") << coords[i];
  os << "])";
  return os.str();
}

Lattice::Lattice(int n, int depth) : n_(n), depth_(depth) {
  if (n < 1) throw Error("lattice dimension must be positive");
  if (depth < 0) throw Error("lattice depth must be nonnegative");
  if (static_cast<long>(n) * depth > kMaxLeafBits)
    throw Error("lattice too large: n*depth=" + std::to_string(n * depth) + " exceeds " +
                std::to_string(kMaxLeafBits));

  auto t = std::make_shared<Tables>();
  const std::int64_t fan = std::int64_t{1} << n;
  t->gen_offset.push_back(0);
  for (int g = 0; g <= depth; ++g)
    t->gen_offset.push_back(t->gen_offset.back() + static_cast<CubeIndex>(std::int64_t{1} << (n * g)));
  const auto total = static_cast<std::size_t>(t->gen_offset.back());
  t->num_leaves = static_cast<std::int32_t>(std::int64_t{1} << (n * depth));
  t->gen.resize(total);
  t->parent.assign(total, kNoCube);
  t->range.resize(total);
  t->morton_cube.resize(total);
  t->child_list.resize(static_cast<std::size_t>(t->gen_offset[static_cast<std::size_t>(depth)]) *
                       static_cast<std::size_t>(fan));

  for (int g = 0; g <= depth; ++g) {
    const CubeIndex off = t->gen_offset[static_cast<std::size_t>(g)];
    const CubeIndex cnt = t->gen_offset[static_cast<std::size_t>(g) + 1] - off;
    const std::int64_t span = std::int64_t{1} << (n * (depth - g));
    for (CubeIndex i = 0; i < cnt; ++i) {
      const auto q = static_cast<std::size_t>(off + i);
      auto c = unlex(i, n, g);
      const std::int64_t z = morton(c, n, g);
      t->gen[q] = g;
      t->range[q] = {static_cast<std::int32_t>(z * span), static_cast<std::int32_t>((z + 1) * span)};
      t->morton_cube[static_cast<std::size_t>(off + z)] = off + i;
      if (g > 0) {
        auto pc = c;
        for (auto& x : pc) x >>= 1;
        t->parent[q] = t->gen_offset[static_cast<std::size_t>(g) - 1] + static_cast<CubeIndex>(lex(pc, n, g - 1));
      }
      if (g < depth) {
        // Children enumerated in lexicographic order: offsets e with coords[0] most significant.
        const CubeIndex coff = t->gen_offset[static_cast<std::size_t>(g) + 1];
        for (std::int64_t e = 0; e < fan; ++e) {
          auto cc = c;
          for (int k = 0; k < n; ++k) cc[static_cast<std::size_t>(k)] = 2 * cc[static_cast<std::size_t>(k)] + ((e >> (n - 1 - k)) & 1);
          t->child_list[q * static_cast<std::size_t>(fan) + static_cast<std::size_t>(e)] =
              coff + static_cast<CubeIndex>(lex(cc, n, g + 1));
        }
      }
    }
  }

  t->slot_of_lex.resize(static_cast<std::size_t>(t->num_leaves));
  t->lex_of_slot.resize(static_cast<std::size_t>(t->num_leaves));
  const CubeIndex leaf_off = t->gen_offset[static_cast<std::size_t>(depth)];
  for (std::int32_t k = 0; k < t->num_leaves; ++k) {
    const std::int32_t slot = t->range[static_cast<std::size_t>(leaf_off + k)].begin;
    t->slot_of_lex[static_cast<std::size_t>(k)] = slot;
    t->lex_of_slot[static_cast<std::size_t>(slot)] = k;
  }
  tables_ = std::move(t);
}

double Lattice::side_length(CubeIndex q) const { return std::ldexp(1.0, -generation(q)); }

std::span<const CubeIndex> Lattice::children(CubeIndex q) const {
  if (is_leaf(q)) return {};
  const std::size_t fan = std::size_t{1} << n_;
  return {tables_->child_list.data() + static_cast<std::size_t>(q) * fan, fan};
}

CubeIndex Lattice::cube_at(std::int32_t slot, int g) const {
  if (g < 0 || g > depth_) throw DepthError("generation " + std::to_string(g) + " outside lattice");
  const auto off = static_cast<std::size_t>(tables_->gen_offset[static_cast<std::size_t>(g)]);
  return tables_->morton_cube[off + static_cast<std::size_t>(slot >> (n_ * (depth_ - g)))];
}

CubeIndex Lattice::ancestor(CubeIndex q, int r) const {
  const int g = std::max(generation(q) - std::max(r, 0), 0);
  return cube_at(leaves(q).begin, g);
}

std::vector<CubeIndex> Lattice::descendants_at(CubeIndex q, int r) const {
  const int g = generation(q) + r;
  if (r < 0 || g > depth_) throw DepthError("descendants_at: generation " + std::to_string(g) + " exceeds depth");
  const auto lr = leaves(q);
  const std::int32_t step = std::int32_t{1} << (n_ * (depth_ - g));
  std::vector<CubeIndex> out;
  out.reserve(static_cast<std::size_t>(lr.size() / step));
  for (std::int32_t s = lr.begin; s < lr.end; s += step) out.push_back(cube_at(s, g));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<CubeIndex> Lattice::subtree(CubeIndex q) const {
  std::vector<CubeIndex> out;
  for (int r = 0; generation(q) + r <= depth_; ++r) {
    auto d = descendants_at(q, r);
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

bool Lattice::contains(CubeIndex a, CubeIndex b) const {
  return generation(a) <= generation(b) && leaves(a).contains(leaves(b).begin);
}

bool Lattice::valid(const CubeId& c) const {
  if (c.g < 0 || c.g > depth_ || static_cast<int>(c.coords.size()) != n_) return false;
  const std::int64_t lim = std::int64_t{1} << c.g;
  return std::all_of(c.coords.begin(), c.coords.end(), [&](std::int64_t x) { return x >= 0 && x < lim; });
}

CubeIndex Lattice::index(const CubeId& c) const {
  if (c.g > depth_) throw DepthError("cube " + c.to_string() + " deeper than lattice");
  if (!valid(c)) throw Error("invalid cube " + c.to_string());
  return tables_->gen_offset[static_cast<std::size_t>(c.g)] + static_cast<CubeIndex>(lex(c.coords, n_, c.g));
}

CubeId Lattice::cube(CubeIndex q) const {
  const int g = generation(q);
  return {g, unlex(q - tables_->gen_offset[static_cast<std::size_t>(g)], n_, g)};
}

std::optional<CubeId> Lattice::parent(const CubeId& c) const {
  const CubeIndex q = index(c);
  if (q == root()) return std::nullopt;
  return cube(parent(q));
}

CubeId Lattice::ancestor(const CubeId& c, int r) const { return cube(ancestor(index(c), r)); }

std::vector<CubeId> Lattice::children(const CubeId& c) const {
  const CubeIndex q = index(c);
  if (is_leaf(q)) throw DepthError("children of a leaf cube");
  std::vector<CubeId> out;
  for (CubeIndex ch : children(q)) out.push_back(cube(ch));
  return out;
}

std::vector<CubeId> Lattice::descendants_at(const CubeId& c, int r) const {
  std::vector<CubeId> out;
  for (CubeIndex d : descendants_at(index(c), r)) out.push_back(cube(d));
  return out;
}

bool Lattice::contains(const CubeId& a, const CubeId& b) const { return contains(index(a), index(b)); }

void require_same(const Lattice& a, const Lattice& b, const char* what) {
  if (!(a == b))
    throw ShapeError(std::string(what) + ": lattice mismatch (n=" + std::to_string(a.n()) + ",D=" +
                     std::to_string(a.depth()) + " vs n=" + std::to_string(b.n()) + ",D=" +
                     std::to_string(b.depth()) + ")");
}

}  // namespace dyadic
