#include "dyadic/measure.hpp"

#include <cmath>
#include <limits>

namespace dyadic {

std::vector<double> cube_sums(const Lattice& lat, const Eigen::VectorXd& v) {
  std::vector<double> s(static_cast<std::size_t>(lat.num_cubes()), 0.0);
  const int D = lat.depth();
  for (CubeIndex q = lat.generation_begin(D); q < lat.generation_end(D); ++q)
    s[static_cast<std::size_t>(q)] = v[lat.leaves(q).begin];
  for (int g = D - 1; g >= 0; --g)
    for (CubeIndex q = lat.generation_begin(g); q < lat.generation_end(g); ++q) {
      double acc = 0.0;
      for (CubeIndex c : lat.children(q)) acc += s[static_cast<std::size_t>(c)];
      s[static_cast<std::size_t>(q)] = acc;
    }
  return s;
}

namespace {

Eigen::VectorXd lex_to_slot(const Lattice& lat, const std::vector<double>& x, const char* what) {
  if (static_cast<std::int64_t>(x.size()) != lat.num_leaves())
    throw ShapeError(std::string(what) + ": expected " + std::to_string(lat.num_leaves()) + " leaf values, got " +
                     std::to_string(x.size()));
  Eigen::VectorXd v(lat.num_leaves());
  for (std::int32_t k = 0; k < lat.num_leaves(); ++k) v[lat.slot_of_lex(k)] = x[static_cast<std::size_t>(k)];
  return v;
}

std::vector<double> slot_to_lex(const Lattice& lat, const Eigen::VectorXd& v) {
  std::vector<double> x(static_cast<std::size_t>(lat.num_leaves()));
  for (std::int32_t k = 0; k < lat.num_leaves(); ++k) x[static_cast<std::size_t>(k)] = v[lat.slot_of_lex(k)];
  return x;
}

}  // namespace

Measure::Measure(Lattice lat, Eigen::VectorXd w) : lat_(std::move(lat)), w_(std::move(w)) {
  if (w_.size() != lat_.num_leaves()) throw ShapeError("measure: weight count does not match lattice");
  for (Eigen::Index i = 0; i < w_.size(); ++i)
    if (!(w_[i] >= 0.0) || !std::isfinite(w_[i])) throw Error("measure: weights must be finite and nonnegative");
  mass_ = cube_sums(lat_, w_);
}

Measure Measure::from_lex(const Lattice& lat, const std::vector<double>& x) {
  return Measure(lat, lex_to_slot(lat, x, "measure"));
}

Measure Measure::uniform(const Lattice& lat) {
  return Measure(lat, Eigen::VectorXd::Constant(lat.num_leaves(), 1.0 / lat.num_leaves()));
}

std::vector<double> Measure::lex_weights() const { return slot_to_lex(lat_, w_); }

double Measure::doubling_constant() const {
  double sup = 1.0;
  for (CubeIndex q = 1; q < lat_.num_cubes(); ++q) {
    const double p = mass(lat_.parent(q));
    const double c = mass(q);
    if (p <= 0.0) continue;
    if (c <= 0.0) return std::numeric_limits<double>::infinity();
    sup = std::max(sup, p / c);
  }
  return sup;
}

StepFunction::StepFunction(Lattice lat, Eigen::VectorXd v) : lattice(std::move(lat)), values(std::move(v)) {
  if (values.size() != lattice.num_leaves()) throw ShapeError("step function: value count does not match lattice");
}

StepFunction StepFunction::from_lex(const Lattice& lat, const std::vector<double>& x) {
  return {lat, lex_to_slot(lat, x, "step function")};
}

StepFunction StepFunction::constant(const Lattice& lat, double c) {
  return {lat, Eigen::VectorXd::Constant(lat.num_leaves(), c)};
}

StepFunction StepFunction::indicator(const Lattice& lat, CubeIndex q) {
  StepFunction f(lat);
  const auto r = lat.leaves(q);
  f.values.segment(r.begin, r.size()).setOnes();
  return f;
}

std::vector<double> StepFunction::lex_values() const { return slot_to_lex(lattice, values); }

StepFunction StepFunction::restricted(CubeIndex q) const {
  StepFunction f(lattice);
  const auto r = lattice.leaves(q);
  f.values.segment(r.begin, r.size()) = values.segment(r.begin, r.size());
  return f;
}

double integral(const StepFunction& f, const Measure& m, CubeIndex q) {
  require_same(f.lattice, m.lattice(), "integral");
  const auto r = m.lattice().leaves(q);
  return f.values.segment(r.begin, r.size()).dot(m.weights().segment(r.begin, r.size()));
}

double average(const StepFunction& f, CubeIndex q, const Measure& m) {
  const double mq = m.mass(q);
  return mq > 0.0 ? integral(f, m, q) / mq : 0.0;
}

std::vector<double> averages(const StepFunction& f, const Measure& m) {
  require_same(f.lattice, m.lattice(), "averages");
  auto s = cube_sums(m.lattice(), f.values.cwiseProduct(m.weights()));
  for (std::size_t q = 0; q < s.size(); ++q) s[q] = m.masses()[q] > 0.0 ? s[q] / m.masses()[q] : 0.0;
  return s;
}

double inner(const StepFunction& f, const StepFunction& g, const Measure& m) {
  require_same(f.lattice, g.lattice, "inner");
  require_same(f.lattice, m.lattice(), "inner");
  return f.values.cwiseProduct(g.values).dot(m.weights());
}

double norm(const StepFunction& f, const Measure& m) { return std::sqrt(std::max(inner(f, f, m), 0.0)); }

double wnorm(const Eigen::VectorXd& v, const Eigen::VectorXd& w) {
  return std::sqrt(std::max(v.cwiseAbs2().dot(w), 0.0));
}

StepFunction dyadic_maximal(const StepFunction& f, const Measure& m) {
  const Lattice& lat = m.lattice();
  StepFunction af(lat, f.values.cwiseAbs());
  const auto avg = averages(af, m);
  // Running max of ancestor averages, top-down.
  std::vector<double> best(avg.size(), 0.0);
  best[0] = avg[0];
  for (CubeIndex q = 1; q < lat.num_cubes(); ++q)
    best[static_cast<std::size_t>(q)] = std::max(best[static_cast<std::size_t>(lat.parent(q))], avg[static_cast<std::size_t>(q)]);
  StepFunction out(lat);
  for (std::int32_t s = 0; s < lat.num_leaves(); ++s) out.values[s] = best[static_cast<std::size_t>(lat.leaf_cube(s))];
  return out;
}

}  // namespace dyadic
