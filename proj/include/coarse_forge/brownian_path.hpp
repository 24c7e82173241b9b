#pragma once

#include <cstddef>
#include <deque>

#include "coarse_forge/rng.hpp"

namespace cforge {

/// One-dimensional Brownian motion realized lazily on a sorted knot list.
/// Knots store the increment since the previous knot. Queries past the last
/// knot draw fresh increments; queries between knots are filled in by
/// Brownian-bridge sampling, so the realized path is consistent no matter
/// in which order times are visited.
class LazyBrownianPath {
 public:
  static constexpr std::size_t kMaxKnots = 10'000;

  /// `bridge` supplies the normals for bridge insertions.
  explicit LazyBrownianPath(CounterStream bridge, double t0 = 0.0);

  /// B(start + delta) - B(start). `start` must not be behind the pruned
  /// front. When start + delta lies past the last knot, the part beyond it is
  /// sqrt(length) * fresh_normal. Throws NumericalError when the live knot
  /// count would exceed kMaxKnots or delta < 0.
  double increment(double start, double delta, double fresh_normal);

  /// B(u) - B(t0) for an already realized u (inserting a bridge knot if u
  /// falls between knots). u must lie within [front time, last time].
  double value(double u);

  /// Drops knots strictly before t; the accumulated value is kept.
  void prune_before(double t);

  std::size_t knots() const { return knots_.size(); }
  double front_time() const { return knots_.front().time; }
  double back_time() const { return knots_.back().time; }

 private:
  struct Knot {
    double time;
    double step;  // B(time) - B(previous knot time)
  };

  // Index of the knot at exactly time u, inserting one if needed.
  std::size_t ensure_knot(double u);
  void check_capacity() const;

  std::deque<Knot> knots_;
  double base_value_ = 0.0;  // B(front time) - B(t0)
  CounterStream bridge_;
};

}  // namespace cforge
