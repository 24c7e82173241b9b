#include "coarse_forge/brownian_path.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "coarse_forge/error.hpp"

namespace cforge {

LazyBrownianPath::LazyBrownianPath(CounterStream bridge, double t0) : bridge_(bridge) {
  knots_.push_back({t0, 0.0});
}

void LazyBrownianPath::check_capacity() const {
  if (knots_.size() > kMaxKnots)
    throw NumericalError("brownian path: more than " + std::to_string(kMaxKnots) +
                         " live knots (clocks drifted too far apart)");
}

std::size_t LazyBrownianPath::ensure_knot(double u) {
  if (u < knots_.front().time) throw NumericalError("brownian path: query behind pruned front");
  if (u > knots_.back().time) throw NumericalError("brownian path: query past last knot");
  auto it = std::lower_bound(knots_.begin(), knots_.end(), u,
                             [](const Knot& k, double t) { return k.time < t; });
  const auto idx = static_cast<std::size_t>(it - knots_.begin());
  if (it->time == u) return idx;
  // bridge between knots idx-1 and idx
  const double t0 = knots_[idx - 1].time, t1 = knots_[idx].time;
  const double total = knots_[idx].step;
  const double frac = (u - t0) / (t1 - t0);
  const double var = (u - t0) * (t1 - u) / (t1 - t0);
  const double a = frac * total + std::sqrt(std::max(0.0, var)) * bridge_.normal();
  knots_[idx].step = total - a;
  knots_.insert(knots_.begin() + static_cast<std::ptrdiff_t>(idx), Knot{u, a});
  check_capacity();
  return idx;
}

double LazyBrownianPath::increment(double start, double delta, double fresh_normal) {
  if (!(delta >= 0.0)) throw NumericalError("brownian path: negative clock increment");
  if (delta == 0.0) return 0.0;
  const double end = start + delta;
  if (start == knots_.back().time) {
    const double step = std::sqrt(delta) * fresh_normal;
    knots_.push_back({end, step});
    check_capacity();
    return step;
  }
  if (start > knots_.back().time) {
    // gap before start; fill it from the bridge stream
    const double gap = start - knots_.back().time;
    knots_.push_back({start, std::sqrt(gap) * bridge_.normal()});
  }
  const std::size_t i0 = ensure_knot(start);
  std::size_t i1;
  if (end > knots_.back().time) {
    knots_.push_back({end, std::sqrt(end - knots_.back().time) * fresh_normal});
    check_capacity();
    i1 = knots_.size() - 1;
  } else {
    i1 = ensure_knot(end);
  }
  double sum = 0.0;
  for (std::size_t i = i0 + 1; i <= i1; ++i) sum += knots_[i].step;
  return sum;
}

double LazyBrownianPath::value(double u) {
  const std::size_t idx = ensure_knot(u);
  double v = base_value_;
  for (std::size_t i = 1; i <= idx; ++i) v += knots_[i].step;
  return v;
}

void LazyBrownianPath::prune_before(double t) {
  while (knots_.size() > 1 && knots_[1].time <= t) {
    base_value_ += knots_[1].step;
    knots_.pop_front();
  }
}

}  // namespace cforge
