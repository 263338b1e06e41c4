#pragma once

// Least-squares fit of an exponential decay model  value ~= K exp(-rate * x)
// through (x, value) pairs, done in log space.

#include <optional>
#include <utility>
#include <vector>

namespace rslq {

struct ExpFit {
  double K = 0.0;        // multiplicative constant
  double rate = 0.0;     // decay rate (positive = decreasing)
  double r_squared = 0.0;
  int points_used = 0;
};

// Fits log(value) = log(K) - rate * x over the pairs whose value lies inside
// [window_lo, window_hi]. Returns std::nullopt when fewer than 4 usable
// points remain (non-positive values are never usable).
std::optional<ExpFit> fit_exponential_rates(
    const std::vector<std::pair<double, double>>& series, double window_lo,
    double window_hi);

}  // namespace rslq
