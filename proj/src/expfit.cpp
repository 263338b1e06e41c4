#include "rslq/expfit.hpp"

#include <cmath>

namespace rslq {

std::optional<ExpFit> fit_exponential_rates(
    const std::vector<std::pair<double, double>>& series, double window_lo,
    double window_hi) {
  std::vector<double> xs, ys;
  for (const auto& [x, v] : series) {
    if (v > 0.0 && v >= window_lo && v <= window_hi && std::isfinite(v)) {
      xs.push_back(x);
      ys.push_back(std::log(v));
    }
  }
  const int np = static_cast<int>(xs.size());
  if (np < 4) return std::nullopt;

  double sx = 0.0, sy = 0.0;
  for (int k = 0; k < np; ++k) {
    sx += xs[k];
    sy += ys[k];
  }
  const double mx = sx / np;
  const double my = sy / np;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int k = 0; k < np; ++k) {
    const double dx = xs[k] - mx;
    const double dy = ys[k] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0.0) return std::nullopt;

  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  ExpFit fit;
  fit.K = std::exp(intercept);
  fit.rate = -slope;
  fit.points_used = np;
  fit.r_squared = (syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace rslq
