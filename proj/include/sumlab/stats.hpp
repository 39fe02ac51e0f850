#pragma once

#include <cmath>
#include <span>

namespace sumlab {

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t count = 0;

  /// Two-sided normal interval at the given z.
  double lower(double z) const { return mean - z * stderr_; }
  double upper(double z) const { return mean + z * stderr_; }
};

/// z for a two-sided 80% normal interval.
inline constexpr double kZ80 = 1.2815515655446004;

inline MeanStderr mean_stderr(std::span<const double> xs) {
  MeanStderr out;
  out.count = xs.size();
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    const double var = ss / static_cast<double>(xs.size() - 1);
    out.stderr_ = std::sqrt(var / static_cast<double>(xs.size()));
  }
  return out;
}

}  // namespace sumlab
