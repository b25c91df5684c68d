// SPDX-License-Identifier: Apache-2.0

#include "avoid/instrumentation.hpp"

#include <cmath>

#include "avoid/common.hpp"

namespace avoid {

namespace {

std::size_t count_dormant(std::span<const float> values, double threshold) {
  std::size_t n = 0;
  for (float v : values) {
    if (std::fabs(static_cast<double>(v)) < threshold) ++n;
  }
  return n;
}

}  // namespace

double dormant_ratio(std::span<const float> activations, double threshold) {
  if (activations.empty()) throw ConfigError("dormant_ratio: empty activations");
  return static_cast<double>(count_dormant(activations, threshold)) /
         static_cast<double>(activations.size());
}

double dormant_fraction(std::span<const std::vector<float>> layer_activations, double threshold) {
  std::size_t dormant = 0;
  std::size_t total = 0;
  for (const auto& layer : layer_activations) {
    dormant += count_dormant(layer, threshold);
    total += layer.size();
  }
  if (total == 0) throw ConfigError("dormant_fraction: empty activations");
  return static_cast<double>(dormant) / static_cast<double>(total);
}

double branch_dormant_ratio(std::span<const double> step_fractions) {
  if (step_fractions.empty()) throw ConfigError("branch has no probed steps");
  double s = 0.0;
  for (double f : step_fractions) s += f;
  return s / static_cast<double>(step_fractions.size());
}

double trend_slope(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 2) throw ConfigError("trend_slope needs at least 2 points");
  const double x_mean = static_cast<double>(n - 1) / 2.0;
  double y_mean = 0.0;
  for (double y : series) y_mean += y;
  y_mean /= static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - x_mean;
    sxy += dx * (series[i] - y_mean);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

DormantSeries dormant_series(std::span<const std::vector<double>> step_fractions_per_branch) {
  DormantSeries out;
  for (const auto& steps : step_fractions_per_branch) out.ratios.push_back(branch_dormant_ratio(steps));
  if (out.ratios.size() >= 2) out.slope = trend_slope(out.ratios);
  return out;
}

}  // namespace avoid
