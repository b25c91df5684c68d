// SPDX-License-Identifier: Apache-2.0
//
// Dormant-neuron measurement over feed-forward activations. A unit is
// dormant when the magnitude of its post-GELU activation is below the
// threshold. A branch's ratio is the mean of its per-step dormant fractions.

#pragma once

#include <span>
#include <vector>

#include "avoid/common.hpp"

namespace avoid {

inline constexpr double kDefaultDormantThreshold = 5e-5;

/// Fraction of values with |v| < threshold. Throws ConfigError when empty.
double dormant_ratio(std::span<const float> activations,
                     double threshold = kDefaultDormantThreshold);

/// Dormant fraction over all layers of one step.
double dormant_fraction(std::span<const std::vector<float>> layer_activations,
                        double threshold = kDefaultDormantThreshold);

/// Mean of per-step fractions. Throws ConfigError when empty.
double branch_dormant_ratio(std::span<const double> step_fractions);

/// Ordinary least-squares slope of value against index 0..n-1.
/// Throws ConfigError for fewer than two points.
double trend_slope(std::span<const double> series);

struct DormantSeries {
  std::vector<double> ratios;
  double slope = 0.0;
};

/// Ratio per branch plus the fitted slope (0 for a single branch).
DormantSeries dormant_series(std::span<const std::vector<double>> step_fractions_per_branch);

}  // namespace avoid
