#pragma once

#include <span>

namespace causalma::stats {

double mean(std::span<const double> values);
// Sample standard deviation (divisor n - 1).
double stddev(std::span<const double> values);

// Quantile by linear interpolation between order statistics at 1-based
// position (n - 1) p + 1. `sorted` must be ascending and nonempty.
double quantile_sorted(std::span<const double> sorted, double p);

// Upper quantiles: P(X <= q) = p.
double normal_quantile(double p);
double student_t_quantile(double p, double degrees_of_freedom);

}  // namespace causalma::stats
