#pragma once

#include <span>
#include <vector>

namespace divens {

double median(std::vector<double> values);
double mean(std::span<const double> values);

/// 1-based ranks; tied values receive the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

struct Correlation {
  double value = 0.0;
  /// Set when either input has zero variance; value is then 0.
  bool degenerate = false;
};

Correlation pearson(std::span<const double> x, std::span<const double> y);
Correlation spearman(std::span<const double> x, std::span<const double> y);

struct MannWhitneyResult {
  double u = 0.0;  // statistic of the first sample
  double z = 0.0;  // normal score (0 when exact)
  double p_value = 1.0;
  bool exact = false;
};

/// Two-sided Mann-Whitney U test. Without ties and for small samples the p
/// value comes from the exact null distribution of U; otherwise from the
/// normal approximation with tie-corrected variance and continuity correction.
MannWhitneyResult mann_whitney(std::span<const double> a, std::span<const double> b);

}  // namespace divens
