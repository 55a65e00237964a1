#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "divens/common.hpp"

namespace divens {

/// N x F feature matrix (one row per example) with contiguous class labels.
struct LabeledDataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  int feature_dim() const { return static_cast<int>(features.cols()); }

  /// Throws InvalidArgument unless N >= 1, labels < C and features finite.
  void validate() const;

  LabeledDataset subset(const std::vector<std::size_t>& rows) const;
};

struct DataSplit {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
  /// Row indices into the source dataset, ascending within each part.
  std::array<std::vector<std::size_t>, 3> rows;
};

/// Loads a comma-separated file. A first row that does not parse as numbers is
/// treated as a header. `label_column` < 0 counts from the end (-1 = last).
LabeledDataset load_csv(const std::string& path, int label_column = -1);

/// Gaussian blobs around class centers placed on a scaled simplex.
LabeledDataset synth_blobs(int classes, int per_class, int dim, double spread, std::uint64_t seed);

/// Stratified train/val/test split.
DataSplit split(const LabeledDataset& d, std::array<double, 3> fractions, std::uint64_t seed);

/// Standardizes every part with per-column mean and deviation of train.
void standardize(DataSplit& s);

}  // namespace divens
