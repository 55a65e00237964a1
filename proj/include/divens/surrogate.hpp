#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "divens/diversity.hpp"
#include "divens/genome.hpp"
#include "divens/learner.hpp"

namespace divens {

/// One row of the distance dataset: two concatenated normalized
/// representations and their six exact distances.
struct DistanceRecord {
  std::vector<double> x;
  DistanceVector d;
};

struct SampleMember {
  Genome genome;
  PredictionProfile profile;
};

/// One record per unordered pair (i < j); with `symmetrize` the mirrored row
/// (x halves swapped, same targets) follows each pair.
std::vector<DistanceRecord> build_distance_dataset(std::span<const SampleMember> sample,
                                                   const SearchSpaceBounds& bounds, bool symmetrize = true);

std::string distance_csv_header(std::size_t rep_length);
std::string write_distance_csv(std::span<const DistanceRecord> records);
std::vector<DistanceRecord> read_distance_csv(const std::string& path);

/// Anything that maps two normalized representations to six distances.
class DistanceEstimator {
 public:
  virtual ~DistanceEstimator() = default;
  virtual DistanceVector predict(const NormalizedRep& n_i, const NormalizedRep& n_j) const = 0;
};

using TargetVector = std::array<double, kMetricCount>;

/// CART regression tree with vector-valued leaves. Splits maximize the summed
/// per-output variance reduction; thresholds sit at midpoints between
/// consecutive observed values.
class RegressionTree {
 public:
  struct Node {
    std::int32_t feature = -1;  // -1 for leaves
    double threshold = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    TargetVector value{};
    std::uint32_t count = 0;  // training rows reaching this node
  };

  /// Fits on rows `rows` (duplicates allowed) of the feature matrix `x`
  /// (row-major, `dim` columns).
  static RegressionTree fit(std::span<const double> x, std::size_t dim, std::span<const TargetVector> y,
                            std::vector<std::size_t> rows, std::size_t m_try, std::size_t min_leaf, Rng& rng);

  const TargetVector& predict(std::span<const double> features) const;
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t leaf_count() const;
  std::size_t depth() const;

 private:
  friend class RandomForestSurrogate;
  std::vector<Node> nodes_;
};

struct ForestParams {
  std::size_t tree_count = 100;
  std::size_t m_try = 0;  // 0 selects ceil(feature_dim / 3)
  std::size_t min_leaf = 2;
  std::uint64_t seed = 0;
  /// Average predictions over both input orders.
  bool symmetric = true;
};

struct OobReport {
  TargetVector mse{};
  TargetVector r2{};
  std::size_t covered = 0;  // records with at least one out-of-bag tree
};

class RandomForestSurrogate final : public DistanceEstimator {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  static RandomForestSurrogate fit(std::span<const DistanceRecord> records, ForestParams params);

  DistanceVector predict(const NormalizedRep& n_i, const NormalizedRep& n_j) const override;
  /// Raw forest mean on one concatenated feature vector, without symmetrization.
  TargetVector predict_features(std::span<const double> features) const;

  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t tree_count() const { return trees_.size(); }
  std::size_t m_try() const { return m_try_; }
  std::size_t min_leaf() const { return min_leaf_; }
  bool symmetric() const { return symmetric_; }
  const std::vector<RegressionTree>& trees() const { return trees_; }
  /// Out-of-bag diagnostics from fitting; empty after load().
  const OobReport& oob() const { return oob_; }

  std::string serialize() const;
  static RandomForestSurrogate deserialize(const std::string& bytes);
  void save(const std::string& path) const;
  static RandomForestSurrogate load(const std::string& path);

 private:
  std::vector<RegressionTree> trees_;
  std::size_t feature_dim_ = 0;
  std::size_t m_try_ = 0;
  std::size_t min_leaf_ = 0;
  std::uint64_t seed_ = 0;
  bool symmetric_ = true;
  OobReport oob_;
};

struct MetricFidelity {
  double spearman = 0.0;
  bool degenerate = false;
  double mean_abs_error = 0.0;
};

struct FidelityReport {
  std::array<MetricFidelity, kMetricCount> metrics{};
  std::size_t records = 0;

  const MetricFidelity& operator[](Metric m) const { return metrics[static_cast<std::size_t>(m)]; }
};

/// Spearman correlation and mean absolute error between estimated and exact
/// distances on held-out records (at least 10).
FidelityReport rank_fidelity(const DistanceEstimator& estimator, std::span<const DistanceRecord> held_out);

/// Splits a record x into its two normalized representations.
std::pair<NormalizedRep, NormalizedRep> split_features(const DistanceRecord& r);

}  // namespace divens
