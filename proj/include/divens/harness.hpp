#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "divens/dataset.hpp"
#include "divens/ensemble.hpp"
#include "divens/genome.hpp"
#include "divens/learner.hpp"
#include "divens/search.hpp"
#include "divens/surrogate.hpp"

namespace divens {

struct DatasetSpec {
  std::string source = "csv";  // "csv" or "blobs"
  std::string path;
  int label_column = -1;
  int classes = 3;
  int per_class = 100;
  int dim = 8;
  double spread = 1.0;
  std::array<double, 3> fractions{0.7, 0.15, 0.15};
  std::uint64_t split_seed = 0;
  bool standardize = true;
};

struct SurrogateSpec {
  int sample_size = 40;
  bool symmetrize = true;
  double held_out_fraction = 0.2;
  ForestParams forest;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  SearchSpaceBounds bounds;
  NsConfig ns;
  TrainConfig train;
  StackingConfig stacking;
  SurrogateSpec surrogate;
  int repetitions = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Parses the structured config document. Parameter names follow the
/// published parameter table ("Population size", "Number of blocks" = "2:6", ...).
/// Relative dataset paths resolve against `base_dir` when given.
ExperimentConfig parse_config(const nlohmann::json& j, const std::string& base_dir = "");
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Copy of `cfg` with every seed derived from `seed`.
ExperimentConfig with_seed(ExperimentConfig cfg, std::uint64_t seed);

/// FNV-1a of the canonical config document, in hex.
std::string config_hash(const ExperimentConfig& cfg);

DataSplit load_data(const DatasetSpec& spec);

/// Drops every object member whose key starts with "wall_clock" (recursively).
nlohmann::json strip_wall_clock(nlohmann::json j);

struct SampleResult {
  std::vector<SampleMember> members;
  std::vector<DistanceRecord> records;
  std::size_t resampled = 0;
  double wall_clock_training = 0.0;
};

/// Draws, trains (j-aware) and profiles `sample_size` genomes, then builds the
/// distance dataset. A genome whose training diverges is redrawn once.
SampleResult draw_sample(const ExperimentConfig& cfg, const DataSplit& data);

struct HeldOutSplit {
  std::vector<DistanceRecord> train;
  std::vector<DistanceRecord> held_out;
};

/// Splits distance records so both orientations of an unordered pair land on
/// the same side.
HeldOutSplit split_by_pair(std::span<const DistanceRecord> records, double held_out_fraction, std::uint64_t seed);

nlohmann::json fidelity_json(const FidelityReport& report);

/// Output of one search run, as persisted by cmd_search.
nlohmann::json run_report(const ExperimentConfig& cfg, const RunResult& r);
std::string iteration_csv(const RunResult& r);

struct ModeComparison {
  std::vector<double> wall_clock_exact;
  std::vector<double> wall_clock_surrogate;
  std::vector<double> accuracy_exact;
  std::vector<double> accuracy_surrogate;
  std::vector<std::uint64_t> seeds;
};

/// Runs exact and surrogate mode with matched seeds for `cfg.repetitions`
/// repetitions.
ModeComparison compare_modes(const ExperimentConfig& cfg, const DataSplit& data, const DistanceEstimator& surrogate);
nlohmann::json comparison_summary(const ExperimentConfig& cfg, const ModeComparison& c);
std::string comparison_csv(const ExperimentConfig& cfg, const ModeComparison& c);

struct MetricStudy {
  std::vector<Metric> metrics;
  std::vector<std::vector<double>> accuracy;  // [metric][repetition]
  std::vector<std::uint64_t> seeds;
};

/// Surrogate-mode runs of every metric over `cfg.repetitions` seeds.
MetricStudy compare_metrics(const ExperimentConfig& cfg, const DataSplit& data, const DistanceEstimator& surrogate,
                            const std::vector<Metric>& metrics);
/// Medians per metric and Mann-Whitney p values of every metric against the first.
nlohmann::json metric_summary(const ExperimentConfig& cfg, const MetricStudy& s);
std::string metric_csv(const ExperimentConfig& cfg, const MetricStudy& s);

// Commands. Each writes its artifacts into `out_dir` and returns the summary
// document it wrote.
nlohmann::json cmd_sample(const ExperimentConfig& cfg, const std::string& out_dir);
nlohmann::json cmd_train_surrogate(const ExperimentConfig& cfg, const std::string& distances_csv,
                                   const std::string& out_dir);
nlohmann::json cmd_search(const ExperimentConfig& cfg, const std::optional<std::string>& model_path,
                          const std::string& out_dir);
nlohmann::json cmd_compare(const ExperimentConfig& cfg, const std::string& model_path, const std::string& out_dir);
nlohmann::json cmd_compare_metrics(const ExperimentConfig& cfg, const std::string& model_path,
                                   const std::vector<Metric>& metrics, const std::string& out_dir);
/// Reloads the ensemble written by cmd_search from `run_dir` and scores it on the test split.
nlohmann::json cmd_evaluate(const ExperimentConfig& cfg, const std::string& run_dir, const std::string& out_dir);

}  // namespace divens
