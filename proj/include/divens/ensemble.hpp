#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "divens/learner.hpp"

namespace divens {

struct StackingConfig {
  int iterations = 300;
  double learning_rate = 0.5;
};

/// Multinomial logistic head over the concatenated member class
/// probabilities: scores = W [p_1; ...; p_E] + b, W is C x (E*C).
class StackingModel {
 public:
  StackingModel() = default;

  /// Averages member probabilities: W = (1/E) [I ... I], b = 0.
  static StackingModel uniform(int members, int classes);

  int members() const { return members_; }
  int classes() const { return classes_; }
  int iterations() const { return iterations_; }
  const Eigen::MatrixXd& weight() const { return weight_; }
  const Eigen::VectorXd& bias() const { return bias_; }

  /// Stacked inputs (E*C x N) from per-member probabilities (each C x N).
  Eigen::MatrixXd stack_inputs(std::span<const Eigen::MatrixXd> member_probs) const;
  Eigen::MatrixXd scores(std::span<const Eigen::MatrixXd> member_probs) const;

  nlohmann::json to_json() const;
  static StackingModel from_json(const nlohmann::json& j);

 private:
  friend StackingModel fit_stacking(std::span<const Eigen::MatrixXd>, std::span<const int>, int,
                                    const StackingConfig&);
  friend StackingModel with_weights(int, int, Eigen::MatrixXd, Eigen::VectorXd);
  int members_ = 0;
  int classes_ = 0;
  int iterations_ = 0;
  Eigen::MatrixXd weight_;
  Eigen::VectorXd bias_;
};

/// Stacking model with explicit parameters.
StackingModel with_weights(int members, int classes, Eigen::MatrixXd weight, Eigen::VectorXd bias);

/// Full-batch gradient descent on the mean cross-entropy over the validation
/// rows, starting from StackingModel::uniform.
StackingModel fit_stacking(std::span<const Eigen::MatrixXd> member_probs, std::span<const int> labels, int classes,
                           const StackingConfig& cfg);

StackingModel fit_stacking(std::span<const ResidualMlp> members, const LabeledDataset& val,
                           const StackingConfig& cfg);

PredictionProfile predict_stacked(const StackingModel& stack, std::span<const Eigen::MatrixXd> member_probs,
                                  std::span<const int> labels);

PredictionProfile predict_ensemble(std::span<const ResidualMlp> members, const StackingModel& stack,
                                   const LabeledDataset& data);

std::vector<Eigen::MatrixXd> member_probabilities(std::span<const ResidualMlp> members, const LabeledDataset& data);

}  // namespace divens
