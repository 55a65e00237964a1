#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "divens/dataset.hpp"
#include "divens/genome.hpp"

namespace divens {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-epoch mean training loss, recorded before each epoch's updates finish.
struct TrainStats {
  std::vector<double> epoch_loss;
};

/// Residual multilayer perceptron built from a genome:
///   h0 = relu(W0 x + b0)                                     (F -> c)
///   h_i = skip_i(h_{i-1}) + dropout_i(relu(W_i h_{i-1} + b_i))  (-> o_i)
///   logits = Wh h_r + bh                                      (o_r -> C)
/// skip_i is the identity when widths match and a bias-free projection otherwise.
class ResidualMlp {
 public:
  struct Dense {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;
  };
  struct ResBlock {
    Dense branch;
    Eigen::MatrixXd skip;  // empty when the skip is the identity
    double dropout = 0.0;
  };

  /// Weights uniform in (-a, a), a = sqrt(6 / fan_in); biases zero.
  static ResidualMlp build(const Genome& g, int feature_dim, int class_count, std::uint64_t seed);

  const Genome& genome() const { return genome_; }
  int feature_dim() const { return feature_dim_; }
  int class_count() const { return class_count_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t block_count() const { return blocks_.size(); }
  const std::vector<ResBlock>& blocks() const { return blocks_; }

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);

  /// Inference logits for column-major inputs (F x B) -> (C x B).
  Eigen::MatrixXd logits(const Eigen::MatrixXd& inputs) const;

  /// Mean cross-entropy on (F x B) inputs in training mode, with dropout masks
  /// drawn from `dropout_rng`. Writes the flat gradient when `grad` is non-null.
  double loss_and_gradient(const Eigen::MatrixXd& inputs, std::span<const int> labels, Rng& dropout_rng,
                           std::vector<double>* grad) const;

 private:
  friend class ModelTrainer;
  // Visits every parameter tensor in flat-layout order.
  template <typename Self, typename Fn>
  static void for_each_tensor(Self& self, Fn&& fn);

  Genome genome_;
  int feature_dim_ = 0;
  int class_count_ = 0;
  std::uint64_t seed_ = 0;
  Dense input_;
  std::vector<ResBlock> blocks_;
  Dense head_;
};

/// Per-example predictions on a labelled set with correctness and wrong vectors.
struct PredictionProfile {
  std::vector<int> predictions;
  std::vector<std::uint8_t> correct;
  std::vector<std::uint8_t> wrong;

  std::size_t size() const { return predictions.size(); }
  double accuracy() const;
};

/// Builds a profile from predictions; p[n] = (y[n] == label[n]), w = NOT p.
PredictionProfile make_profile(std::vector<int> predictions, std::span<const int> labels);

/// Index of the largest entry of each column; ties go to the lowest index.
std::vector<int> argmax_columns(const Eigen::MatrixXd& scores);

ResidualMlp train_separate(ResidualMlp m, const LabeledDataset& data, const TrainConfig& cfg,
                           TrainStats* stats = nullptr);

/// Trains models with j = true as one composite whose output is the mean of
/// member logits (loss = cross-entropy of the mean); j = false models are
/// trained with train_separate.
std::vector<ResidualMlp> train_joint(std::vector<ResidualMlp> models, const LabeledDataset& data,
                                     const TrainConfig& cfg);

PredictionProfile evaluate(const ResidualMlp& m, const LabeledDataset& data);

/// Softmax class probabilities (C x N) for every row of `data`.
Eigen::MatrixXd class_probabilities(const ResidualMlp& m, const LabeledDataset& data);

enum class JointPolicy {
  honor,   // j = true members trained as one composite
  ignore,  // everyone trained separately
};

/// Build seed of a population member: a pure function of (seed, genome).
std::uint64_t member_seed(std::uint64_t seed, const Genome& g);

std::vector<ResidualMlp> train_models(std::span<const Genome> genomes, const LabeledDataset& train,
                                      const TrainConfig& cfg, JointPolicy policy);

std::vector<PredictionProfile> train_population(std::span<const Genome> genomes, const DataSplit& data,
                                                const TrainConfig& cfg, JointPolicy policy = JointPolicy::honor);

void save_model(const ResidualMlp& m, const std::string& path);
ResidualMlp load_model(const std::string& path);

}  // namespace divens
