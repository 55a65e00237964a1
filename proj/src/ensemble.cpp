#include "divens/ensemble.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace divens {

StackingModel StackingModel::uniform(int members, int classes) {
  if (members < 1) throw InvalidArgument("stacking: need at least one member");
  if (classes < 2) throw InvalidArgument("stacking: need at least two classes");
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(classes, static_cast<Eigen::Index>(members) * classes);
  for (int e = 0; e < members; ++e)
    w.block(0, static_cast<Eigen::Index>(e) * classes, classes, classes).diagonal().setConstant(1.0 / members);
  return with_weights(members, classes, std::move(w), Eigen::VectorXd::Zero(classes));
}

StackingModel with_weights(int members, int classes, Eigen::MatrixXd weight, Eigen::VectorXd bias) {
  if (weight.rows() != classes || weight.cols() != static_cast<Eigen::Index>(members) * classes ||
      bias.size() != classes)
    throw LengthMismatch("stacking: weight shape must be C x (E*C)");
  StackingModel s;
  s.members_ = members;
  s.classes_ = classes;
  s.weight_ = std::move(weight);
  s.bias_ = std::move(bias);
  return s;
}

Eigen::MatrixXd StackingModel::stack_inputs(std::span<const Eigen::MatrixXd> member_probs) const {
  if (static_cast<int>(member_probs.size()) != members_) throw LengthMismatch("stacking: wrong member count");
  const Eigen::Index n = member_probs.front().cols();
  Eigen::MatrixXd z(static_cast<Eigen::Index>(members_) * classes_, n);
  for (int e = 0; e < members_; ++e) {
    const auto& p = member_probs[static_cast<std::size_t>(e)];
    if (p.rows() != classes_ || p.cols() != n) throw LengthMismatch("stacking: member output shape mismatch");
    z.block(static_cast<Eigen::Index>(e) * classes_, 0, classes_, n) = p;
  }
  return z;
}

Eigen::MatrixXd StackingModel::scores(std::span<const Eigen::MatrixXd> member_probs) const {
  return (weight_ * stack_inputs(member_probs)).colwise() + bias_;
}

nlohmann::json StackingModel::to_json() const {
  std::vector<double> w(weight_.data(), weight_.data() + weight_.size());
  std::vector<double> b(bias_.data(), bias_.data() + bias_.size());
  return {{"members", members_}, {"classes", classes_}, {"iterations", iterations_}, {"weight_col_major", w}, {"bias", b}};
}

StackingModel StackingModel::from_json(const nlohmann::json& j) {
  const int members = j.at("members").get<int>();
  const int classes = j.at("classes").get<int>();
  const auto w = j.at("weight_col_major").get<std::vector<double>>();
  const auto b = j.at("bias").get<std::vector<double>>();
  if (w.size() != static_cast<std::size_t>(members) * classes * classes || b.size() != static_cast<std::size_t>(classes))
    throw CorruptFile("stacking weights have the wrong size");
  StackingModel s = with_weights(members, classes, Eigen::Map<const Eigen::MatrixXd>(w.data(), classes, members * classes),
                                 Eigen::Map<const Eigen::VectorXd>(b.data(), classes));
  s.iterations_ = j.at("iterations").get<int>();
  return s;
}

StackingModel fit_stacking(std::span<const Eigen::MatrixXd> member_probs, std::span<const int> labels, int classes,
                           const StackingConfig& cfg) {
  if (member_probs.empty()) throw InvalidArgument("stacking: no members");
  if (labels.empty()) throw InvalidArgument("stacking: empty validation set");
  if (cfg.iterations < 0 || !(cfg.learning_rate > 0.0)) throw InvalidArgument("stacking: invalid config");
  StackingModel s = StackingModel::uniform(static_cast<int>(member_probs.size()), classes);
  const Eigen::MatrixXd z = s.stack_inputs(member_probs);
  if (static_cast<std::size_t>(z.cols()) != labels.size()) throw LengthMismatch("stacking: label count mismatch");
  const double inv_n = 1.0 / static_cast<double>(labels.size());

  for (int it = 0; it < cfg.iterations; ++it) {
    Eigen::MatrixXd g = (s.weight_ * z).colwise() + s.bias_;
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      const double mx = g.col(j).maxCoeff();
      g.col(j) = (g.col(j).array() - mx).exp().matrix();
      g.col(j) /= g.col(j).sum();
      g(labels[static_cast<std::size_t>(j)], j) -= 1.0;
    }
    g *= inv_n;
    s.weight_ -= cfg.learning_rate * (g * z.transpose());
    s.bias_ -= cfg.learning_rate * g.rowwise().sum();
    if (!s.weight_.allFinite() || !s.bias_.allFinite()) throw DivergenceError("stacking diverged");
  }
  s.iterations_ = cfg.iterations;
  return s;
}

std::vector<Eigen::MatrixXd> member_probabilities(std::span<const ResidualMlp> members, const LabeledDataset& data) {
  std::vector<Eigen::MatrixXd> out(members.size());
  parallel_for(members.size(), [&](std::size_t i) { out[i] = class_probabilities(members[i], data); });
  return out;
}

StackingModel fit_stacking(std::span<const ResidualMlp> members, const LabeledDataset& val,
                           const StackingConfig& cfg) {
  if (members.empty()) throw InvalidArgument("stacking: no members");
  const auto probs = member_probabilities(members, val);
  return fit_stacking(probs, val.labels, members.front().class_count(), cfg);
}

PredictionProfile predict_stacked(const StackingModel& stack, std::span<const Eigen::MatrixXd> member_probs,
                                  std::span<const int> labels) {
  return make_profile(argmax_columns(stack.scores(member_probs)), labels);
}

PredictionProfile predict_ensemble(std::span<const ResidualMlp> members, const StackingModel& stack,
                                   const LabeledDataset& data) {
  const auto probs = member_probabilities(members, data);
  return predict_stacked(stack, probs, data.labels);
}

}  // namespace divens
