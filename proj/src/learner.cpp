#include "divens/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace divens {

void TrainConfig::validate() const {
  if (epochs < 0) throw InvalidArgument("train config: epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("train config: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("train config: learning_rate must be > 0");
}

template <typename Self, typename Fn>
void ResidualMlp::for_each_tensor(Self& self, Fn&& fn) {
  fn(self.input_.weight);
  fn(self.input_.bias);
  for (auto& b : self.blocks_) {
    fn(b.branch.weight);
    fn(b.branch.bias);
    if (b.skip.size() > 0) fn(b.skip);
  }
  fn(self.head_.weight);
  fn(self.head_.bias);
}

namespace {

void init_uniform(Eigen::MatrixXd& w, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(w.cols()));
  std::uniform_real_distribution<double> u(-a, a);
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
}

ResidualMlp::Dense make_dense(int in, int out, Rng& rng) {
  ResidualMlp::Dense d;
  d.weight.resize(out, in);
  init_uniform(d.weight, rng);
  d.bias = Eigen::VectorXd::Zero(out);
  return d;
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& a) { return a.cwiseMax(0.0); }

Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& a) { return (a.array() > 0.0).cast<double>().matrix(); }

// Column-wise softmax of logits.
Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    const double mx = p.col(j).maxCoeff();
    p.col(j) = (p.col(j).array() - mx).exp().matrix();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

double cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double mx = logits.col(j).maxCoeff();
    const double lse = mx + std::log((logits.col(j).array() - mx).exp().sum());
    total += lse - logits(labels[static_cast<std::size_t>(j)], j);
  }
  return total / static_cast<double>(logits.cols());
}

// d(mean CE)/d(logits), scaled by `scale`.
Eigen::MatrixXd cross_entropy_grad(const Eigen::MatrixXd& logits, std::span<const int> labels, double scale) {
  Eigen::MatrixXd g = softmax(logits);
  for (Eigen::Index j = 0; j < g.cols(); ++j) g(labels[static_cast<std::size_t>(j)], j) -= 1.0;
  return g * (scale / static_cast<double>(logits.cols()));
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& cols, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(cols.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = cols.col(static_cast<Eigen::Index>(idx[k]));
  return out;
}

}  // namespace

/// Forward/backward passes with access to model internals.
class ModelTrainer {
 public:
  struct BlockCache {
    Eigen::MatrixXd input;
    Eigen::MatrixXd pre;   // branch pre-activation
    Eigen::MatrixXd mask;  // scaled keep mask, empty when no dropout
  };
  struct Cache {
    Eigen::MatrixXd x;
    Eigen::MatrixXd input_pre;
    std::vector<BlockCache> blocks;
    Eigen::MatrixXd last_hidden;
    Eigen::MatrixXd logits;
  };

  static Cache forward(const ResidualMlp& m, const Eigen::MatrixXd& x, Rng* dropout_rng) {
    Cache c;
    c.x = x;
    c.input_pre = (m.input_.weight * x).colwise() + m.input_.bias;
    Eigen::MatrixXd h = relu(c.input_pre);
    c.blocks.reserve(m.blocks_.size());
    for (const auto& b : m.blocks_) {
      BlockCache bc;
      bc.input = h;
      bc.pre = (b.branch.weight * h).colwise() + b.branch.bias;
      Eigen::MatrixXd v = relu(bc.pre);
      if (dropout_rng != nullptr && b.dropout > 0.0) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double keep_scale = 1.0 / (1.0 - b.dropout);
        bc.mask.resize(v.rows(), v.cols());
        for (Eigen::Index j = 0; j < v.cols(); ++j)
          for (Eigen::Index i = 0; i < v.rows(); ++i) bc.mask(i, j) = u(*dropout_rng) < b.dropout ? 0.0 : keep_scale;
        v = v.cwiseProduct(bc.mask);
      }
      if (b.skip.size() > 0)
        h = b.skip * h + v;
      else
        h = h + v;
      c.blocks.push_back(std::move(bc));
    }
    c.last_hidden = h;
    c.logits = (m.head_.weight * h).colwise() + m.head_.bias;
    return c;
  }

  // Accumulates the gradient for upstream d(loss)/d(logits) into `grad`
  // (same layout as ResidualMlp::parameters()).
  static void backward(const ResidualMlp& m, const Cache& c, const Eigen::MatrixXd& upstream,
                       std::vector<double>& grad) {
    const std::size_t nb = m.blocks_.size();
    std::vector<Eigen::MatrixXd> d_branch_w(nb), d_skip(nb);
    std::vector<Eigen::VectorXd> d_branch_b(nb);

    const Eigen::MatrixXd d_head_w = upstream * c.last_hidden.transpose();
    const Eigen::VectorXd d_head_b = upstream.rowwise().sum();
    Eigen::MatrixXd dh = m.head_.weight.transpose() * upstream;
    for (std::size_t k = nb; k-- > 0;) {
      const auto& b = m.blocks_[k];
      const auto& bc = c.blocks[k];
      Eigen::MatrixXd dz = dh;
      if (bc.mask.size() > 0) dz = dz.cwiseProduct(bc.mask);
      dz = dz.cwiseProduct(relu_mask(bc.pre));
      d_branch_w[k] = dz * bc.input.transpose();
      d_branch_b[k] = dz.rowwise().sum();
      Eigen::MatrixXd d_in = b.branch.weight.transpose() * dz;
      if (b.skip.size() > 0) {
        d_skip[k] = dh * bc.input.transpose();
        d_in += b.skip.transpose() * dh;
      } else {
        d_in += dh;
      }
      dh = std::move(d_in);
    }
    const Eigen::MatrixXd d_input_pre = dh.cwiseProduct(relu_mask(c.input_pre));
    const Eigen::MatrixXd d_input_w = d_input_pre * c.x.transpose();
    const Eigen::VectorXd d_input_b = d_input_pre.rowwise().sum();

    std::size_t offset = 0;
    auto add = [&](const auto& t) {
      const double* src = t.data();
      for (Eigen::Index i = 0; i < t.size(); ++i) grad[offset + static_cast<std::size_t>(i)] += src[i];
      offset += static_cast<std::size_t>(t.size());
    };
    add(d_input_w);
    add(d_input_b);
    for (std::size_t k = 0; k < nb; ++k) {
      add(d_branch_w[k]);
      add(d_branch_b[k]);
      if (m.blocks_[k].skip.size() > 0) add(d_skip[k]);
    }
    add(d_head_w);
    add(d_head_b);
  }

  static void sgd_step(ResidualMlp& m, const std::vector<double>& grad, double lr) {
    std::size_t offset = 0;
    ResidualMlp::for_each_tensor(m, [&](auto& t) {
      double* dst = t.data();
      for (Eigen::Index i = 0; i < t.size(); ++i) dst[i] -= lr * grad[offset + static_cast<std::size_t>(i)];
      offset += static_cast<std::size_t>(t.size());
    });
  }
};

ResidualMlp ResidualMlp::build(const Genome& g, int feature_dim, int class_count, std::uint64_t seed) {
  if (feature_dim < 1) throw InvalidArgument("build: feature_dim must be >= 1");
  if (class_count < 2) throw InvalidArgument("build: class_count must be >= 2");
  if (g.blocks.empty() || g.first_width < 1) throw InvalidArgument("build: genome needs c >= 1 and r >= 1");
  ResidualMlp m;
  m.genome_ = g;
  m.feature_dim_ = feature_dim;
  m.class_count_ = class_count;
  m.seed_ = seed;
  Rng rng(seed);
  const LearnerConfig cfg = genome_to_config(g);
  m.input_ = make_dense(feature_dim, cfg.input_width, rng);
  int prev = cfg.input_width;
  for (std::size_t i = 0; i < cfg.block_widths.size(); ++i) {
    const int width = cfg.block_widths[i];
    ResBlock b;
    b.branch = make_dense(prev, width, rng);
    if (width != prev) {
      b.skip.resize(width, prev);
      init_uniform(b.skip, rng);
    }
    b.dropout = cfg.block_dropouts[i];
    m.blocks_.push_back(std::move(b));
    prev = width;
  }
  m.head_ = make_dense(prev, class_count, rng);
  return m;
}

std::size_t ResidualMlp::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor(*this, [&](const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

std::vector<double> ResidualMlp::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for_each_tensor(*this, [&](const auto& t) { out.insert(out.end(), t.data(), t.data() + t.size()); });
  return out;
}

void ResidualMlp::set_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) throw LengthMismatch("set_parameters: wrong parameter count");
  std::size_t offset = 0;
  for_each_tensor(*this, [&](auto& t) {
    std::copy_n(values.data() + offset, t.size(), t.data());
    offset += static_cast<std::size_t>(t.size());
  });
}

Eigen::MatrixXd ResidualMlp::logits(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != feature_dim_) throw LengthMismatch("logits: input dimension mismatch");
  return ModelTrainer::forward(*this, inputs, nullptr).logits;
}

double ResidualMlp::loss_and_gradient(const Eigen::MatrixXd& inputs, std::span<const int> labels, Rng& dropout_rng,
                                      std::vector<double>* grad) const {
  if (inputs.rows() != feature_dim_) throw LengthMismatch("loss: input dimension mismatch");
  if (static_cast<std::size_t>(inputs.cols()) != labels.size()) throw LengthMismatch("loss: label count mismatch");
  const auto cache = ModelTrainer::forward(*this, inputs, &dropout_rng);
  const double loss = cross_entropy(cache.logits, labels);
  if (grad != nullptr) {
    grad->assign(parameter_count(), 0.0);
    ModelTrainer::backward(*this, cache, cross_entropy_grad(cache.logits, labels, 1.0), *grad);
  }
  return loss;
}

double PredictionProfile::accuracy() const {
  if (correct.empty()) return 0.0;
  const auto hits = std::accumulate(correct.begin(), correct.end(), std::size_t{0});
  return static_cast<double>(hits) / static_cast<double>(correct.size());
}

PredictionProfile make_profile(std::vector<int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw LengthMismatch("profile: prediction/label count mismatch");
  PredictionProfile p;
  p.correct.resize(predictions.size());
  p.wrong.resize(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    p.correct[i] = predictions[i] == labels[i] ? 1 : 0;
    p.wrong[i] = static_cast<std::uint8_t>(1 - p.correct[i]);
  }
  p.predictions = std::move(predictions);
  return p;
}

std::vector<int> argmax_columns(const Eigen::MatrixXd& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.cols()));
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < scores.rows(); ++i)
      if (scores(i, j) > scores(best, j)) best = i;
    out[static_cast<std::size_t>(j)] = static_cast<int>(best);
  }
  return out;
}

namespace {

Eigen::MatrixXd columns_of(const LabeledDataset& d) { return d.features.transpose(); }

void check_input(const ResidualMlp& m, const LabeledDataset& data) {
  if (data.feature_dim() != m.feature_dim()) throw LengthMismatch("training data feature dimension mismatch");
  if (data.class_count > m.class_count()) throw LengthMismatch("training data has more classes than the model");
}

std::uint64_t shuffle_seed(const TrainConfig& cfg, const ResidualMlp& lead) {
  return derive_seed(cfg.seed ^ lead.seed(), 1);
}

Rng dropout_rng(const TrainConfig& cfg, const ResidualMlp& m) { return Rng(derive_seed(cfg.seed ^ m.seed(), 2)); }

void check_finite(double loss) {
  if (!std::isfinite(loss)) throw DivergenceError("training diverged: loss is not finite");
}

// Trains a group of models against the cross-entropy of their mean logits. A
// singleton group is plain separate training.
void train_group(std::vector<ResidualMlp*>& group, const LabeledDataset& data, const TrainConfig& cfg,
                 TrainStats* stats) {
  cfg.validate();
  if (group.empty() || cfg.epochs == 0) return;
  for (auto* m : group) check_input(*m, data);
  const Eigen::MatrixXd x = columns_of(data);
  const std::size_t n = data.size();
  const double member_scale = 1.0 / static_cast<double>(group.size());

  Rng shuffle(shuffle_seed(cfg, *group.front()));
  std::vector<Rng> drop;
  drop.reserve(group.size());
  for (auto* m : group) drop.push_back(dropout_rng(cfg, *m));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::vector<double>> grads(group.size());
  std::vector<ModelTrainer::Cache> caches(group.size());
  std::vector<int> batch_labels;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Eigen::MatrixXd xb = gather_columns(x, idx);
      batch_labels.clear();
      for (auto i : idx) batch_labels.push_back(data.labels[i]);

      Eigen::MatrixXd mean_logits;
      for (std::size_t k = 0; k < group.size(); ++k) {
        caches[k] = ModelTrainer::forward(*group[k], xb, &drop[k]);
        if (k == 0)
          mean_logits = caches[k].logits;
        else
          mean_logits += caches[k].logits;
      }
      if (group.size() > 1) mean_logits *= member_scale;

      const double loss = cross_entropy(mean_logits, batch_labels);
      check_finite(loss);
      epoch_loss += loss * static_cast<double>(idx.size());
      const Eigen::MatrixXd upstream = cross_entropy_grad(mean_logits, batch_labels, group.size() > 1 ? member_scale : 1.0);
      for (std::size_t k = 0; k < group.size(); ++k) {
        grads[k].assign(group[k]->parameter_count(), 0.0);
        ModelTrainer::backward(*group[k], caches[k], upstream, grads[k]);
        ModelTrainer::sgd_step(*group[k], grads[k], cfg.learning_rate);
      }
    }
    if (stats != nullptr) stats->epoch_loss.push_back(epoch_loss / static_cast<double>(n));
  }
}

}  // namespace

ResidualMlp train_separate(ResidualMlp m, const LabeledDataset& data, const TrainConfig& cfg, TrainStats* stats) {
  std::vector<ResidualMlp*> group{&m};
  train_group(group, data, cfg, stats);
  return m;
}

std::vector<ResidualMlp> train_joint(std::vector<ResidualMlp> models, const LabeledDataset& data,
                                     const TrainConfig& cfg) {
  if (models.empty()) throw InvalidArgument("train_joint: empty model list");
  const int f = models.front().feature_dim();
  const int c = models.front().class_count();
  for (const auto& m : models)
    if (m.feature_dim() != f || m.class_count() != c) throw LengthMismatch("train_joint: models disagree on F or C");

  std::vector<ResidualMlp*> joint;
  std::vector<std::size_t> separate;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].genome().joint)
      joint.push_back(&models[i]);
    else
      separate.push_back(i);
  }
  train_group(joint, data, cfg, nullptr);
  parallel_for(separate.size(), [&](std::size_t k) {
    auto& m = models[separate[k]];
    try {
      m = train_separate(std::move(m), data, cfg);
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.what(), separate[k]);
    }
  });
  return models;
}

PredictionProfile evaluate(const ResidualMlp& m, const LabeledDataset& data) {
  if (data.feature_dim() != m.feature_dim()) throw LengthMismatch("evaluate: feature dimension mismatch");
  return make_profile(argmax_columns(m.logits(columns_of(data))), data.labels);
}

Eigen::MatrixXd class_probabilities(const ResidualMlp& m, const LabeledDataset& data) {
  if (data.feature_dim() != m.feature_dim()) throw LengthMismatch("probabilities: feature dimension mismatch");
  return softmax(m.logits(columns_of(data)));
}

std::uint64_t member_seed(std::uint64_t seed, const Genome& g) { return derive_seed(seed, genome_key(g)); }

std::vector<ResidualMlp> train_models(std::span<const Genome> genomes, const LabeledDataset& train,
                                      const TrainConfig& cfg, JointPolicy policy) {
  if (genomes.empty()) throw InvalidArgument("train_models: empty genome list");
  cfg.validate();
  std::vector<ResidualMlp> models;
  models.reserve(genomes.size());
  for (const auto& g : genomes)
    models.push_back(ResidualMlp::build(g, train.feature_dim(), std::max(2, train.class_count), member_seed(cfg.seed, g)));
  if (policy == JointPolicy::honor) return train_joint(std::move(models), train, cfg);
  parallel_for(models.size(), [&](std::size_t i) {
    try {
      models[i] = train_separate(std::move(models[i]), train, cfg);
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.what(), i);
    }
  });
  return models;
}

std::vector<PredictionProfile> train_population(std::span<const Genome> genomes, const DataSplit& data,
                                                const TrainConfig& cfg, JointPolicy policy) {
  const auto models = train_models(genomes, data.train, cfg, policy);
  std::vector<PredictionProfile> out(models.size());
  parallel_for(models.size(), [&](std::size_t i) { out[i] = evaluate(models[i], data.val); });
  return out;
}

namespace {

constexpr char kModelMagic[8] = {'D', 'V', 'M', 'L', 'P', '\0', '\0', '\0'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CorruptFile("model file truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void save_model(const ResidualMlp& m, const std::string& path) {
  const nlohmann::json header = {{"format_version", kModelVersion},
                                 {"genome", to_json(m.genome())},
                                 {"features", m.feature_dim()},
                                 {"classes", m.class_count()},
                                 {"seed", m.seed()}};
  const std::string header_text = header.dump();
  const auto params = m.parameters();
  std::string out(kModelMagic, sizeof kModelMagic);
  put(out, kModelVersion);
  put(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  put(out, static_cast<std::uint64_t>(params.size()));
  for (double p : params) put(out, p);
  write_file_atomic(path, out);
}

ResidualMlp load_model(const std::string& path) {
  const std::string in = read_file(path);
  if (in.size() < sizeof kModelMagic || std::memcmp(in.data(), kModelMagic, sizeof kModelMagic) != 0)
    throw CorruptFile("not a model file: " + path);
  std::size_t pos = sizeof kModelMagic;
  const auto version = take<std::uint32_t>(in, pos);
  if (version != kModelVersion) throw VersionMismatch("model file version " + std::to_string(version));
  const auto header_len = take<std::uint32_t>(in, pos);
  if (pos + header_len > in.size()) throw CorruptFile("model header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(std::string("model header: ") + e.what());
  }
  pos += header_len;
  ResidualMlp m = ResidualMlp::build(genome_from_json(header.at("genome")), header.at("features").get<int>(),
                                     header.at("classes").get<int>(), header.at("seed").get<std::uint64_t>());
  const auto count = take<std::uint64_t>(in, pos);
  if (count != m.parameter_count()) throw CorruptFile("model parameter count does not match header");
  std::vector<double> params(count);
  for (auto& p : params) p = take<double>(in, pos);
  if (pos != in.size()) throw CorruptFile("trailing bytes in model file");
  m.set_parameters(params);
  return m;
}

}  // namespace divens
