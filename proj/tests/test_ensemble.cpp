#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "divens/ensemble.hpp"
#include "divens/stats.hpp"

using namespace divens;

namespace {

// Column-stochastic C x N matrix putting mass `p` on `hot[n]` and the rest evenly elsewhere.
Eigen::MatrixXd peaked(const std::vector<int>& hot, int classes, double p) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(classes, static_cast<Eigen::Index>(hot.size()), (1.0 - p) / (classes - 1));
  for (std::size_t n = 0; n < hot.size(); ++n) m(hot[n], static_cast<Eigen::Index>(n)) = p;
  return m;
}

double accuracy_of(const Eigen::MatrixXd& scores, const std::vector<int>& labels) {
  int ok = 0;
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    Eigen::Index k;
    scores.col(j).maxCoeff(&k);
    ok += k == labels[static_cast<std::size_t>(j)] ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(labels.size());
}

// Mean cross-entropy of softmax(scores), written out term by term.
double cross_entropy(const Eigen::MatrixXd& scores, const std::vector<int>& labels) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    double z = 0.0;
    for (Eigen::Index c = 0; c < scores.rows(); ++c) z += std::exp(scores(c, j));
    total += std::log(z) - scores(labels[static_cast<std::size_t>(j)], j);
  }
  return total / static_cast<double>(labels.size());
}

// A and B are each right on one half of the rows and lean wrong on the other.
struct Complementary {
  std::vector<int> labels;
  std::vector<Eigen::MatrixXd> probs;
};

Complementary complementary(int classes, int n) {
  Complementary c;
  std::vector<int> a_hot, b_hot;
  for (int i = 0; i < n; ++i) {
    const int y = i % classes;
    c.labels.push_back(y);
    const bool first_half = i < n / 2;
    a_hot.push_back(first_half ? y : (y + 1) % classes);
    b_hot.push_back(first_half ? (y + 1) % classes : y);
  }
  Eigen::MatrixXd a = peaked(a_hot, classes, 0.9), b = peaked(b_hot, classes, 0.9);
  // On their wrong halves the members are unsure: 0.55 wrong, 0.45 right.
  for (int i = 0; i < n; ++i) {
    const int y = c.labels[static_cast<std::size_t>(i)];
    auto& m = i < n / 2 ? b : a;
    m.col(i).setZero();
    m(y, i) = 0.45;
    m((y + 1) % classes, i) = 0.55;
  }
  c.probs = {a, b};
  return c;
}

}  // namespace

TEST_CASE("uniform stacking averages member probabilities") {
  const std::vector<int> labels = {0, 1, 2, 1};
  const std::vector<Eigen::MatrixXd> probs = {peaked({0, 1, 2, 0}, 3, 0.7), peaked({1, 1, 0, 2}, 3, 0.6)};
  const auto s = StackingModel::uniform(2, 3);
  CHECK(s.weight().rows() == 3);
  CHECK(s.weight().cols() == 6);
  const Eigen::MatrixXd expected = 0.5 * (probs[0] + probs[1]);
  CHECK((s.scores(probs) - expected).cwiseAbs().maxCoeff() < 1e-15);

  const auto zero = fit_stacking(probs, labels, 3, {0, 0.5});
  CHECK(zero.weight() == s.weight());
  CHECK(zero.bias() == s.bias());
  CHECK(zero.iterations() == 0);
}

TEST_CASE("a single perfect member is reproduced") {
  const std::vector<int> labels = {0, 2, 1, 1, 0, 2};
  const std::vector<Eigen::MatrixXd> probs = {peaked(labels, 3, 1.0)};
  const auto s = fit_stacking(probs, labels, 3, {200, 0.5});
  CHECK(predict_stacked(s, probs, labels).accuracy() == 1.0);
  CHECK(cross_entropy(s.scores(probs), labels) < cross_entropy(StackingModel::uniform(1, 3).scores(probs), labels));
}

TEST_CASE("complementary members beat the best single member") {
  const auto c = complementary(3, 60);
  for (const auto& p : c.probs) CHECK(accuracy_of(p, c.labels) == doctest::Approx(0.5));
  const auto s = fit_stacking(c.probs, c.labels, 3, {300, 0.5});
  CHECK(predict_stacked(s, c.probs, c.labels).accuracy() == 1.0);
  const double before = cross_entropy(StackingModel::uniform(2, 3).scores(c.probs), c.labels);
  CHECK(cross_entropy(s.scores(c.probs), c.labels) < before);
}

TEST_CASE("stacking is equivariant to member order") {
  const auto c = complementary(4, 40);
  std::vector<Eigen::MatrixXd> swapped = {c.probs[1], c.probs[0]};
  const auto s = fit_stacking(c.probs, c.labels, 4, {100, 0.3});
  const auto t = fit_stacking(swapped, c.labels, 4, {100, 0.3});
  CHECK(predict_stacked(s, c.probs, c.labels).predictions == predict_stacked(t, swapped, c.labels).predictions);
  CHECK((s.weight().leftCols(4) - t.weight().rightCols(4)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((s.bias() - t.bias()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("constant members do not break the fit") {
  const std::vector<int> labels = {0, 1, 1, 1, 2};
  const std::vector<Eigen::MatrixXd> probs(3, Eigen::MatrixXd::Constant(3, 5, 1.0 / 3.0));
  const auto s = fit_stacking(probs, labels, 3, {300, 0.5});
  CHECK(s.weight().allFinite());
  const auto p = predict_stacked(s, probs, labels);
  // Only the bias can learn: every row goes to the majority class.
  CHECK(p.predictions == std::vector<int>(5, 1));
}

TEST_CASE("stacking input validation and serialization") {
  const auto c = complementary(3, 12);
  CHECK_THROWS_AS(fit_stacking(std::span<const Eigen::MatrixXd>{}, c.labels, 3, {}), InvalidArgument);
  CHECK_THROWS_AS(fit_stacking(c.probs, std::vector<int>{}, 3, {}), InvalidArgument);
  CHECK_THROWS_AS(fit_stacking(c.probs, std::vector<int>(5, 0), 3, {}), LengthMismatch);
  CHECK_THROWS_AS(fit_stacking(c.probs, c.labels, 3, {-1, 0.5}), InvalidArgument);
  std::vector<Eigen::MatrixXd> ragged = {c.probs[0], c.probs[1].leftCols(5)};
  CHECK_THROWS_AS(fit_stacking(ragged, c.labels, 3, {}), LengthMismatch);
  CHECK_THROWS_AS(StackingModel::uniform(0, 3), InvalidArgument);

  const auto s = fit_stacking(c.probs, c.labels, 3, {50, 0.5});
  const auto back = StackingModel::from_json(nlohmann::json::parse(s.to_json().dump()));
  CHECK(back.weight() == s.weight());
  CHECK(back.bias() == s.bias());
  CHECK(back.iterations() == 50);
  auto bad = s.to_json();
  bad["bias"] = std::vector<double>{0.0};
  CHECK_THROWS_AS(StackingModel::from_json(bad), CorruptFile);
}

TEST_CASE("trained ensembles are at least as good as the median member") {
  const std::vector<Genome> genomes = {
      {false, 6, {{16, 0.1}, {24, 0.2}}},
      {false, 10, {{32, 0.3}, {16, 0.1}, {20, 0.2}}},
      {false, 4, {{20, 0.4}, {20, 0.1}}},
  };
  TrainConfig train;
  train.epochs = 8;
  train.learning_rate = 0.01;
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto data = split(synth_blobs(4, 60, 6, 2.5, 40 + seed), {0.6, 0.2, 0.2}, seed);
    standardize(data);
    train.seed = seed;
    const auto members = train_models(genomes, data.train, train, JointPolicy::ignore);
    const auto stack = fit_stacking(members, data.val, {});
    const double ensemble = predict_ensemble(members, stack, data.test).accuracy();
    std::vector<double> singles;
    for (const auto& m : members) singles.push_back(evaluate(m, data.test).accuracy());
    wins += ensemble >= median(singles) ? 1 : 0;
  }
  CHECK(wins >= 8);
}
