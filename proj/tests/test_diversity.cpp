#include <doctest.h>

#include <cmath>
#include <random>

#include "divens/diversity.hpp"

using namespace divens;

namespace {

std::vector<std::uint8_t> bits(std::initializer_list<int> v) { return {v.begin(), v.end()}; }

PredictionProfile random_profile(Rng& rng, std::size_t n, double p_correct) {
  std::bernoulli_distribution hit(p_correct);
  std::vector<int> pred(n), lab(n, 0);
  for (auto& y : pred) y = hit(rng) ? 0 : 1;
  return make_profile(pred, lab);
}

}  // namespace

TEST_CASE("pair counts") {
  CHECK(pair_counts(bits({1, 1, 0, 0}), bits({1, 0, 1, 0})) == PairCounts{1, 1, 1, 1});
  const auto same = pair_counts(bits({1, 0, 1}), bits({1, 0, 1}));
  CHECK(same.n01 == 0);
  CHECK(same.n10 == 0);
  const auto comp = pair_counts(bits({1, 0, 1}), bits({0, 1, 0}));
  CHECK(comp.n11 == 0);
  CHECK(comp.n00 == 0);
  CHECK(pair_counts(bits({1, 0, 0}), bits({0, 0, 0})).n10 == 1);
  CHECK_THROWS_AS(pair_counts(bits({1, 0}), bits({1})), LengthMismatch);
  CHECK_THROWS_AS(pair_counts(bits({}), bits({})), LengthMismatch);
}

TEST_CASE("worked metric values") {
  const PairCounts c{5, 2, 2, 1};
  CHECK(metric_prop1(c) == 0.375);
  CHECK(metric_prop2(c) == 0.6);
  CHECK(metric_prop_harm(c) == doctest::Approx(0.461538461538).epsilon(1e-10));
  CHECK(metric_dis(c) == 0.3);
  CHECK(metric_cos_dist(bits({1, 1, 0, 0}), bits({1, 0, 1, 0})) == doctest::Approx(0.5).epsilon(1e-15));
  const ArchRep a{{0.5, 0, 1}}, b{{1, 0, 0}};
  CHECK(metric_arch_dist(a, b) == doctest::Approx(1.0 - 0.5 / std::sqrt(1.25)).epsilon(1e-15));
}

TEST_CASE("degenerate denominators") {
  CHECK(metric_prop1(PairCounts{0, 7, 0, 0}) == 0.0);
  CHECK(metric_prop2(PairCounts{7, 0, 0, 0}) == 0.0);
  CHECK(metric_prop2(PairCounts{0, 0, 3, 0}) == 1.0);
  CHECK(metric_prop_harm(PairCounts{4, 0, 0, 0}) == 0.0);
  CHECK(metric_prop_harm(PairCounts{0, 0, 2, 0}) == 1.0);
  CHECK(metric_dis(PairCounts{0, 0, 2, 2}) == 1.0);
  CHECK(metric_cos_dist(bits({0, 0, 0}), bits({0, 0, 0})) == 0.0);
  CHECK(metric_cos_dist(bits({0, 0, 0}), bits({0, 1, 0})) == 1.0);
  CHECK(metric_cos_dist(bits({1, 1, 0}), bits({1, 1, 0})) == 0.0);
  CHECK(metric_arch_dist(ArchRep{{0, 0}}, ArchRep{{0, 0}}) == 0.0);
  CHECK(metric_arch_dist(ArchRep{{1, 0}}, ArchRep{{0, 1}}) == 1.0);
  CHECK(metric_arch_dist(ArchRep{{0, 0}}, ArchRep{{0.3, 0}}) == 1.0);
  CHECK_THROWS_AS(metric_arch_dist(ArchRep{{1, 0}}, ArchRep{{1}}), LengthMismatch);
}

TEST_CASE("harmonic mean of equal values") {
  // prop1 = prop2 exactly when n11 = n00.
  const PairCounts c{3, 3, 2, 1};
  CHECK(metric_prop_harm(c) == doctest::Approx(metric_prop1(c)).epsilon(1e-15));
}

TEST_CASE("exact distance properties") {
  Rng rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 40;
    const auto pi = random_profile(rng, n, u(rng));
    const auto pj = random_profile(rng, n, u(rng));
    ArchRep ai, aj;
    for (int k = 0; k < 13; ++k) {
      ai.values.push_back(rng() % 3 == 0 ? 0.0 : u(rng));
      aj.values.push_back(rng() % 3 == 0 ? 0.0 : u(rng));
    }
    const auto dij = exact_distance(pi, pj, ai, aj);
    const auto dji = exact_distance(pj, pi, aj, ai);
    CHECK(dij == dji);
    for (double v : dij.values) CHECK((std::isfinite(v) && v >= 0.0 && v <= 1.0));
    const auto c = pair_counts(pi.correct, pj.correct);
    CHECK(dij[Metric::dis] * static_cast<double>(n) == doctest::Approx(double(c.n01 + c.n10)).epsilon(1e-12));
    const auto self = exact_distance(pi, pi, ai, ai);
    for (double v : self.values) CHECK(v == 0.0);
  }
}

TEST_CASE("metric names") {
  for (auto m : kAllMetrics) {
    CHECK(parse_metric(metric_name(m)) == m);
    CHECK(parse_metric(metric_column(m)) == m);
  }
  CHECK(metric_name(Metric::prop_harm) == "prop-harm");
  CHECK(metric_column(Metric::cos_dist) == "cos_dist");
  CHECK_FALSE(parse_metric("kappa").has_value());
}
