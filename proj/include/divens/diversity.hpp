#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "divens/genome.hpp"
#include "divens/learner.hpp"

namespace divens {

/// Joint correctness counts of two models: both correct (n11), both wrong
/// (n00), only the second correct (n01), only the first correct (n10).
struct PairCounts {
  std::size_t n11 = 0;
  std::size_t n00 = 0;
  std::size_t n01 = 0;
  std::size_t n10 = 0;

  std::size_t total() const { return n11 + n00 + n01 + n10; }
  bool operator==(const PairCounts&) const = default;
};

enum class Metric { prop1 = 0, prop2, prop_harm, dis, cos_dist, arch_dist };

inline constexpr std::size_t kMetricCount = 6;
inline constexpr std::array<Metric, kMetricCount> kAllMetrics = {Metric::prop1, Metric::prop2,    Metric::prop_harm,
                                                                 Metric::dis,   Metric::cos_dist, Metric::arch_dist};

/// CLI spelling: prop1, prop2, prop-harm, dis, cos-dist, arch-dist.
std::string_view metric_name(Metric m);
/// Column spelling used in distance files: prop1 ... cos_dist, arch_dist.
std::string_view metric_column(Metric m);
std::optional<Metric> parse_metric(std::string_view name);

/// Six distances in canonical order (prop1, prop2, prop_harm, dis, cos_dist, arch_dist).
struct DistanceVector {
  std::array<double, kMetricCount> values{};

  double operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
  double& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
  bool operator==(const DistanceVector&) const = default;
};

PairCounts pair_counts(std::span<const std::uint8_t> correct_i, std::span<const std::uint8_t> correct_j);

double metric_prop1(const PairCounts& c);
double metric_prop2(const PairCounts& c);
double metric_prop_harm(const PairCounts& c);
double metric_dis(const PairCounts& c);

/// 1 - cosine similarity of two non-negative vectors. Two all-zero vectors are
/// at distance 0; exactly one all-zero vector gives distance 1.
double cosine_distance(std::span<const double> a, std::span<const double> b);

double metric_cos_dist(std::span<const std::uint8_t> wrong_i, std::span<const std::uint8_t> wrong_j);
double metric_arch_dist(const ArchRep& a_i, const ArchRep& a_j);

DistanceVector exact_distance(const PredictionProfile& profile_i, const PredictionProfile& profile_j,
                              const ArchRep& arch_i, const ArchRep& arch_j);

}  // namespace divens
