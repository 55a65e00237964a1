#include "divens/diversity.hpp"

#include <algorithm>
#include <cmath>

namespace divens {

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::prop1: return "prop1";
    case Metric::prop2: return "prop2";
    case Metric::prop_harm: return "prop-harm";
    case Metric::dis: return "dis";
    case Metric::cos_dist: return "cos-dist";
    case Metric::arch_dist: return "arch-dist";
  }
  return "?";
}

std::string_view metric_column(Metric m) {
  switch (m) {
    case Metric::prop1: return "prop1";
    case Metric::prop2: return "prop2";
    case Metric::prop_harm: return "prop_harm";
    case Metric::dis: return "dis";
    case Metric::cos_dist: return "cos_dist";
    case Metric::arch_dist: return "arch_dist";
  }
  return "?";
}

std::optional<Metric> parse_metric(std::string_view name) {
  for (Metric m : kAllMetrics)
    if (name == metric_name(m) || name == metric_column(m)) return m;
  return std::nullopt;
}

PairCounts pair_counts(std::span<const std::uint8_t> correct_i, std::span<const std::uint8_t> correct_j) {
  if (correct_i.size() != correct_j.size()) throw LengthMismatch("pair_counts: vectors differ in length");
  if (correct_i.empty()) throw LengthMismatch("pair_counts: empty vectors");
  PairCounts c;
  for (std::size_t n = 0; n < correct_i.size(); ++n) {
    const bool a = correct_i[n] != 0;
    const bool b = correct_j[n] != 0;
    if (a && b)
      ++c.n11;
    else if (!a && !b)
      ++c.n00;
    else if (b)
      ++c.n01;
    else
      ++c.n10;
  }
  return c;
}

namespace {

double ratio_or_zero(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double metric_prop1(const PairCounts& c) { return ratio_or_zero(c.n01 + c.n10, c.n11 + c.n01 + c.n10); }

double metric_prop2(const PairCounts& c) { return ratio_or_zero(c.n01 + c.n10, c.n00 + c.n01 + c.n10); }

double metric_prop_harm(const PairCounts& c) {
  // 2 p1 p2 / (p1 + p2) reduces to 2 (n01 + n10) / (A + B) for the two denominators.
  const auto d = c.n01 + c.n10;
  if (d == 0) return 0.0;
  return ratio_or_zero(2 * d, (c.n11 + d) + (c.n00 + d));
}

double metric_dis(const PairCounts& c) { return ratio_or_zero(c.n01 + c.n10, c.total()); }

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw LengthMismatch("cosine_distance: vectors differ in length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const bool zero_a = na == 0.0;
  const bool zero_b = nb == 0.0;
  if (zero_a && zero_b) return 0.0;
  if (zero_a || zero_b) return 1.0;
  return std::clamp(1.0 - dot / std::sqrt(na * nb), 0.0, 1.0);
}

double metric_cos_dist(std::span<const std::uint8_t> wrong_i, std::span<const std::uint8_t> wrong_j) {
  if (wrong_i.size() != wrong_j.size()) throw LengthMismatch("cos_dist: vectors differ in length");
  std::size_t dot = 0, ni = 0, nj = 0;
  for (std::size_t n = 0; n < wrong_i.size(); ++n) {
    const std::size_t a = wrong_i[n] != 0 ? 1 : 0;
    const std::size_t b = wrong_j[n] != 0 ? 1 : 0;
    dot += a & b;
    ni += a;
    nj += b;
  }
  if (ni == 0 && nj == 0) return 0.0;
  if (ni == 0 || nj == 0) return 1.0;
  const double sim = static_cast<double>(dot) / std::sqrt(static_cast<double>(ni) * static_cast<double>(nj));
  return std::clamp(1.0 - sim, 0.0, 1.0);
}

double metric_arch_dist(const ArchRep& a_i, const ArchRep& a_j) {
  if (a_i.values.size() != a_j.values.size()) throw LengthMismatch("arch_dist: representations differ in length");
  return cosine_distance(a_i.values, a_j.values);
}

DistanceVector exact_distance(const PredictionProfile& profile_i, const PredictionProfile& profile_j,
                              const ArchRep& arch_i, const ArchRep& arch_j) {
  const PairCounts c = pair_counts(profile_i.correct, profile_j.correct);
  DistanceVector d;
  d[Metric::prop1] = metric_prop1(c);
  d[Metric::prop2] = metric_prop2(c);
  d[Metric::prop_harm] = metric_prop_harm(c);
  d[Metric::dis] = metric_dis(c);
  d[Metric::cos_dist] = metric_cos_dist(profile_i.wrong, profile_j.wrong);
  d[Metric::arch_dist] = metric_arch_dist(arch_i, arch_j);
  return d;
}

}  // namespace divens
