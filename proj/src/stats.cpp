#include "divens/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "divens/common.hpp"

namespace divens {

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double mean(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("mean of empty sample");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatch("pearson: samples differ in length");
  if (x.size() < 2) return {0.0, true};
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return {0.0, true};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

Correlation spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

namespace {

// Two-sided exact p for U of samples (n1, n2) without ties.
double exact_mann_whitney_p(double u, std::size_t n1, std::size_t n2) {
  const std::size_t max_u = n1 * n2;
  // f(m, n, k): arrangements of m from sample 1 and n from sample 2 with U = k.
  std::vector<std::vector<std::vector<double>>> f(n1 + 1, std::vector<std::vector<double>>(n2 + 1));
  for (std::size_t m = 0; m <= n1; ++m) {
    for (std::size_t n = 0; n <= n2; ++n) {
      auto& cell = f[m][n];
      cell.assign(m * n + 1, 0.0);
      if (m == 0 || n == 0) {
        cell[0] = 1.0;
        continue;
      }
      // Largest element belongs to sample 1 (adds n to U) or sample 2.
      const auto& a = f[m - 1][n];
      const auto& b = f[m][n - 1];
      for (std::size_t k = 0; k < a.size(); ++k) cell[k + n] += a[k];
      for (std::size_t k = 0; k < b.size(); ++k) cell[k] += b[k];
    }
  }
  const auto& dist = f[n1][n2];
  const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
  const double mean_u = static_cast<double>(max_u) / 2.0;
  const double dev = std::abs(u - mean_u);
  double tail = 0.0;
  for (std::size_t k = 0; k <= max_u; ++k)
    if (std::abs(static_cast<double>(k) - mean_u) >= dev - 1e-9) tail += dist[k];
  return std::min(1.0, tail / total);
}

}  // namespace

MannWhitneyResult mann_whitney(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("mann_whitney: empty sample");
  const std::size_t n1 = a.size(), n2 = b.size();
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = average_ranks(pooled);
  const double r1 = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(n1), 0.0);
  MannWhitneyResult res;
  res.u = r1 - static_cast<double>(n1 * (n1 + 1)) / 2.0;

  std::map<double, std::size_t> groups;
  for (double v : pooled) ++groups[v];
  double tie_term = 0.0;
  for (const auto& [v, t] : groups) {
    const double td = static_cast<double>(t);
    tie_term += td * td * td - td;
  }
  const bool ties = tie_term > 0.0;

  if (!ties && n1 <= 30 && n2 <= 30) {
    res.exact = true;
    res.p_value = exact_mann_whitney_p(res.u, n1, n2);
    return res;
  }
  const double nn1 = static_cast<double>(n1), nn2 = static_cast<double>(n2), n = nn1 + nn2;
  const double mu = nn1 * nn2 / 2.0;
  const double var = nn1 * nn2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (var <= 0.0) {
    res.p_value = 1.0;
    return res;
  }
  const double diff = std::abs(res.u - mu);
  res.z = std::max(0.0, diff - 0.5) / std::sqrt(var);
  res.p_value = std::min(1.0, std::erfc(res.z / std::sqrt(2.0)));
  if (res.u < mu) res.z = -res.z;
  return res;
}

}  // namespace divens
