#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

#include "divens/search.hpp"

namespace divens::testing {

// Distances from the normalized representation alone: scaled Euclidean
// distance, the same value for every metric. Can be told to fail on a
// given describe() call.
class GeometricOracle final : public BehaviourOracle {
 public:
  GeometricOracle(SearchSpaceBounds bounds, double scale = 1.0) : bounds_(bounds), scale_(scale) {}

  std::vector<Behaviour> describe(std::span<const Genome> genomes) override {
    if (++calls_ == fail_on_) throw DivergenceError("scripted failure");
    std::vector<Behaviour> out;
    for (const auto& g : genomes) out.push_back({normalize(g, bounds_), std::nullopt});
    return out;
  }

  DistanceVector distance(const Behaviour& a, const Behaviour& b) const override {
    double s = 0.0;
    for (std::size_t k = 0; k < a.rep.values.size(); ++k) {
      const double d = a.rep.values[k] - b.rep.values[k];
      s += d * d;
    }
    DistanceVector v;
    v.values.fill(scale_ * std::sqrt(s / static_cast<double>(a.rep.values.size())));
    return v;
  }

  void fail_on(int call) { fail_on_ = call; }

 private:
  SearchSpaceBounds bounds_;
  double scale_;
  int calls_ = 0;
  int fail_on_ = -1;
};

// Wraps another oracle and remembers every distance it returned, keyed by
// the pair of representations.
class RecordingOracle final : public BehaviourOracle {
 public:
  explicit RecordingOracle(BehaviourOracle& inner) : inner_(inner) {}

  std::vector<Behaviour> describe(std::span<const Genome> genomes) override { return inner_.describe(genomes); }

  DistanceVector distance(const Behaviour& a, const Behaviour& b) const override {
    const auto d = inner_.distance(a, b);
    std::lock_guard lock(mutex_);
    auto [it, inserted] = table_.emplace(std::make_pair(a.rep.values, b.rep.values), d);
    if (!inserted && it->second != d) collisions_ += 1;
    return d;
  }

  using Table = std::map<std::pair<std::vector<double>, std::vector<double>>, DistanceVector>;
  const Table& table() const { return table_; }
  std::size_t collisions() const { return collisions_; }

 private:
  BehaviourOracle& inner_;
  mutable std::mutex mutex_;
  mutable Table table_;
  mutable std::size_t collisions_ = 0;
};

// A "perfect surrogate": returns recorded exact distances, throws on a miss.
class LookupEstimator final : public DistanceEstimator {
 public:
  explicit LookupEstimator(RecordingOracle::Table table) : table_(std::move(table)) {}

  DistanceVector predict(const NormalizedRep& n_i, const NormalizedRep& n_j) const override {
    const auto it = table_.find({n_i.values, n_j.values});
    if (it == table_.end()) throw InvalidArgument("lookup estimator: pair was never recorded");
    return it->second;
  }

 private:
  RecordingOracle::Table table_;
};

// Bit-level equality of two search trajectories, ignoring wall clocks.
inline bool same_trajectory(const SearchOutcome& a, const SearchOutcome& b) {
  const auto genomes = [](const std::vector<ArchiveEntry>& v) {
    std::vector<Genome> out;
    for (const auto& e : v) out.push_back(e.genome);
    return out;
  };
  if (a.state.population != b.state.population) return false;
  if (genomes(a.state.archive) != genomes(b.state.archive)) return false;
  if (genomes(a.state.elite_archive) != genomes(b.state.elite_archive)) return false;
  if (a.state.log.size() != b.state.log.size()) return false;
  for (std::size_t t = 0; t < a.state.log.size(); ++t) {
    const auto& x = a.state.log[t];
    const auto& y = b.state.log[t];
    if (x.novelty != y.novelty || x.elite_scores != y.elite_scores || x.archived != y.archived ||
        x.elite_index != y.elite_index || x.parents != y.parents || x.mutations != y.mutations)
      return false;
  }
  return a.selection.indices == b.selection.indices && a.selection.scores == b.selection.scores &&
         a.ensemble == b.ensemble;
}

// Top-k by summed distance over every k-subset: the subset whose descending
// score list is lexicographically largest, earliest indices on ties.
// Returned in ascending index order.
inline std::vector<std::size_t> brute_force_top_k(const std::vector<std::vector<double>>& d, std::size_t k) {
  const std::size_t n = d.size();
  std::vector<double> total(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) total[i] += d[i][j];
  std::vector<std::size_t> best;
  std::vector<double> best_sorted;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
    std::vector<std::size_t> pick;
    std::vector<double> scores;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) {
        pick.push_back(i);
        scores.push_back(total[i]);
      }
    std::sort(scores.rbegin(), scores.rend());
    if (best.empty() || scores > best_sorted || (scores == best_sorted && pick < best)) {
      best = pick;
      best_sorted = scores;
    }
  }
  return best;
}

}  // namespace divens::testing
