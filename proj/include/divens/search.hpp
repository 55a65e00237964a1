#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "divens/dataset.hpp"
#include "divens/diversity.hpp"
#include "divens/ensemble.hpp"
#include "divens/genome.hpp"
#include "divens/learner.hpp"
#include "divens/surrogate.hpp"

namespace divens {

enum class SearchMode { surrogate, exact };

const char* to_string(SearchMode mode);
std::optional<SearchMode> parse_mode(std::string_view name);

struct NsConfig {
  int iterations = 5;
  int population_size = 12;
  int ensemble_size = 3;
  Metric metric = Metric::cos_dist;
  int k_neighbours = 3;
  int archive_sample = 2;
  int tournament_size = 4;
  SearchMode mode = SearchMode::surrogate;
  std::uint64_t seed = 0;

  void validate() const;
};

/// What the distance oracle knows about one individual: its normalized
/// representation and, in exact mode, its validation profile.
struct Behaviour {
  NormalizedRep rep;
  std::optional<PredictionProfile> profile;
};

class BehaviourOracle {
 public:
  virtual ~BehaviourOracle() = default;
  /// Characterizes a batch of genomes. Exact oracles train here.
  virtual std::vector<Behaviour> describe(std::span<const Genome> genomes) = 0;
  virtual DistanceVector distance(const Behaviour& a, const Behaviour& b) const = 0;
};

/// Estimated distances from a pretrained estimator; never trains a learner.
class SurrogateOracle final : public BehaviourOracle {
 public:
  SurrogateOracle(const DistanceEstimator& estimator, SearchSpaceBounds bounds);
  std::vector<Behaviour> describe(std::span<const Genome> genomes) override;
  DistanceVector distance(const Behaviour& a, const Behaviour& b) const override;

 private:
  const DistanceEstimator& estimator_;
  SearchSpaceBounds bounds_;
  std::map<std::uint64_t, NormalizedRep> memo_;
};

/// Exact distances: trains every described genome separately (seeded from the
/// genome record) and profiles it on the validation split.
class ExactOracle final : public BehaviourOracle {
 public:
  ExactOracle(const DataSplit& data, TrainConfig train, SearchSpaceBounds bounds);
  std::vector<Behaviour> describe(std::span<const Genome> genomes) override;
  DistanceVector distance(const Behaviour& a, const Behaviour& b) const override;
  std::size_t trained_models() const { return trained_; }

 private:
  const DataSplit& data_;
  TrainConfig train_;
  SearchSpaceBounds bounds_;
  std::size_t trained_ = 0;
};

struct ArchiveEntry {
  Genome genome;
  Behaviour behaviour;
};

struct IterationLog {
  int iteration = 0;
  std::vector<double> novelty;
  std::vector<double> elite_scores;
  std::vector<std::size_t> archived;  // population indices sampled into the archive
  std::size_t elite_index = 0;
  std::vector<std::size_t> parents;  // tournament winners, one per child
  std::vector<MutationKind> mutations;
  double mean_novelty = 0.0;
  double max_novelty = 0.0;
  double elite_score = 0.0;
  double wall_clock_distance = 0.0;
  double wall_clock_selection = 0.0;
};

struct SearchState {
  std::vector<Genome> population;
  std::vector<ArchiveEntry> archive;
  std::vector<ArchiveEntry> elite_archive;
  int iteration = 0;
  Rng rng;
  std::vector<IterationLog> log;
};

SearchState initial_state(const NsConfig& cfg, const SearchSpaceBounds& bounds);

/// Mean of the k smallest distances; the mean over all when fewer than k.
double novelty_score(std::span<const double> peer_distances, int k);

/// Sum of distances to every elite member; 0 for an empty elite archive.
double elite_score(std::span<const double> elite_distances);

/// Winner of a tournament among `entrants`: highest score, lowest index on ties.
std::size_t tournament_winner(std::span<const std::size_t> entrants, std::span<const double> scores);

/// One novelty-search iteration. The input state is left untouched, so an
/// oracle failure leaves the caller's state as it was.
SearchState step(const SearchState& state, const NsConfig& cfg, const SearchSpaceBounds& bounds,
                 BehaviourOracle& oracle);

/// Indices of the k members with the largest summed distance to all other
/// members (ties: earlier index first). `distances` is a symmetric matrix.
std::vector<std::size_t> top_by_total_distance(const std::vector<std::vector<double>>& distances, std::size_t k);

struct EnsembleSelection {
  std::vector<std::size_t> indices;  // into the elite archive
  std::vector<double> scores;        // NS* of every elite member
};

EnsembleSelection select_final_ensemble(std::span<const ArchiveEntry> elite_archive, const BehaviourOracle& oracle,
                                        Metric metric, std::size_t ensemble_size);

struct SearchOutcome {
  SearchState state;
  EnsembleSelection selection;
  std::vector<Genome> ensemble;
  double wall_clock_search = 0.0;
};

SearchOutcome run_search(const NsConfig& cfg, const SearchSpaceBounds& bounds, BehaviourOracle& oracle);

struct RunResult {
  SearchOutcome outcome;
  std::vector<ResidualMlp> members;
  StackingModel stack;
  std::vector<double> member_test_accuracy;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double wall_clock_search = 0.0;
  double wall_clock_training = 0.0;
  double wall_clock_total = 0.0;
};

/// Search, then train the selected ensemble (honouring j flags) and evaluate it
/// with stacking on the test split.
RunResult run(const NsConfig& cfg, const SearchSpaceBounds& bounds, BehaviourOracle& oracle, const DataSplit& data,
              const TrainConfig& train, const StackingConfig& stacking);

}  // namespace divens
