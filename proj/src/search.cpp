#include "divens/search.hpp"

#include <algorithm>
#include <numeric>

namespace divens {

const char* to_string(SearchMode mode) { return mode == SearchMode::exact ? "exact" : "surrogate"; }

std::optional<SearchMode> parse_mode(std::string_view name) {
  if (name == "exact") return SearchMode::exact;
  if (name == "surrogate") return SearchMode::surrogate;
  return std::nullopt;
}

void NsConfig::validate() const {
  if (population_size < 2) throw InvalidArgument("population_size must be at least 2");
  if (iterations < 1) throw InvalidArgument("iterations must be at least 1");
  if (k_neighbours < 1) throw InvalidArgument("K must be at least 1");
  if (archive_sample < 0 || archive_sample > population_size)
    throw InvalidArgument("archive sample size must lie in [0, population_size]");
  if (tournament_size < 1 || tournament_size > population_size)
    throw InvalidArgument("tournament_size must lie in [1, population_size]");
  if (ensemble_size < 1) throw InvalidArgument("ensemble_size must be at least 1");
  if (ensemble_size > iterations) throw InvalidArgument("ensemble_size cannot exceed iterations");
}

SurrogateOracle::SurrogateOracle(const DistanceEstimator& estimator, SearchSpaceBounds bounds)
    : estimator_(estimator), bounds_(bounds) {
  bounds_.validate();
}

std::vector<Behaviour> SurrogateOracle::describe(std::span<const Genome> genomes) {
  std::vector<Behaviour> out;
  out.reserve(genomes.size());
  for (const auto& g : genomes) {
    const auto key = genome_key(g);
    auto it = memo_.find(key);
    if (it == memo_.end()) it = memo_.emplace(key, normalize(g, bounds_)).first;
    out.push_back({it->second, std::nullopt});
  }
  return out;
}

DistanceVector SurrogateOracle::distance(const Behaviour& a, const Behaviour& b) const {
  return estimator_.predict(a.rep, b.rep);
}

ExactOracle::ExactOracle(const DataSplit& data, TrainConfig train, SearchSpaceBounds bounds)
    : data_(data), train_(train), bounds_(bounds) {
  bounds_.validate();
  train_.validate();
}

std::vector<Behaviour> ExactOracle::describe(std::span<const Genome> genomes) {
  auto profiles = train_population(genomes, data_, train_, JointPolicy::ignore);
  trained_ += genomes.size();
  std::vector<Behaviour> out;
  out.reserve(genomes.size());
  for (std::size_t i = 0; i < genomes.size(); ++i)
    out.push_back({normalize(genomes[i], bounds_), std::move(profiles[i])});
  return out;
}

DistanceVector ExactOracle::distance(const Behaviour& a, const Behaviour& b) const {
  if (!a.profile || !b.profile) throw InvalidArgument("exact distance needs prediction profiles");
  return exact_distance(*a.profile, *b.profile, arch_rep(a.rep), arch_rep(b.rep));
}

SearchState initial_state(const NsConfig& cfg, const SearchSpaceBounds& bounds) {
  cfg.validate();
  bounds.validate();
  SearchState s;
  s.rng.seed(derive_seed(cfg.seed, 0));
  s.population.reserve(static_cast<std::size_t>(cfg.population_size));
  for (int i = 0; i < cfg.population_size; ++i) s.population.push_back(random_genome(bounds, s.rng));
  return s;
}

double novelty_score(std::span<const double> peer_distances, int k) {
  if (peer_distances.empty()) throw InvalidArgument("novelty score needs at least one peer");
  if (k < 1) throw InvalidArgument("K must be at least 1");
  std::vector<double> d(peer_distances.begin(), peer_distances.end());
  const auto n = std::min(d.size(), static_cast<std::size_t>(k));
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(n), d.end());
  return std::accumulate(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
}

double elite_score(std::span<const double> elite_distances) {
  return std::accumulate(elite_distances.begin(), elite_distances.end(), 0.0);
}

std::size_t tournament_winner(std::span<const std::size_t> entrants, std::span<const double> scores) {
  if (entrants.empty()) throw InvalidArgument("empty tournament");
  std::size_t best = entrants.front();
  for (auto e : entrants)
    if (scores[e] > scores[best] || (scores[e] == scores[best] && e < best)) best = e;
  return best;
}

namespace {

// k distinct indices of [0, n), uniformly, by partial Fisher-Yates.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

SearchState step(const SearchState& state, const NsConfig& cfg, const SearchSpaceBounds& bounds,
                 BehaviourOracle& oracle) {
  cfg.validate();
  SearchState next = state;
  const std::size_t n = next.population.size();
  if (n < 2) throw InvalidArgument("population must hold at least two individuals");
  IterationLog log;
  log.iteration = next.iteration + 1;

  Stopwatch distance_clock;
  const auto behaviours = oracle.describe(next.population);
  const std::size_t n_archive = next.archive.size();
  const std::size_t n_elite = next.elite_archive.size();
  log.novelty.assign(n, 0.0);
  log.elite_scores.assign(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> peers;
    peers.reserve(n - 1 + n_archive);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) peers.push_back(oracle.distance(behaviours[i], behaviours[j])[cfg.metric]);
    for (const auto& a : next.archive) peers.push_back(oracle.distance(behaviours[i], a.behaviour)[cfg.metric]);
    log.novelty[i] = novelty_score(peers, cfg.k_neighbours);
    std::vector<double> elite(n_elite);
    for (std::size_t e = 0; e < n_elite; ++e)
      elite[e] = oracle.distance(behaviours[i], next.elite_archive[e].behaviour)[cfg.metric];
    log.elite_scores[i] = elite_score(elite);
  });
  log.wall_clock_distance = distance_clock.seconds();

  Stopwatch selection_clock;
  log.archived = sample_without_replacement(n, static_cast<std::size_t>(cfg.archive_sample), next.rng);
  for (auto i : log.archived) next.archive.push_back({next.population[i], behaviours[i]});

  log.elite_index = static_cast<std::size_t>(
      std::max_element(log.elite_scores.begin(), log.elite_scores.end()) - log.elite_scores.begin());
  log.elite_score = log.elite_scores[log.elite_index];
  next.elite_archive.push_back({next.population[log.elite_index], behaviours[log.elite_index]});

  std::vector<Genome> children;
  children.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    const auto entrants = sample_without_replacement(n, static_cast<std::size_t>(cfg.tournament_size), next.rng);
    const auto parent = tournament_winner(entrants, log.novelty);
    auto m = mutate_traced(next.population[parent], bounds, next.rng);
    log.parents.push_back(parent);
    log.mutations.push_back(m.kind);
    children.push_back(std::move(m.child));
  }
  next.population = std::move(children);
  log.wall_clock_selection = selection_clock.seconds();

  log.mean_novelty = std::accumulate(log.novelty.begin(), log.novelty.end(), 0.0) / static_cast<double>(n);
  log.max_novelty = *std::max_element(log.novelty.begin(), log.novelty.end());
  next.iteration += 1;
  next.log.push_back(std::move(log));
  return next;
}

std::vector<std::size_t> top_by_total_distance(const std::vector<std::vector<double>>& distances, std::size_t k) {
  const std::size_t n = distances.size();
  if (k > n) throw InvalidArgument("not enough elite members for the requested ensemble size");
  std::vector<double> total(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (distances[i].size() != n) throw LengthMismatch("distance matrix must be square");
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) total[i] += distances[i][j];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return total[a] > total[b]; });
  order.resize(k);
  return order;
}

EnsembleSelection select_final_ensemble(std::span<const ArchiveEntry> elite_archive, const BehaviourOracle& oracle,
                                        Metric metric, std::size_t ensemble_size) {
  const std::size_t n = elite_archive.size();
  if (ensemble_size < 1 || ensemble_size > n)
    throw InvalidArgument("insufficient elite members for the requested ensemble size");
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d[i][j] = oracle.distance(elite_archive[i].behaviour, elite_archive[j].behaviour)[metric];
  });
  EnsembleSelection sel;
  sel.indices = top_by_total_distance(d, ensemble_size);
  sel.scores.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sel.scores[i] += d[i][j];
  return sel;
}

SearchOutcome run_search(const NsConfig& cfg, const SearchSpaceBounds& bounds, BehaviourOracle& oracle) {
  Stopwatch clock;
  SearchOutcome out;
  out.state = initial_state(cfg, bounds);
  for (int t = 0; t < cfg.iterations; ++t) out.state = step(out.state, cfg, bounds, oracle);
  out.selection = select_final_ensemble(out.state.elite_archive, oracle, cfg.metric,
                                        static_cast<std::size_t>(cfg.ensemble_size));
  for (auto i : out.selection.indices) out.ensemble.push_back(out.state.elite_archive[i].genome);
  out.wall_clock_search = clock.seconds();
  return out;
}

RunResult run(const NsConfig& cfg, const SearchSpaceBounds& bounds, BehaviourOracle& oracle, const DataSplit& data,
              const TrainConfig& train, const StackingConfig& stacking) {
  Stopwatch total;
  RunResult r;
  r.outcome = run_search(cfg, bounds, oracle);
  r.wall_clock_search = r.outcome.wall_clock_search;

  Stopwatch training;
  r.members = train_models(r.outcome.ensemble, data.train, train, JointPolicy::honor);
  r.stack = fit_stacking(r.members, data.val, stacking);
  r.wall_clock_training = training.seconds();

  const auto val_probs = member_probabilities(r.members, data.val);
  r.val_accuracy = predict_stacked(r.stack, val_probs, data.val.labels).accuracy();
  const auto test_probs = member_probabilities(r.members, data.test);
  r.test_accuracy = predict_stacked(r.stack, test_probs, data.test.labels).accuracy();
  for (const auto& p : test_probs)
    r.member_test_accuracy.push_back(make_profile(argmax_columns(p), data.test.labels).accuracy());
  r.wall_clock_total = total.seconds();
  return r;
}

}  // namespace divens
