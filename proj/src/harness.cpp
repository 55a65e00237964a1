#include "divens/harness.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <set>

#include "divens/stats.hpp"

namespace divens {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kBlocks = "Number of blocks";
constexpr const char* kFirstWidth = "Number of channels in the first convolution";
constexpr const char* kBlockWidth = "Number of channels in residual blocks";
constexpr const char* kDropout = "Dropout probability in residual blocks";
constexpr const char* kIterations = "Iterations";
constexpr const char* kEnsembleSize = "Final ensemble size";
constexpr const char* kPopulation = "Population size";
constexpr const char* kMetric = "Diversity metric";
constexpr const char* kNeighbours = "Number of neighbours K";
constexpr const char* kArchiveSample = "Size n_A of archive sample";
constexpr const char* kTournament = "Size of tournament for selection";
constexpr const char* kSampleSize = "Sample size";

template <typename T>
T parse_number(std::string_view s, const std::string& what) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw InvalidArgument("config: cannot parse " + what);
  return v;
}

template <typename T>
std::pair<T, T> parse_range(const json& j, const char* key) {
  const auto s = j.at(key).get<std::string>();
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw InvalidArgument(std::string("config: expected lo:hi for ") + key);
  return {parse_number<T>(std::string_view(s).substr(0, colon), key),
          parse_number<T>(std::string_view(s).substr(colon + 1), key)};
}

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string range_text(T lo, T hi) {
  if constexpr (std::is_floating_point_v<T>)
    return fmt(lo) + ":" + fmt(hi);
  else
    return std::to_string(lo) + ":" + std::to_string(hi);
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path.string(), j.dump(2) + "\n"); }

json genome_list(std::span<const Genome> genomes) {
  json out = json::array();
  for (const auto& g : genomes) out.push_back(to_json(g));
  return out;
}

json distances_json(std::span<const double> v) { return json(std::vector<double>(v.begin(), v.end())); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

}  // namespace

void ExperimentConfig::validate() const {
  bounds.validate();
  ns.validate();
  train.validate();
  if (stacking.iterations < 0 || !(stacking.learning_rate > 0.0)) throw InvalidArgument("config: invalid stacking");
  if (surrogate.sample_size < 2) throw InvalidArgument("config: sample size must be at least 2");
  if (!(surrogate.held_out_fraction > 0.0 && surrogate.held_out_fraction < 1.0))
    throw InvalidArgument("config: held_out_fraction must lie in (0, 1)");
  if (surrogate.forest.tree_count < 1) throw InvalidArgument("config: forest needs at least one tree");
  if (surrogate.forest.min_leaf < 1) throw InvalidArgument("config: min_leaf must be at least 1");
  if (repetitions < 1) throw InvalidArgument("config: repetitions must be at least 1");
  if (dataset.source != "csv" && dataset.source != "blobs")
    throw InvalidArgument("config: dataset source must be csv or blobs");
  if (dataset.source == "csv" && dataset.path.empty()) throw InvalidArgument("config: csv dataset needs a path");
}

ExperimentConfig parse_config(const json& j, const std::string& base_dir) {
  ExperimentConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("repetitions")) c.repetitions = j.at("repetitions").get<int>();

  const auto& d = j.at("dataset");
  c.dataset.source = d.value("source", c.dataset.source);
  c.dataset.path = d.value("path", std::string());
  if (!c.dataset.path.empty() && !base_dir.empty() && fs::path(c.dataset.path).is_relative())
    c.dataset.path = (fs::path(base_dir) / c.dataset.path).lexically_normal().string();
  c.dataset.label_column = d.value("label_column", c.dataset.label_column);
  c.dataset.classes = d.value("classes", c.dataset.classes);
  c.dataset.per_class = d.value("per_class", c.dataset.per_class);
  c.dataset.dim = d.value("dim", c.dataset.dim);
  c.dataset.spread = d.value("spread", c.dataset.spread);
  if (d.contains("split")) {
    const auto f = d.at("split").get<std::vector<double>>();
    if (f.size() != 3) throw InvalidArgument("config: split needs three fractions");
    c.dataset.fractions = {f[0], f[1], f[2]};
  }
  c.dataset.split_seed = d.value("split_seed", c.dataset.split_seed);
  c.dataset.standardize = d.value("standardize", c.dataset.standardize);

  const auto& s = j.at("search_space");
  std::tie(c.bounds.r_min, c.bounds.r_max) = parse_range<int>(s, kBlocks);
  std::tie(c.bounds.c_min, c.bounds.c_max) = parse_range<int>(s, kFirstWidth);
  std::tie(c.bounds.o_min, c.bounds.o_max) = parse_range<int>(s, kBlockWidth);
  std::tie(c.bounds.d_min, c.bounds.d_max) = parse_range<double>(s, kDropout);

  const auto& n = j.at("novelty_search");
  c.ns.iterations = n.at(kIterations).get<int>();
  c.ns.ensemble_size = n.at(kEnsembleSize).get<int>();
  c.ns.population_size = n.at(kPopulation).get<int>();
  const auto metric_name_text = n.at(kMetric).get<std::string>();
  const auto metric = parse_metric(metric_name_text);
  if (!metric) throw InvalidArgument("config: unknown diversity metric " + metric_name_text);
  c.ns.metric = *metric;
  c.ns.k_neighbours = n.at(kNeighbours).get<int>();
  c.ns.archive_sample = n.at(kArchiveSample).get<int>();
  c.ns.tournament_size = n.at(kTournament).get<int>();
  if (n.contains("mode")) {
    const auto mode = parse_mode(n.at("mode").get<std::string>());
    if (!mode) throw InvalidArgument("config: mode must be exact or surrogate");
    c.ns.mode = *mode;
  }

  if (j.contains("training")) {
    const auto& t = j.at("training");
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
  }
  if (j.contains("stacking")) {
    const auto& t = j.at("stacking");
    c.stacking.iterations = t.value("iterations", c.stacking.iterations);
    c.stacking.learning_rate = t.value("learning_rate", c.stacking.learning_rate);
  }
  if (j.contains("surrogate")) {
    const auto& t = j.at("surrogate");
    c.surrogate.sample_size = t.value(kSampleSize, c.surrogate.sample_size);
    c.surrogate.symmetrize = t.value("symmetrize", c.surrogate.symmetrize);
    c.surrogate.held_out_fraction = t.value("held_out_fraction", c.surrogate.held_out_fraction);
    c.surrogate.forest.tree_count = t.value("trees", c.surrogate.forest.tree_count);
    c.surrogate.forest.m_try = t.value("m_try", c.surrogate.forest.m_try);
    c.surrogate.forest.min_leaf = t.value("min_leaf", c.surrogate.forest.min_leaf);
    c.surrogate.forest.symmetric = c.surrogate.symmetrize;
  }
  c = with_seed(std::move(c), c.seed);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what(), 0);
  }
  try {
    return parse_config(j, fs::path(path).parent_path().string());
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["repetitions"] = c.repetitions;
  j["dataset"] = {{"source", c.dataset.source},
                  {"path", c.dataset.path},
                  {"label_column", c.dataset.label_column},
                  {"classes", c.dataset.classes},
                  {"per_class", c.dataset.per_class},
                  {"dim", c.dataset.dim},
                  {"spread", c.dataset.spread},
                  {"split", c.dataset.fractions},
                  {"split_seed", c.dataset.split_seed},
                  {"standardize", c.dataset.standardize}};
  j["search_space"] = {{kBlocks, range_text(c.bounds.r_min, c.bounds.r_max)},
                       {kFirstWidth, range_text(c.bounds.c_min, c.bounds.c_max)},
                       {kBlockWidth, range_text(c.bounds.o_min, c.bounds.o_max)},
                       {kDropout, range_text(c.bounds.d_min, c.bounds.d_max)}};
  j["novelty_search"] = {{kIterations, c.ns.iterations},
                         {kEnsembleSize, c.ns.ensemble_size},
                         {kPopulation, c.ns.population_size},
                         {kMetric, std::string(metric_name(c.ns.metric))},
                         {kNeighbours, c.ns.k_neighbours},
                         {kArchiveSample, c.ns.archive_sample},
                         {kTournament, c.ns.tournament_size},
                         {"mode", to_string(c.ns.mode)}};
  j["training"] = {{"epochs", c.train.epochs},
                   {"batch_size", c.train.batch_size},
                   {"learning_rate", c.train.learning_rate}};
  j["stacking"] = {{"iterations", c.stacking.iterations}, {"learning_rate", c.stacking.learning_rate}};
  j["surrogate"] = {{kSampleSize, c.surrogate.sample_size},
                    {"symmetrize", c.surrogate.symmetrize},
                    {"held_out_fraction", c.surrogate.held_out_fraction},
                    {"trees", c.surrogate.forest.tree_count},
                    {"m_try", c.surrogate.forest.m_try},
                    {"min_leaf", c.surrogate.forest.min_leaf}};
  return j;
}

ExperimentConfig with_seed(ExperimentConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.ns.seed = seed;
  cfg.train.seed = seed;
  cfg.surrogate.forest.seed = seed;
  return cfg;
}

std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a64(to_json(cfg).dump())); }

DataSplit load_data(const DatasetSpec& spec) {
  const LabeledDataset all =
      spec.source == "blobs"
          ? synth_blobs(spec.classes, spec.per_class, spec.dim, spec.spread, spec.split_seed)
          : load_csv(spec.path, spec.label_column);
  DataSplit s = split(all, spec.fractions, spec.split_seed);
  if (spec.standardize) standardize(s);
  return s;
}

json strip_wall_clock(json j) {
  if (j.is_object()) {
    json out = json::object();
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key().rfind("wall_clock", 0) != 0) out[it.key()] = strip_wall_clock(it.value());
    return out;
  }
  if (j.is_array())
    for (auto& e : j) e = strip_wall_clock(e);
  return j;
}

SampleResult draw_sample(const ExperimentConfig& cfg, const DataSplit& data) {
  Stopwatch clock;
  Rng rng(derive_seed(cfg.seed, 0x53));
  std::vector<Genome> genomes;
  for (int i = 0; i < cfg.surrogate.sample_size; ++i) genomes.push_back(random_genome(cfg.bounds, rng));

  SampleResult out;
  std::vector<PredictionProfile> profiles;
  for (int attempt = 0;; ++attempt) {
    try {
      profiles = train_population(genomes, data, cfg.train, JointPolicy::honor);
      break;
    } catch (const DivergenceError& e) {
      if (attempt > 0) throw;
      std::cerr << "sample: " << e.what() << ", redrawing\n";
      for (std::size_t i = 0; i < genomes.size(); ++i) {
        const bool hit = e.has_member() ? i == e.member() : genomes[i].joint;
        if (hit) {
          genomes[i] = random_genome(cfg.bounds, rng);
          ++out.resampled;
        }
      }
    }
  }
  for (std::size_t i = 0; i < genomes.size(); ++i) out.members.push_back({genomes[i], std::move(profiles[i])});
  out.records = build_distance_dataset(out.members, cfg.bounds, cfg.surrogate.symmetrize);
  out.wall_clock_training = clock.seconds();
  return out;
}

HeldOutSplit split_by_pair(std::span<const DistanceRecord> records, double held_out_fraction, std::uint64_t seed) {
  // Key every record by its unordered pair of representations.
  std::vector<std::uint64_t> keys(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto [a, b] = split_features(records[r]);
    const auto& lo = std::min(a.values, b.values);
    const auto& hi = std::max(a.values, b.values);
    std::string bytes;
    bytes.append(reinterpret_cast<const char*>(lo.data()), lo.size() * sizeof(double));
    bytes.append(reinterpret_cast<const char*>(hi.data()), hi.size() * sizeof(double));
    keys[r] = fnv1a64(bytes);
  }
  std::vector<std::uint64_t> unique(keys);
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  Rng rng(derive_seed(seed, 0x48));
  std::shuffle(unique.begin(), unique.end(), rng);
  const auto n_held = static_cast<std::size_t>(std::llround(held_out_fraction * static_cast<double>(unique.size())));
  const std::set<std::uint64_t> held(unique.begin(), unique.begin() + static_cast<std::ptrdiff_t>(n_held));
  HeldOutSplit out;
  for (std::size_t r = 0; r < records.size(); ++r)
    (held.count(keys[r]) ? out.held_out : out.train).push_back(records[r]);
  return out;
}

json fidelity_json(const FidelityReport& report) {
  json j;
  j["records"] = report.records;
  for (auto m : kAllMetrics) {
    const auto& f = report[m];
    j["metrics"][std::string(metric_column(m))] = {
        {"spearman", f.spearman}, {"degenerate", f.degenerate}, {"mean_abs_error", f.mean_abs_error}};
  }
  return j;
}

json run_report(const ExperimentConfig& cfg, const RunResult& r) {
  const auto& st = r.outcome.state;
  json j;
  j["config_hash"] = config_hash(cfg);
  j["seed"] = cfg.seed;
  j["mode"] = to_string(cfg.ns.mode);
  j["metric"] = std::string(metric_name(cfg.ns.metric));
  j["iterations"] = json::array();
  for (const auto& l : st.log) {
    json it = {{"iteration", l.iteration},
               {"mean_novelty", l.mean_novelty},
               {"max_novelty", l.max_novelty},
               {"elite_score", l.elite_score},
               {"elite_index", l.elite_index},
               {"archived", l.archived},
               {"parents", l.parents},
               {"wall_clock_distance", l.wall_clock_distance},
               {"wall_clock_selection", l.wall_clock_selection}};
    json kinds = json::array();
    for (auto k : l.mutations) kinds.push_back(to_string(k));
    it["mutations"] = kinds;
    j["iterations"].push_back(it);
  }
  j["archive_size"] = st.archive.size();
  j["elite_archive_size"] = st.elite_archive.size();
  std::vector<Genome> elites;
  for (const auto& e : st.elite_archive) elites.push_back(e.genome);
  j["elite_archive"] = genome_list(elites);
  j["ensemble_scores"] = distances_json(r.outcome.selection.scores);
  j["ensemble_indices"] = r.outcome.selection.indices;
  j["ensemble"] = genome_list(r.outcome.ensemble);
  j["member_test_accuracy"] = r.member_test_accuracy;
  j["val_accuracy"] = r.val_accuracy;
  j["test_accuracy"] = r.test_accuracy;
  j["wall_clock_search"] = r.wall_clock_search;
  j["wall_clock_training"] = r.wall_clock_training;
  j["wall_clock_total"] = r.wall_clock_total;
  return j;
}

std::string iteration_csv(const RunResult& r) {
  std::string out = "iteration,mean_novelty,max_novelty,elite_score,elite_index\n";
  for (const auto& l : r.outcome.state.log)
    out += std::to_string(l.iteration) + "," + fmt(l.mean_novelty) + "," + fmt(l.max_novelty) + "," +
           fmt(l.elite_score) + "," + std::to_string(l.elite_index) + "\n";
  return out;
}

namespace {

RunResult run_with(const ExperimentConfig& cfg, const DataSplit& data, const DistanceEstimator* surrogate) {
  if (cfg.ns.mode == SearchMode::exact) {
    ExactOracle oracle(data, cfg.train, cfg.bounds);
    return run(cfg.ns, cfg.bounds, oracle, data, cfg.train, cfg.stacking);
  }
  if (surrogate == nullptr) throw InvalidArgument("surrogate mode needs a surrogate model");
  SurrogateOracle oracle(*surrogate, cfg.bounds);
  return run(cfg.ns, cfg.bounds, oracle, data, cfg.train, cfg.stacking);
}

RandomForestSurrogate load_surrogate(const std::string& path, const SearchSpaceBounds& bounds) {
  auto rf = RandomForestSurrogate::load(path);
  if (rf.feature_dim() != 2 * bounds.norm_length())
    throw LengthMismatch("surrogate was trained for a different search space (feature width " +
                         std::to_string(rf.feature_dim()) + ")");
  return rf;
}

json mw_json(const MannWhitneyResult& m) {
  return {{"u", m.u}, {"z", m.z}, {"p_value", m.p_value}, {"exact", m.exact}};
}

}  // namespace

ModeComparison compare_modes(const ExperimentConfig& cfg, const DataSplit& data, const DistanceEstimator& surrogate) {
  ModeComparison c;
  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(rep);
    auto rc = with_seed(cfg, seed);
    rc.ns.mode = SearchMode::exact;
    const auto exact = run_with(rc, data, nullptr);
    rc.ns.mode = SearchMode::surrogate;
    const auto sur = run_with(rc, data, &surrogate);
    c.seeds.push_back(seed);
    c.wall_clock_exact.push_back(exact.wall_clock_total);
    c.wall_clock_surrogate.push_back(sur.wall_clock_total);
    c.accuracy_exact.push_back(exact.test_accuracy);
    c.accuracy_surrogate.push_back(sur.test_accuracy);
  }
  return c;
}

json comparison_summary(const ExperimentConfig& cfg, const ModeComparison& c) {
  json j;
  j["config_hash"] = config_hash(cfg);
  j["repetitions"] = c.seeds.size();
  j["seeds"] = c.seeds;
  const double t_exact = median(c.wall_clock_exact);
  const double t_sur = median(c.wall_clock_surrogate);
  j["wall_clock_median_exact"] = t_exact;
  j["wall_clock_median_surrogate"] = t_sur;
  j["wall_clock_ratio"] = t_sur > 0.0 ? t_exact / t_sur : 0.0;
  j["accuracy_exact"] = c.accuracy_exact;
  j["accuracy_surrogate"] = c.accuracy_surrogate;
  j["median_accuracy_exact"] = median(c.accuracy_exact);
  j["median_accuracy_surrogate"] = median(c.accuracy_surrogate);
  if (c.seeds.size() >= 10) {
    j["mann_whitney_accuracy"] = mw_json(mann_whitney(c.accuracy_exact, c.accuracy_surrogate));
    j["wall_clock_mann_whitney"] = mw_json(mann_whitney(c.wall_clock_exact, c.wall_clock_surrogate));
  }
  return j;
}

std::string comparison_csv(const ExperimentConfig& cfg, const ModeComparison& c) {
  const auto hash = config_hash(cfg);
  std::string out = "config_hash,mode,seed,test_accuracy,wall_clock_total\n";
  for (std::size_t r = 0; r < c.seeds.size(); ++r) {
    out += hash + ",exact," + std::to_string(c.seeds[r]) + "," + fmt(c.accuracy_exact[r]) + "," +
           fmt(c.wall_clock_exact[r]) + "\n";
    out += hash + ",surrogate," + std::to_string(c.seeds[r]) + "," + fmt(c.accuracy_surrogate[r]) + "," +
           fmt(c.wall_clock_surrogate[r]) + "\n";
  }
  return out;
}

MetricStudy compare_metrics(const ExperimentConfig& cfg, const DataSplit& data, const DistanceEstimator& surrogate,
                            const std::vector<Metric>& metrics) {
  if (metrics.empty()) throw InvalidArgument("metric comparison needs at least one metric");
  MetricStudy s;
  s.metrics = metrics;
  s.accuracy.assign(metrics.size(), {});
  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(rep);
    s.seeds.push_back(seed);
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      auto rc = with_seed(cfg, seed);
      rc.ns.mode = SearchMode::surrogate;
      rc.ns.metric = metrics[m];
      s.accuracy[m].push_back(run_with(rc, data, &surrogate).test_accuracy);
    }
  }
  return s;
}

json metric_summary(const ExperimentConfig& cfg, const MetricStudy& s) {
  json j;
  j["config_hash"] = config_hash(cfg);
  j["repetitions"] = s.seeds.size();
  j["seeds"] = s.seeds;
  j["baseline"] = std::string(metric_name(s.metrics.front()));
  for (std::size_t m = 0; m < s.metrics.size(); ++m) {
    json e = {{"accuracy", s.accuracy[m]}, {"median_accuracy", median(s.accuracy[m])}};
    if (m > 0) e["mann_whitney_vs_baseline"] = mw_json(mann_whitney(s.accuracy[m], s.accuracy.front()));
    j["metrics"][std::string(metric_name(s.metrics[m]))] = e;
  }
  return j;
}

std::string metric_csv(const ExperimentConfig& cfg, const MetricStudy& s) {
  const auto hash = config_hash(cfg);
  std::string out = "config_hash,metric,seed,test_accuracy\n";
  for (std::size_t m = 0; m < s.metrics.size(); ++m)
    for (std::size_t r = 0; r < s.seeds.size(); ++r)
      out += hash + "," + std::string(metric_name(s.metrics[m])) + "," + std::to_string(s.seeds[r]) + "," +
             fmt(s.accuracy[m][r]) + "\n";
  return out;
}

json cmd_sample(const ExperimentConfig& cfg, const std::string& out_dir) {
  Stopwatch clock;
  ensure_dir(out_dir);
  const auto data = load_data(cfg.dataset);
  const auto sample = draw_sample(cfg, data);
  write_file_atomic((fs::path(out_dir) / "distances.csv").string(), write_distance_csv(sample.records));

  json j;
  j["config_hash"] = config_hash(cfg);
  j["config"] = to_json(cfg);
  j["sample_size"] = sample.members.size();
  j["records"] = sample.records.size();
  j["resampled"] = sample.resampled;
  j["genomes"] = json::array();
  for (const auto& m : sample.members)
    j["genomes"].push_back({{"genome", to_json(m.genome)}, {"val_accuracy", m.profile.accuracy()}});
  j["wall_clock_training"] = sample.wall_clock_training;
  j["wall_clock_total"] = clock.seconds();
  write_json(fs::path(out_dir) / "sample.json", j);
  return j;
}

json cmd_train_surrogate(const ExperimentConfig& cfg, const std::string& distances_csv, const std::string& out_dir) {
  Stopwatch clock;
  ensure_dir(out_dir);
  const auto records = read_distance_csv(distances_csv);
  if (records.size() < 2) throw InvalidArgument("distance dataset needs at least two rows");
  if (records.front().x.size() != 2 * cfg.bounds.norm_length())
    throw LengthMismatch("distance dataset does not match the configured search space");
  const auto parts = split_by_pair(records, cfg.surrogate.held_out_fraction, cfg.seed);
  if (parts.train.size() < 2) throw InvalidArgument("too few training rows after holding out pairs");

  Stopwatch fit_clock;
  const auto rf = RandomForestSurrogate::fit(parts.train, cfg.surrogate.forest);
  const double fit_seconds = fit_clock.seconds();
  rf.save((fs::path(out_dir) / "surrogate.bin").string());

  json j;
  j["config_hash"] = config_hash(cfg);
  j["train_records"] = parts.train.size();
  j["held_out_records"] = parts.held_out.size();
  j["trees"] = rf.tree_count();
  j["m_try"] = rf.m_try();
  j["min_leaf"] = rf.min_leaf();
  j["symmetric"] = rf.symmetric();
  json oob;
  for (auto m : kAllMetrics)
    oob[std::string(metric_column(m))] = {{"mse", rf.oob().mse[static_cast<std::size_t>(m)]},
                                          {"r2", rf.oob().r2[static_cast<std::size_t>(m)]}};
  j["out_of_bag"] = oob;
  if (parts.held_out.size() >= 10)
    j["fidelity"] = fidelity_json(rank_fidelity(rf, parts.held_out));
  else
    j["fidelity"] = nullptr;
  j["wall_clock_fit"] = fit_seconds;
  j["wall_clock_total"] = clock.seconds();
  write_json(fs::path(out_dir) / "surrogate.json", j);
  return j;
}

json cmd_search(const ExperimentConfig& cfg, const std::optional<std::string>& model_path, const std::string& out_dir) {
  ensure_dir(out_dir);
  const auto data = load_data(cfg.dataset);
  std::optional<RandomForestSurrogate> rf;
  if (cfg.ns.mode == SearchMode::surrogate) {
    if (!model_path) throw InvalidArgument("surrogate mode needs --model");
    rf = load_surrogate(*model_path, cfg.bounds);
  }
  const auto r = run_with(cfg, data, rf ? &*rf : nullptr);

  json manifest;
  manifest["config_hash"] = config_hash(cfg);
  manifest["classes"] = data.train.class_count;
  manifest["members"] = json::array();
  for (std::size_t k = 0; k < r.members.size(); ++k) {
    const std::string file = "member_" + std::to_string(k) + ".bin";
    save_model(r.members[k], (fs::path(out_dir) / file).string());
    manifest["members"].push_back({{"genome", to_json(r.members[k].genome())}, {"model_file", file}});
  }
  manifest["stack"] = r.stack.to_json();
  write_json(fs::path(out_dir) / "ensemble.json", manifest);

  const auto report = run_report(cfg, r);
  write_file_atomic((fs::path(out_dir) / "iterations.csv").string(), iteration_csv(r));
  write_json(fs::path(out_dir) / "report.json", report);
  return report;
}

json cmd_compare(const ExperimentConfig& cfg, const std::string& model_path, const std::string& out_dir) {
  ensure_dir(out_dir);
  const auto data = load_data(cfg.dataset);
  const auto rf = load_surrogate(model_path, cfg.bounds);
  const auto c = compare_modes(cfg, data, rf);
  write_file_atomic((fs::path(out_dir) / "compare.csv").string(), comparison_csv(cfg, c));
  const auto j = comparison_summary(cfg, c);
  write_json(fs::path(out_dir) / "compare.json", j);
  return j;
}

json cmd_compare_metrics(const ExperimentConfig& cfg, const std::string& model_path, const std::vector<Metric>& metrics,
                         const std::string& out_dir) {
  ensure_dir(out_dir);
  const auto data = load_data(cfg.dataset);
  const auto rf = load_surrogate(model_path, cfg.bounds);
  const auto s = compare_metrics(cfg, data, rf, metrics);
  write_file_atomic((fs::path(out_dir) / "metrics.csv").string(), metric_csv(cfg, s));
  const auto j = metric_summary(cfg, s);
  write_json(fs::path(out_dir) / "metrics.json", j);
  return j;
}

json cmd_evaluate(const ExperimentConfig& cfg, const std::string& run_dir, const std::string& out_dir) {
  ensure_dir(out_dir);
  json manifest;
  try {
    manifest = json::parse(read_file((fs::path(run_dir) / "ensemble.json").string()));
  } catch (const json::parse_error& e) {
    throw CorruptFile(std::string("ensemble manifest: ") + e.what());
  }
  const auto data = load_data(cfg.dataset);
  std::vector<ResidualMlp> members;
  for (const auto& m : manifest.at("members"))
    members.push_back(load_model((fs::path(run_dir) / m.at("model_file").get<std::string>()).string()));
  const auto stack = StackingModel::from_json(manifest.at("stack"));
  const auto profile = predict_ensemble(members, stack, data.test);

  json j;
  j["config_hash"] = config_hash(cfg);
  j["ensemble_config_hash"] = manifest.at("config_hash");
  j["members"] = members.size();
  j["test_accuracy"] = profile.accuracy();
  std::vector<double> member_acc;
  for (const auto& m : members) member_acc.push_back(evaluate(m, data.test).accuracy());
  j["member_test_accuracy"] = member_acc;
  write_json(fs::path(out_dir) / "evaluation.json", j);
  return j;
}

}  // namespace divens
