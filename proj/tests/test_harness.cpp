#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "divens/harness.hpp"

using namespace divens;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kTiny = std::string(DIVENS_CONFIG_DIR) + "/tiny.json";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("divens_harness_" + name);
  fs::remove_all(p);
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(DIVENS_CLI) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

// CSV text with every wall_clock* column removed.
std::string strip_wall_clock_columns(const std::string& csv) {
  std::istringstream in(csv);
  std::string out, line;
  std::vector<bool> keep;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (keep.empty())
      for (const auto& c : cells) keep.push_back(c.rfind("wall_clock", 0) != 0);
    for (std::size_t k = 0; k < cells.size(); ++k)
      if (k >= keep.size() || keep[k]) out += cells[k] + ",";
    out += "\n";
  }
  return out;
}

// Same file names, identical contents except wall-clock fields and columns.
void check_same_artifacts(const fs::path& a, const fs::path& b) {
  std::set<std::string> names_a, names_b;
  for (const auto& e : fs::directory_iterator(a))
    if (e.is_regular_file()) names_a.insert(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b))
    if (e.is_regular_file()) names_b.insert(e.path().filename().string());
  REQUIRE(names_a == names_b);
  REQUIRE(!names_a.empty());
  for (const auto& name : names_a) {
    INFO(name);
    const auto x = slurp(a / name), y = slurp(b / name);
    if (fs::path(name).extension() == ".json")
      CHECK(strip_wall_clock(json::parse(x)) == strip_wall_clock(json::parse(y)));
    else if (fs::path(name).extension() == ".csv")
      CHECK(strip_wall_clock_columns(x) == strip_wall_clock_columns(y));
    else
      CHECK(x == y);
  }
}

std::size_t data_rows(const fs::path& csv) {
  std::istringstream in(slurp(csv));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += line.empty() ? 0 : 1;
  return n - 1;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = load_config(std::string(DIVENS_CONFIG_DIR) + "/desk.json");
  CHECK(cfg.seed == 1);
  CHECK(cfg.ns.population_size == 12);
  CHECK(cfg.ns.iterations == 5);
  CHECK(cfg.ns.metric == Metric::cos_dist);
  CHECK(cfg.ns.mode == SearchMode::surrogate);
  CHECK(cfg.bounds.r_max == 6);
  CHECK(cfg.bounds.o_min == 24);
  CHECK(cfg.bounds.d_max == 0.4);
  CHECK(cfg.surrogate.sample_size == 40);
  CHECK(fs::exists(cfg.dataset.path));
  CHECK(fs::path(cfg.dataset.path).is_absolute());

  const auto back = parse_config(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK(config_hash(back) == config_hash(cfg));

  const auto reseeded = with_seed(cfg, 99);
  CHECK(reseeded.seed == 99);
  CHECK(reseeded.ns.seed == 99);
  CHECK(reseeded.train.seed == 99);
  CHECK(reseeded.surrogate.forest.seed == 99);
  CHECK(config_hash(reseeded) != config_hash(cfg));

  auto doc = to_json(cfg);
  doc["search_space"]["Number of blocks"] = "6:2";
  CHECK_THROWS_AS(parse_config(doc), InvalidArgument);
  doc = to_json(cfg);
  doc["novelty_search"]["Diversity metric"] = "euclid";
  CHECK_THROWS_AS(parse_config(doc), InvalidArgument);
  doc = to_json(cfg);
  doc["novelty_search"]["Final ensemble size"] = 9;
  CHECK_THROWS_AS(parse_config(doc), InvalidArgument);
  CHECK_THROWS(load_config("/nonexistent/config.json"));
}

TEST_CASE("strip_wall_clock") {
  const json j = {{"a", 1}, {"wall_clock_total", 2.0}, {"runs", {{{"wall_clock_search", 1.0}, {"acc", 0.5}}}}};
  const json expected = {{"a", 1}, {"runs", {{{"acc", 0.5}}}}};
  CHECK(strip_wall_clock(j) == expected);
}

TEST_CASE("held-out split keeps both orientations together") {
  const auto bounds = make_bounds(2, 3, 4, 8, 8, 16, 0.1, 0.3);
  Rng rng(1);
  std::vector<SampleMember> sample;
  for (int i = 0; i < 12; ++i) sample.push_back({random_genome(bounds, rng), make_profile({0, 1, 1}, std::vector<int>{0, 1, 0})});
  const auto records = build_distance_dataset(sample, bounds);
  const auto parts = split_by_pair(records, 0.25, 3);
  CHECK(parts.train.size() + parts.held_out.size() == records.size());
  CHECK(parts.held_out.size() % 2 == 0);
  CHECK(std::abs(static_cast<double>(parts.held_out.size()) / records.size() - 0.25) < 0.05);
  std::set<std::vector<double>> train_keys;
  for (const auto& r : parts.train) train_keys.insert(r.x);
  for (const auto& r : parts.held_out) {
    auto [a, b] = split_features(r);
    std::vector<double> mirrored = b.values;
    mirrored.insert(mirrored.end(), a.values.begin(), a.values.end());
    CHECK(train_keys.count(mirrored) == 0);
  }
}

TEST_CASE("sample of three gives six records") {
  auto cfg = load_config(kTiny);
  cfg.surrogate.sample_size = 3;
  const auto result = draw_sample(cfg, load_data(cfg.dataset));
  CHECK(result.members.size() == 3);
  CHECK(result.records.size() == 6);
  const auto out = fresh_dir("s3");
  cmd_sample(cfg, out.string());
  CHECK(data_rows(out / "distances.csv") == 6);
}

TEST_CASE("constant targets are flagged as degenerate") {
  const auto cfg = load_config(kTiny);
  Rng rng(2);
  std::vector<SampleMember> sample;
  for (int i = 0; i < 12; ++i)
    sample.push_back({random_genome(cfg.bounds, rng), make_profile({0, 1}, std::vector<int>{0, 0})});
  auto records = build_distance_dataset(sample, cfg.bounds);
  for (auto& r : records) r.d.values.fill(0.3);
  const auto dir = fresh_dir("constant");
  fs::create_directories(dir);
  write_file_atomic((dir / "distances.csv").string(), write_distance_csv(records));
  const auto j = cmd_train_surrogate(cfg, (dir / "distances.csv").string(), (dir / "model").string());
  for (auto m : kAllMetrics) CHECK(j["fidelity"]["metrics"][std::string(metric_column(m))]["degenerate"] == true);
  const auto rf = RandomForestSurrogate::load((dir / "model" / "surrogate.bin").string());
  const auto p = rf.predict(normalize(sample[0].genome, cfg.bounds), normalize(sample[5].genome, cfg.bounds));
  for (double v : p.values) CHECK(v == 0.3);
}

TEST_CASE("trivial comparison has one row per mode") {
  auto cfg = load_config(kTiny);
  cfg.repetitions = 1;
  cfg.ns.population_size = 2;
  cfg.ns.iterations = 1;
  cfg.ns.ensemble_size = 1;
  cfg.ns.tournament_size = 2;
  cfg.ns.k_neighbours = 1;
  cfg.surrogate.sample_size = 4;
  const auto dir = fresh_dir("trivial");
  cmd_sample(cfg, dir.string());
  cmd_train_surrogate(cfg, (dir / "distances.csv").string(), dir.string());
  const auto summary = cmd_compare(cfg, (dir / "surrogate.bin").string(), (dir / "cmp").string());
  CHECK(data_rows(dir / "cmp" / "compare.csv") == 2);
  CHECK(summary["wall_clock_ratio"].get<double>() > 0.0);
  CHECK(summary["config_hash"] == config_hash(cfg));
}

TEST_CASE("every command is reproducible") {
  const auto root = fresh_dir("determinism");
  const auto cfg = " --config " + kTiny;
  for (const char* side : {"a", "b"}) {
    const auto d = root / side;
    const auto s = d.string();
    REQUIRE(cli("sample" + cfg + " --out " + s + "/sample") == 0);
    REQUIRE(cli("train-surrogate" + cfg + " --data " + s + "/sample/distances.csv --out " + s + "/model") == 0);
    REQUIRE(cli("search" + cfg + " --model " + s + "/model/surrogate.bin --out " + s + "/search") == 0);
    REQUIRE(cli("search" + cfg + " --mode exact --metric prop2 --out " + s + "/exact") == 0);
    REQUIRE(cli("evaluate" + cfg + " --run " + s + "/search --out " + s + "/eval") == 0);
    REQUIRE(cli("compare" + cfg + " --model " + s + "/model/surrogate.bin --out " + s + "/compare") == 0);
    REQUIRE(cli("compare" + cfg + " --model " + s + "/model/surrogate.bin --metrics prop1,cos-dist --out " + s +
                "/metrics") == 0);
  }
  for (const char* sub : {"sample", "model", "search", "exact", "eval", "compare", "metrics"}) {
    INFO(std::string(sub));
    check_same_artifacts(root / "a" / sub, root / "b" / sub);
  }

  const auto search = json::parse(slurp(root / "a" / "search" / "report.json"));
  const auto eval = json::parse(slurp(root / "a" / "eval" / "evaluation.json"));
  CHECK(eval["test_accuracy"] == search["test_accuracy"]);
  CHECK(search["elite_archive_size"] == 3);

  // A different seed changes the sample.
  REQUIRE(cli("sample" + cfg + " --seed 8 --out " + (root / "c").string()) == 0);
  CHECK(slurp(root / "c" / "distances.csv") != slurp(root / "a" / "sample" / "distances.csv"));
  CHECK(cli("search" + cfg + " --mode fast --out " + (root / "d").string()) != 0);
  CHECK(cli("search --config /nonexistent.json") != 0);
}
