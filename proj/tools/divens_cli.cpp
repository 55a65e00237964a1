#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "divens/harness.hpp"

using namespace divens;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::string> mode;
  std::optional<std::string> metric;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "override the config seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--mode", c.mode, "exact|surrogate")->check(CLI::IsMember({"exact", "surrogate"}));
  app->add_option("--metric", c.metric, "prop1|prop2|prop-harm|dis|cos-dist|arch-dist");
}

Metric metric_or_throw(const std::string& name) {
  const auto m = parse_metric(name);
  if (!m) throw InvalidArgument("unknown metric " + name);
  return *m;
}

ExperimentConfig resolve(const Common& c) {
  auto cfg = load_config(c.config);
  if (c.seed) cfg = with_seed(std::move(cfg), *c.seed);
  if (c.mode) cfg.ns.mode = *parse_mode(*c.mode);
  if (c.metric) cfg.ns.metric = metric_or_throw(*c.metric);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diverse ensembles by surrogate-assisted novelty search"};
  app.require_subcommand(1);

  Common sample_opts, surrogate_opts, search_opts, compare_opts, evaluate_opts;
  std::string distances, model, run_dir, metrics_list;
  std::optional<std::string> search_model;

  auto* sample = app.add_subcommand("sample", "train a random architecture sample and write its distance dataset");
  add_common(sample, sample_opts);

  auto* train_surrogate = app.add_subcommand("train-surrogate", "fit the distance surrogate on a distance dataset");
  add_common(train_surrogate, surrogate_opts);
  train_surrogate->add_option("--data", distances, "distance dataset CSV")->required()->check(CLI::ExistingFile);

  auto* search = app.add_subcommand("search", "run novelty search and train the final ensemble");
  add_common(search, search_opts);
  search->add_option("--model", search_model, "surrogate model file (surrogate mode)");

  auto* compare = app.add_subcommand("compare", "exact vs surrogate mode over matched seeds");
  add_common(compare, compare_opts);
  compare->add_option("--model", model, "surrogate model file")->required()->check(CLI::ExistingFile);
  compare->add_option("--metrics", metrics_list,
                      "comma-separated metrics; compares metrics in surrogate mode instead of modes");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a saved ensemble on the test split");
  add_common(evaluate_cmd, evaluate_opts);
  evaluate_cmd->add_option("--run", run_dir, "directory written by search")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    nlohmann::json summary;
    if (*sample) {
      summary = cmd_sample(resolve(sample_opts), sample_opts.out);
    } else if (*train_surrogate) {
      summary = cmd_train_surrogate(resolve(surrogate_opts), distances, surrogate_opts.out);
    } else if (*search) {
      summary = cmd_search(resolve(search_opts), search_model, search_opts.out);
      summary.erase("iterations");
      summary.erase("elite_archive");
    } else if (*compare) {
      const auto cfg = resolve(compare_opts);
      if (metrics_list.empty()) {
        summary = cmd_compare(cfg, model, compare_opts.out);
      } else {
        std::vector<Metric> metrics;
        std::stringstream ss(metrics_list);
        for (std::string name; std::getline(ss, name, ',');) metrics.push_back(metric_or_throw(name));
        summary = cmd_compare_metrics(cfg, model, metrics, compare_opts.out);
      }
    } else if (*evaluate_cmd) {
      summary = cmd_evaluate(resolve(evaluate_opts), run_dir, evaluate_opts.out);
    }
    std::cout << summary.dump(2) << "\n";
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
