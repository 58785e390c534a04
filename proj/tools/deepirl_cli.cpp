// deepirl: dataset generation, training, evaluation, robustness study,
// cost-map export and self-checks.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical abort or
// failed self-check.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "deepirl/config.hpp"
#include "deepirl/evalkit.hpp"
#include "deepirl/irl_train.hpp"
#include "deepirl/pgm.hpp"
#include "deepirl/synth.hpp"
#include "deepirl/testing/gradient_suite.hpp"
#include "deepirl/testing/oracle_suite.hpp"
#include "deepirl/testing/tabular_fixed_point.hpp"

namespace fs = std::filesystem;
using namespace deepirl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string arch;
  std::optional<double> pitch_error_deg;
  std::string checkpoint;
  std::string data;
  std::optional<int> sample;
  std::string channel = "cost";
  std::string inject_fault;
};

PipelineConfig resolve_config(const Options& o) {
  auto cfg = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  if (!o.arch.empty()) set_config_value(cfg, "train.architecture", o.arch);
  return cfg;
}

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw UsageError("--out is required");
  return o.out;
}

fs::path dataset_dir(const Options& o, const PipelineConfig& cfg) {
  if (!o.data.empty()) return o.data;
  if (!cfg.train.dataset_path.empty()) return cfg.train.dataset_path;
  throw UsageError("--data (or train.dataset_path in the config) is required");
}

// Accepts a checkpoint directory or a training output directory.
fs::path checkpoint_dir(const Options& o) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  const fs::path p = o.checkpoint;
  if (!fs::exists(p / "manifest.txt") && fs::exists(p / "final" / "manifest.txt")) return p / "final";
  return p;
}

LoadedCheckpoint load_matching_checkpoint(const Options& o, const Dataset& ds) {
  auto ck = load_checkpoint(checkpoint_dir(o));
  if (ck.info.resolution_m != ds.config.grid.resolution_m)
    throw DataError("checkpoint was trained at " + std::to_string(ck.info.resolution_m) + " m/cell but the dataset uses " +
                    std::to_string(ds.config.grid.resolution_m) + " m/cell");
  if (ck.net.input_channels() != FeatureMap::kChannels) throw DataError("checkpoint input channels do not match features");
  return ck;
}

void write_reports(const fs::path& dir, const std::string& stem, const std::vector<EvalReport>& reports) {
  fs::create_directories(dir);
  io::write_file(dir / (stem + ".csv"), reports_csv(reports));
  std::string text;
  for (const auto& r : reports) text += r.text() + "\n";
  io::write_file(dir / (stem + ".txt"), text);
  std::cout << text;
}

PlannerConfig planner_for(const PipelineConfig& cfg, const Options& o) {
  auto p = cfg.planner;
  if (o.seed) p.seed = *o.seed;
  return p;
}

EvalSuiteConfig suite_for(const PipelineConfig& cfg, const Options& o) {
  auto s = cfg.suite;
  if (o.seed) s.seed = *o.seed;
  return s;
}

int cmd_gen_data(const Options& o) {
  auto cfg = resolve_config(o);
  if (o.seed) cfg.dataset.seed = *o.seed;
  if (o.pitch_error_deg) cfg.dataset.pitch_error_deg = *o.pitch_error_deg;
  const auto out = require_out(o);
  const auto ds = generate_dataset(cfg.dataset);
  save_dataset(ds, out);
  std::cout << "wrote " << ds.samples.size() << " samples (" << ds.train.size() << " train, " << ds.test.size()
            << " test) on " << ds.worlds.size() << " worlds to " << out.string() << "\n";
  return kExitOk;
}

int cmd_train(const Options& o) {
  auto cfg = resolve_config(o);
  if (o.seed) cfg.train.seed = *o.seed;
  const auto out = require_out(o);
  const auto ds = load_dataset(dataset_dir(o, cfg));
  fs::create_directories(out);
  io::write_file(out / "config.txt", format_config(cfg));
  const auto res = train(cfg.train, ds, out);
  const auto& h = res.history.records;
  std::cout << "trained " << to_string(cfg.train.architecture) << " for " << h.size() << " steps";
  if (!h.empty()) std::cout << ", last batch NLL " << h.back().nll;
  std::cout << "; checkpoint in " << (out / "final").string() << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto out = require_out(o);
  const auto ds = load_dataset(dataset_dir(o, cfg));
  auto ck = load_matching_checkpoint(o, ds);
  const auto suite = build_eval_suite(ds, suite_for(cfg, o));
  CostmapProvider learned = [&](const FeatureMap& f) { return infer_costmap(ck.net, f); };
  write_reports(out, "eval", {evaluate_model(to_string(ck.info.architecture), learned, suite, suite_features(suite),
                                             planner_for(cfg, o))});
  return kExitOk;
}

int cmd_baseline_eval(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto out = require_out(o);
  const auto ds = load_dataset(dataset_dir(o, cfg));
  const auto suite = build_eval_suite(ds, suite_for(cfg, o));
  CostmapProvider base = [&](const FeatureMap& f) { return handcrafted_cost(f, cfg.baseline); };
  write_reports(out, "baseline", {evaluate_model("baseline", base, suite, suite_features(suite), planner_for(cfg, o))});
  return kExitOk;
}

int cmd_robustness(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto out = require_out(o);
  const double pitch = o.pitch_error_deg.value_or(1.0);
  const auto ds = load_dataset(dataset_dir(o, cfg));
  auto ck = load_matching_checkpoint(o, ds);
  const auto suite = build_eval_suite(ds, suite_for(cfg, o));
  const auto planner = planner_for(cfg, o);
  CostmapProvider learned = [&](const FeatureMap& f) { return infer_costmap(ck.net, f); };
  CostmapProvider base = [&](const FeatureMap& f) { return handcrafted_cost(f, cfg.baseline); };
  std::cout << "clean data\n";
  write_reports(out, "clean",
                {evaluate_model("learned", learned, suite, suite_features(suite), planner),
                 evaluate_model("baseline", base, suite, suite_features(suite), planner)});
  std::cout << "pitch error " << pitch << " deg\n";
  const auto r = robustness_experiment(learned, cfg.baseline, ds, suite, pitch, planner);
  write_reports(out, "robustness", {r.learned, r.baseline});
  return kExitOk;
}

int cmd_export_map(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto out = require_out(o);
  const auto ds = load_dataset(dataset_dir(o, cfg));
  int index = o.sample.value_or(ds.test.empty() ? 0 : ds.test.front());
  if (index < 0 || index >= static_cast<int>(ds.samples.size()))
    throw UsageError("--sample must lie in [0, " + std::to_string(ds.samples.size()) + ")");
  const auto& s = ds.samples[static_cast<std::size_t>(index)];
  std::vector<double> values;
  if (o.channel == "cost") {
    auto ck = load_matching_checkpoint(o, ds);
    values = infer_costmap(ck.net, s.features);
  } else if (o.channel == "baseline") {
    values = handcrafted_cost(s.features, cfg.baseline);
  } else if (o.channel == "true_cost") {
    values = ds.worlds[static_cast<std::size_t>(s.world_index)].true_reward;
    for (auto& v : values) v = -v;
  } else {
    bool found = false;
    for (int c = 0; c < FeatureMap::kChannels; ++c)
      if (o.channel == FeatureMap::kChannelNames[static_cast<std::size_t>(c)]) {
        values = s.features.channel(c);
        found = true;
      }
    if (!found)
      throw UsageError("--channel must be cost, baseline, true_cost, mean_height, height_variance or visibility");
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  export_pgm(values, s.features.spec.height_cells, s.features.spec.width_cells, out);
  std::cout << "wrote " << out.string() << " and " << pgm_sidecar_path(out).string() << "\n";
  return kExitOk;
}

int cmd_gradcheck(const Options& o) {
  verify::GradientFault fault;
  if (o.inject_fault == "conv-backward")
    fault.conv_backward = true;
  else if (!o.inject_fault.empty())
    throw UsageError("unknown fault '" + o.inject_fault + "' (expected conv-backward)");
  bool ok = true;
  for (const auto& c : verify::full_gradient_suite(fault)) {
    std::printf("%-24s max rel error %.3e (tolerance %.0e, %zu entries)  %s\n", c.name.c_str(), c.max_rel_error,
                c.tolerance, c.checked, c.passed() ? "PASS" : "FAIL");
    ok = ok && c.passed();
  }
  std::printf("%s\n", ok ? "all gradient checks passed" : "gradient check FAILED");
  return ok ? kExitOk : kExitNumerical;
}

int cmd_oracle_check(const Options&) {
  constexpr double tol = 1e-6;
  const auto rep = verify::run_oracle_suite();
  std::printf("enumeration on %d problems (grids up to 4x4, %lld paths) in %.2f s\n", rep.problems, rep.paths,
              rep.seconds);
  std::printf("  value       %.3e\n  policy      %.3e\n  visitation  %.3e\n  nll         %.3e\n", rep.max_value_error,
              rep.max_policy_error, rep.max_visitation_error, rep.max_nll_error);
  std::printf("  3x3 truncated values %.3e in %.2f s\n", rep.truncated_value_error, rep.truncated_seconds);
  bool ok = rep.passed(tol);

  const auto prob = verify::make_tabular_problem(5, 5, 2, 11, 4.0);
  TrainConfig tc;
  tc.optimizer = nn::OptimizerKind::Sgd;
  tc.learning_rate = 2.0;
  tc.vi_tol = 1e-12;
  tc.horizon = 100;
  const auto fp = verify::run_tabular_fixed_point(prob, tc, 5000, 1e-3);
  std::printf("tabular fixed point on 5x5: max |mu_D - E[mu]| %.3e after %d steps  %s\n", fp.max_gap, fp.steps,
              fp.converged ? "PASS" : "FAIL");
  ok = ok && fp.converged;
  std::printf("%s\n", ok ? "all oracle checks passed" : "oracle check FAILED");
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Maximum-entropy deep inverse reinforcement learning of grid cost maps"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "configuration file (key = value)");
    sub->add_option("--out", o.out, "output directory (output file for export-map)");
    sub->add_option("--seed", o.seed, "override the command's seed");
    sub->add_option("--arch", o.arch, "standard_fcn, pooling_fcn or ms_fcn");
    sub->add_option("--pitch-error-deg", o.pitch_error_deg, "sensor pitch error in degrees");
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint or training output directory");
    sub->add_option("--data", o.data, "dataset directory");
  };

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Command commands[] = {
      {"gen-data", "generate a synthetic dataset", cmd_gen_data},
      {"train", "train a reward network on a dataset", cmd_train},
      {"eval", "evaluate a checkpoint on the test split", cmd_eval},
      {"baseline-eval", "evaluate the handcrafted cost on the test split", cmd_baseline_eval},
      {"robustness", "compare learned and handcrafted costs under a sensor pitch error", cmd_robustness},
      {"export-map", "write a cost map or feature channel as a PGM image", cmd_export_map},
      {"gradcheck", "finite-difference checks of every gradient", cmd_gradcheck},
      {"oracle-check", "brute-force checks of the MDP solver and the tabular fixed point", cmd_oracle_check},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    subs.emplace_back(sub, &c);
  }
  for (auto& [sub, c] : subs) {
    if (std::string(c->name) == "export-map") {
      sub->add_option("--sample", o.sample, "sample index (default: first test sample)");
      sub->add_option("--channel", o.channel,
                      "cost, baseline, true_cost, mean_height, height_variance or visibility");
    }
    if (std::string(c->name) == "gradcheck")
      sub->add_option("--inject-fault", o.inject_fault, "corrupt a gradient on purpose (conv-backward)")
          ->group("");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    for (auto& [sub, c] : subs)
      if (sub->parsed()) return c->run(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
