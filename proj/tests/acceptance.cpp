// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.
//
//   acceptance [--workdir DIR] [--only N,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "deepirl/baseline_cost.hpp"
#include "deepirl/config.hpp"
#include "deepirl/evalkit.hpp"
#include "deepirl/io.hpp"
#include "deepirl/irl_train.hpp"
#include "deepirl/synth.hpp"
#include "deepirl/testing/gradient_suite.hpp"
#include "deepirl/testing/oracle_suite.hpp"
#include "deepirl/testing/tabular_fixed_point.hpp"

namespace fs = std::filesystem;
using namespace deepirl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, bool pass, const std::string& detail) {
  verdicts.push_back({id, pass, detail});
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 1. Solver against exhaustive path enumeration.
void criterion_oracle() {
  const auto t0 = Clock::now();
  const auto rep = verify::run_oracle_suite();
  const double secs = seconds_since(t0);
  const bool pass = rep.passed(1e-6) && secs < 60.0;
  report(1, pass,
         fmt("oracle errors value %.2e policy %.2e visitation %.2e nll %.2e over %d problems (tol 1e-6), %.1f s "
             "(limit 60 s)",
             rep.max_value_error, rep.max_policy_error, rep.max_visitation_error, rep.max_nll_error, rep.problems,
             secs));
}

// 2. Finite-difference checks of layers, architectures and the pipeline.
void criterion_gradients() {
  const auto t0 = Clock::now();
  const auto checks = verify::full_gradient_suite();
  const double secs = seconds_since(t0);
  bool pass = secs < 300.0;
  double worst_layer = 0, worst_net = 0, worst_pipe = 0;
  std::string failed;
  for (const auto& c : checks) {
    pass = pass && c.passed();
    if (!c.passed()) failed += " " + c.name;
    double& w = c.tolerance == verify::kLayerTolerance     ? worst_layer
                : c.tolerance == verify::kNetworkTolerance ? worst_net
                                                           : worst_pipe;
    w = std::max(w, c.max_rel_error);
  }
  report(2, pass,
         fmt("%zu checks; worst rel error layers %.2e (<1e-5), networks %.2e (<1e-4), pipeline %.2e (<1e-3); %.1f s "
             "(limit 300 s)%s%s",
             checks.size(), worst_layer, worst_net, worst_pipe, secs, failed.empty() ? "" : "; failed:",
             failed.c_str()));
}

// 3. Tabular reward model reaches moment matching.
void criterion_fixed_point() {
  const auto prob = verify::make_tabular_problem(5, 5, 2, 11, 4.0);
  TrainConfig tc;
  tc.optimizer = nn::OptimizerKind::Sgd;
  tc.learning_rate = 2.0;
  tc.vi_tol = 1e-12;
  tc.horizon = 100;
  const auto fp = verify::run_tabular_fixed_point(prob, tc, 5000, 1e-3);
  report(3, fp.converged && fp.max_gap < 1e-3,
         fmt("5x5 tabular model: max|mu_D - E[mu]| = %.2e after %d steps (need < 1e-3 within 5000)", fp.max_gap,
             fp.steps));
}

// 7. Metric unit checks.
void criterion_metrics() {
  using P = std::vector<Point2>;
  struct Case {
    P a, b;
    double want;
  };
  const double s2 = std::numbers::sqrt2;
  const std::vector<Case> cases = {
      {{{0, 0}, {1, 0}}, {{0, 1}}, (1 + s2) / 2},
      {{{0, 0}}, {{3, 4}}, 5.0},
      {{{0, 0}, {1, 1}, {2, 2}}, {{0, 0}, {1, 1}, {2, 2}}, 0.0},
      {{{0, 0}, {2, 0}}, {{1, 0}}, 1.0},
      {{{0, 0}, {0, 1}, {0, 2}, {0, 3}}, {{1, 0}}, (1 + s2 + std::sqrt(5.0) + std::sqrt(10.0)) / 4},
  };
  double worst = 0.0;
  for (const auto& c : cases) {
    worst = std::max(worst, std::abs(mhd(c.a, c.b) - c.want));
    worst = std::max(worst, std::abs(mhd(c.b, c.a) - c.want));
  }

  std::mt19937_64 rng(2024);
  std::bernoulli_distribution cell(0.08);
  std::uniform_real_distribution<double> radius(0.0, 4.5);
  int mismatched = 0;
  constexpr int n = 20;
  for (int k = 0; k < 50; ++k) {
    std::vector<std::uint8_t> m(n * n);
    for (auto& v : m) v = cell(rng);
    const double r = radius(rng);
    std::vector<std::uint8_t> brute(n * n, 0);
    for (int i = 0; i < n * n; ++i)
      for (int j = 0; j < n * n; ++j)
        if (m[static_cast<std::size_t>(j)]) {
          const int dr = i / n - j / n, dc = i % n - j % n;
          if (dr * dr + dc * dc <= r * r) brute[static_cast<std::size_t>(i)] = 1;
        }
    mismatched += minkowski_inflate(m, n, n, r) != brute;
  }
  report(7, worst < 1e-9 && mismatched == 0,
         fmt("MHD worst deviation %.1e on %zu hand cases (tol 1e-9); Minkowski inflation differs from brute force "
             "on %d of 50 random 20x20 masks",
             worst, cases.size(), mismatched));
}

// 8. Two identical runs produce identical bytes.
void criterion_determinism(const fs::path& work) {
  PipelineConfig cfg;
  cfg.dataset.grid = GridSpec{20, 20, 0.5, 0.0, 0.0};
  cfg.dataset.n_samples = 12;
  cfg.dataset.seed = 21;
  cfg.dataset.points_per_scan = 8000;
  cfg.dataset.expert.min_distance_m = 3.0;
  cfg.dataset.expert.max_distance_m = 7.0;
  cfg.dataset.train_fraction = 0.75;
  cfg.train.architecture = ArchitectureId::MsFcn;
  cfg.train.n_steps = 5;
  cfg.train.batch_size = 3;
  cfg.train.seed = 4;
  cfg.suite.calibration_free_per_test = 2;
  cfg.suite.holdout_free_per_test = 2;
  cfg.suite.collisions_per_test = 2;

  auto dir_bytes = [](const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) all += fs::relative(f, dir).string() + "\n" + io::read_file(f);
    return all;
  };

  std::string bytes[2][3];
  for (int run = 0; run < 2; ++run) {
    const auto root = work / ("determinism_" + std::to_string(run));
    fs::remove_all(root);
    const auto ds = generate_dataset(cfg.dataset);
    save_dataset(ds, root / "data");
    const auto loaded = load_dataset(root / "data");
    auto res = train(cfg.train, loaded, root / "run");
    const auto suite = build_eval_suite(loaded, cfg.suite);
    CostmapProvider learned = [&](const FeatureMap& f) { return infer_costmap(res.net, f); };
    CostmapProvider base = [&](const FeatureMap& f) { return handcrafted_cost(f, cfg.baseline); };
    const std::vector<EvalReport> reports = {
        evaluate_model("ms_fcn", learned, suite, suite_features(suite), cfg.planner),
        evaluate_model("baseline", base, suite, suite_features(suite), cfg.planner)};
    io::write_file(root / "eval.csv", reports_csv(reports));
    bytes[run][0] = dir_bytes(root / "data");
    bytes[run][1] = dir_bytes(root / "run" / "final");
    bytes[run][2] = io::read_file(root / "eval.csv");
  }
  const bool d = bytes[0][0] == bytes[1][0], c = bytes[0][1] == bytes[1][1], e = bytes[0][2] == bytes[1][2];
  report(8, d && c && e,
         fmt("two runs with one config and seed: dataset %s (%zu bytes), checkpoint %s (%zu bytes), evaluation CSV %s",
             d ? "identical" : "DIFFERENT", bytes[0][0].size(), c ? "identical" : "DIFFERENT", bytes[0][1].size(),
             e ? "identical" : "DIFFERENT"));
}

struct TrainedModel {
  ArchitectureId arch;
  std::uint64_t seed;
  nn::NetworkGraph net;
  double nll;
  double mhd;
};

// 4, 5 and 6 share one dataset and one set of trained models.
void criteria_learning(const fs::path& work) {
  PipelineConfig cfg;  // desk defaults: 500 samples on 50x50 grids
  cfg.dataset.seed = 7;
  const auto t0 = Clock::now();
  const auto ds = generate_dataset(cfg.dataset);
  std::printf("  dataset: %zu samples (%zu train, %zu test) on %dx%d grids, %.0f s\n", ds.samples.size(),
              ds.train.size(), ds.test.size(), cfg.dataset.grid.width_cells, cfg.dataset.grid.height_cells,
              seconds_since(t0));
  std::fflush(stdout);

  const auto suite = build_eval_suite(ds, cfg.suite);
  const auto clean = suite_features(suite);

  // Uniform policy: vanishing discount, no step cost, every valid action alike.
  PlannerConfig uniform = cfg.planner;
  uniform.gamma = 1e-9;
  uniform.step_cost = 0.0;
  uniform.max_residual_mass = 1.0;
  uniform.n_samples = 0;
  const auto uniform_nll =
      evaluate_prediction([](const FeatureMap& f) { return std::vector<double>(f.spec.num_cells(), 1.0); },
                          suite.tests, uniform)
          .mean_nll;

  CostmapProvider base = [&](const FeatureMap& f) { return handcrafted_cost(f, cfg.baseline); };
  const auto base_clean = evaluate_model("baseline", base, suite, clean, cfg.planner);
  std::printf("  uniform policy NLL %.3f\n  %s\n", uniform_nll, base_clean.text().c_str());
  std::fflush(stdout);

  std::vector<TrainedModel> models;
  std::ostringstream csv;
  csv << "architecture,seed,mean_nll,mean_mhd,n_unreachable,seconds\n";
  for (auto arch : {ArchitectureId::StandardFcn, ArchitectureId::MsFcn})
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto tc = cfg.train;
      tc.architecture = arch;
      tc.seed = seed;
      const auto t1 = Clock::now();
      auto res = train(tc, ds);
      const auto pred =
          evaluate_prediction([&](const FeatureMap& f) { return infer_costmap(res.net, f); }, suite.tests, cfg.planner);
      const double secs = seconds_since(t1);
      std::printf("  %s seed %llu: NLL %.3f, MHD %.3f m, %d unreachable, %.0f s\n", to_string(arch).c_str(),
                  static_cast<unsigned long long>(seed), pred.mean_nll, pred.mean_mhd, pred.n_unreachable, secs);
      std::fflush(stdout);
      csv << to_string(arch) << ',' << seed << ',' << pred.mean_nll << ',' << pred.mean_mhd << ','
          << pred.n_unreachable << ',' << secs << '\n';
      models.push_back({arch, seed, std::move(res.net), pred.mean_nll, pred.mean_mhd});
    }
  io::write_file(work / "learning_runs.csv", csv.str());

  auto nlls = [&](ArchitectureId a) {
    std::vector<double> v;
    for (const auto& m : models)
      if (m.arch == a) v.push_back(m.nll);
    return v;
  };
  const double std_med = median(nlls(ArchitectureId::StandardFcn));
  const double ms_med = median(nlls(ArchitectureId::MsFcn));
  const double std_below = 1.0 - std_med / uniform_nll;
  report(4, std_below >= 0.30 && std_med < base_clean.mean_nll && ms_med <= std_med,
         fmt("median standard FCN NLL %.3f is %.1f%% below uniform %.3f (need >= 30%%) and %s baseline %.3f; median "
             "MS-FCN NLL %.3f %s standard %.3f; total %.0f s (limit 1800 s)",
             std_med, 100.0 * std_below, uniform_nll, std_med < base_clean.mean_nll ? "below" : "NOT below",
             base_clean.mean_nll, ms_med, ms_med <= std_med ? "<=" : ">", std_med, seconds_since(t0)));

  // The MS-FCN run with the median NLL is the model under test for 5 and 6.
  std::vector<TrainedModel*> ms;
  for (auto& m : models)
    if (m.arch == ArchitectureId::MsFcn) ms.push_back(&m);
  std::sort(ms.begin(), ms.end(), [](auto* a, auto* b) { return a->nll < b->nll; });
  TrainedModel& chosen = *ms[ms.size() / 2];
  save_checkpoint(chosen.net, CheckpointInfo{chosen.arch, cfg.train.n_steps, chosen.seed, cfg.dataset.grid.resolution_m},
                  work / "ms_fcn_median");
  CostmapProvider learned = [&](const FeatureMap& f) { return infer_costmap(chosen.net, f); };
  const auto learned_clean = evaluate_model("ms_fcn", learned, suite, clean, cfg.planner);
  std::printf("  MS-FCN seed %llu (median)\n  %s\n", static_cast<unsigned long long>(chosen.seed),
              learned_clean.text().c_str());

  report(5,
         learned_clean.fnr < base_clean.fnr && learned_clean.fpr == 0.0 && base_clean.fpr == 0.0 &&
             learned_clean.holdout_fpr <= 0.05,
         fmt("zero-FPR threshold on %zu free trajectories: MS-FCN FNR %.3f vs baseline %.3f over %d collisions; "
             "hold-out FPR %.3f (<= 0.05), baseline hold-out FPR %.3f",
             suite.calibration_free.size(), learned_clean.fnr, base_clean.fnr, learned_clean.n_collisions,
             learned_clean.holdout_fpr, base_clean.holdout_fpr));

  const auto rob = robustness_experiment(learned, cfg.baseline, ds, suite, 1.0, cfg.planner);
  std::printf("  pitch error 1 deg\n  %s\n  %s\n", rob.learned.text().c_str(), rob.baseline.text().c_str());
  io::write_file(work / "robustness.csv",
                 reports_csv(std::vector<EvalReport>{learned_clean, base_clean, rob.learned, rob.baseline}));
  const bool degrade = rob.baseline.fnr >= 1.5 * base_clean.fnr;
  report(6, degrade && rob.learned.fnr < rob.baseline.fnr && rob.learned.mean_nll < rob.baseline.mean_nll,
         fmt("1 deg pitch error: baseline FNR %.3f -> %.3f (x%.2f, need >= 1.5); learned FNR %.3f vs baseline %.3f; "
             "learned NLL %.3f vs baseline %.3f",
             base_clean.fnr, rob.baseline.fnr, base_clean.fnr > 0 ? rob.baseline.fnr / base_clean.fnr : INFINITY,
             rob.learned.fnr, rob.baseline.fnr, rob.learned.mean_nll, rob.baseline.mean_nll));
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "deepirl_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workdir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: acceptance [--workdir DIR] [--only N,...]\n");
      return 1;
    }
  }
  fs::create_directories(work);
  auto want = [&](int id) { return only.empty() || only.count(id); };

  const std::vector<std::pair<std::vector<int>, std::function<void()>>> steps = {
      {{1}, criterion_oracle},
      {{2}, criterion_gradients},
      {{3}, criterion_fixed_point},
      {{7}, criterion_metrics},
      {{8}, [&] { criterion_determinism(work); }},
      {{4, 5, 6}, [&] { criteria_learning(work); }},
  };
  for (const auto& [ids, run] : steps) {
    if (!std::any_of(ids.begin(), ids.end(), want)) continue;
    try {
      run();
    } catch (const std::exception& e) {
      for (int id : ids)
        if (std::none_of(verdicts.begin(), verdicts.end(), [&](const Verdict& v) { return v.id == id; }))
          report(id, false, std::string("aborted: ") + e.what());
    }
  }

  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  int failed = 0;
  std::printf("\nsummary\n");
  for (const auto& v : verdicts) {
    std::printf("  criterion %d %s\n", v.id, v.pass ? "PASS" : "FAIL");
    failed += !v.pass;
  }
  return failed ? 1 : 0;
}
