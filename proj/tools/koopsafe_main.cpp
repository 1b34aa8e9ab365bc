// Command-line front end: data generation, training, safety-index tuning,
// operator fine-tuning, closed-loop runs, model comparison, benchmarking,
// and plot emission. Exit codes: 0 success, 2 validation error, 3 aborted
// episode.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>

#include "ksc/configfile.hpp"
#include "ksc/csv.hpp"
#include "ksc/floatbase.hpp"
#include "ksc/kinematics.hpp"
#include "ksc/koopman.hpp"
#include "ksc/scenario.hpp"
#include "ksc/svg.hpp"
#include "ksc/tuner.hpp"

namespace fs = std::filesystem;
using namespace ksc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitAborted = 3;

struct CommonArgs {
  std::string config;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  bool real_timing = false;
};

ConfigNode load_config(const CommonArgs& args) {
  if (args.config.empty())
    throw std::invalid_argument("missing --config file");
  return ConfigNode::parse_file(args.config);
}

SerialChain chain_from_node(const ConfigNode& c) {
  SerialChain chain;
  chain.axis_mode = c.get_string("axis", "planar") == "planar"
                        ? AxisMode::kPlanarZ
                        : AxisMode::kAlternating3D;
  chain.link_lengths = c.child("lengths").as_doubles();
  chain.collision_radii = c.child("radii").as_doubles();
  const double u_limit = c.get_double("u_limit", 1.5);
  chain.u_min = Vec::Constant(chain.joint_count(), -u_limit);
  chain.u_max = Vec::Constant(chain.joint_count(), u_limit);
  chain.validate();
  return chain;
}

int cmd_gen_data(const CommonArgs& args) {
  const ConfigNode root = load_config(args);
  const ConfigNode& d = root.child("dataset");
  const SerialChain chain = chain_from_node(root.child("chain"));
  const std::uint64_t seed =
      args.seed.value_or(static_cast<std::uint64_t>(d.get_int("seed", 1)));
  Vec q_lo, q_hi;
  if (d.has("q_lo")) {
    const auto v = d.child("q_lo").as_doubles();
    q_lo = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (d.has("q_hi")) {
    const auto v = d.child("q_hi").as_doubles();
    q_hi = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  const Dataset ds = sample_dataset(
      chain, static_cast<int>(d.get_int("trajectories", 100)),
      static_cast<int>(d.get_int("horizon", 40)), d.get_double("dt", 0.02), seed,
      d.get_double("alpha", 0.7), q_lo, q_hi);
  fs::create_directories(args.out_dir);
  save_dataset(ds, chain, args.out_dir);
  std::cout << "wrote " << ds.trajectories.size() << " trajectories to "
            << args.out_dir << "\n";
  return kExitOk;
}

TrainConfig train_config_from(const ConfigNode& t, std::optional<std::uint64_t> seed) {
  TrainConfig cfg;
  cfg.k_steps = static_cast<int>(t.get_int("k", 5));
  cfg.gamma = t.get_double("gamma", 0.9);
  cfg.learning_rate = t.get_double("lr", 1e-3);
  cfg.lr_decay = t.get_double("lr_decay", 1.0);
  cfg.batch_size = static_cast<int>(t.get_int("batch", 64));
  cfg.epochs = static_cast<int>(t.get_int("epochs", 30));
  cfg.seed = seed.value_or(static_cast<std::uint64_t>(t.get_int("seed", 1)));
  return cfg;
}

int cmd_train(const CommonArgs& args) {
  const ConfigNode root = load_config(args);
  const ConfigNode& t = root.child("train");
  const TrainConfig cfg = train_config_from(t, args.seed);

  std::vector<int> hidden{64, 64};
  if (t.has("hidden")) {
    hidden.clear();
    for (const auto& tok : t.child("hidden").tokens()) hidden.push_back(std::stoi(tok));
  }
  const int latent = static_cast<int>(t.get_int("latent", 16));

  std::vector<Window> windows;
  KoopmanModel model;
  if (t.has("floating")) {
    // The floating plant is excited in-process; its predictive-state windows
    // have no CSV dataset form.
    const ConfigNode& f = t.child("floating");
    FloatingChain chain;
    chain.arm = chain_from_node(f);
    chain.base_radius = f.get_double("base_radius", 0.15);
    const auto tmin = f.child("twist_min").as_doubles();
    const auto tmax = f.child("twist_max").as_doubles();
    chain.twist_min = Eigen::Map<const Vec>(tmin.data(), 2);
    chain.twist_max = Eigen::Map<const Vec>(tmax.data(), 2);
    chain.validate();
    const double dt = f.get_double("dt", 0.02);
    windows = sample_floating_windows(
        chain, static_cast<int>(f.get_int("trajectories", 250)),
        static_cast<int>(f.get_int("horizon", 60)), cfg.k_steps, dt,
        cfg.seed, f.get_double("alpha_arm", 0.9), f.get_double("alpha_base", 0.6));
    model = KoopmanModel::create(chain.state_dim(), chain.control_dim(), 0, hidden,
                                 latent, dt, cfg.seed);
    model.B.setZero();
    for (int i = 0; i < chain.arm_joints(); ++i) model.B(i, i) = dt;
    model.chain = chain.arm;
  } else {
    SerialChain chain;
    const Dataset ds = load_dataset(t.child("data").as_string(), &chain);
    windows = make_windows(ds, cfg.k_steps);
    model = KoopmanModel::create(chain.state_dim(), chain.joint_count(),
                                 chain.workspace_dim(), hidden, latent, ds.dt, cfg.seed);
    model.chain = chain;
  }
  fit_standardization(model, windows);
  const TrainResult result = train(std::move(model), windows, cfg);

  fs::create_directories(args.out_dir);
  save_model(result.model, args.out_dir + "/model.txt");
  csv::Table hist;
  hist.header = {"epoch", "loss"};
  for (std::size_t e = 0; e < result.loss_history.size(); ++e)
    hist.rows.push_back({std::to_string(e), csv::cell(result.loss_history[e])});
  csv::write_file(args.out_dir + "/loss_history.csv", hist);
  std::cout << "trained model on " << windows.size() << " windows, final loss "
            << (result.loss_history.empty() ? 0.0 : result.loss_history.back())
            << "\n";
  return kExitOk;
}

int cmd_tune_safety(const CommonArgs& args) {
  const ConfigNode root = load_config(args);
  const ConfigNode& t = root.child("tune");
  KoopmanModel model = load_model(t.child("model").as_string());
  if (!model.chain.has_value())
    throw std::invalid_argument("tune-safety: model file carries no chain metadata");
  if (t.has("model_drift_inject")) {
    model = make_infeasibility_prone(
        model, model.chain->workspace_dim(), model.chain->joint_count(),
        t.child("model_drift_inject").as_double(),
        t.get_double("model_authority_scale", 1.0),
        static_cast<std::uint64_t>(t.get_int("model_inject_seed", 777)));
  }

  const std::vector<double> oc = t.child("obstacle").as_doubles();
  const Obstacle obstacle = Obstacle::fixed(
      Eigen::Map<const Vec>(oc.data(), static_cast<Eigen::Index>(oc.size())));

  TunerConfig cfg;
  cfg.gamma0.n = t.get_double("n0", 1.0);
  cfg.gamma0.beta = t.get_double("beta0", 0.1);
  cfg.gamma0.d_min = t.get_double("d_min", 0.2);
  cfg.mu = t.get_double("mu", 0.01);
  cfg.n_batch = static_cast<int>(t.get_int("n_batch", 50));
  cfg.n_trials = static_cast<int>(t.get_int("n_trials", 10));
  cfg.samples_per_trial = static_cast<int>(t.get_int("samples_per_trial", 64));
  cfg.critic_step = t.get_double("critic_step", 0.05);
  cfg.learner_step = t.get_double("learner_step", 0.01);
  cfg.max_rounds = static_cast<int>(t.get_int("max_rounds", 100));
  cfg.seed = args.seed.value_or(static_cast<std::uint64_t>(t.get_int("seed", 1)));
  if (t.has("q_lo")) {
    const auto v = t.child("q_lo").as_doubles();
    cfg.q_lo = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (t.has("q_hi")) {
    const auto v = t.child("q_hi").as_doubles();
    cfg.q_hi = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  const TuneResult result = tune(model, *model.chain, obstacle, cfg);
  fs::create_directories(args.out_dir);
  save_gamma(result.gamma, args.out_dir + "/gamma.txt");
  write_audit_csv(result.audit, args.out_dir + "/tuning_audit.csv");
  std::cout << "tuned gamma: n=" << result.gamma.n << " beta=" << result.gamma.beta
            << " rounds=" << result.audit.size()
            << (result.exhausted ? " (critic exhausted)" : " (round cap)") << "\n";
  return kExitOk;
}

int cmd_finetune(const CommonArgs& args) {
  const ConfigNode root = load_config(args);
  const ConfigNode& t = root.child("finetune");
  KoopmanModel model = load_model(t.child("model").as_string());
  const Dataset ds = load_dataset(t.child("data").as_string());
  TrainConfig cfg = train_config_from(t, args.seed);

  const auto windows = make_windows(ds, cfg.k_steps);
  // Hold out a deterministic slice for the before/after report.
  std::vector<Window> train_set, held;
  for (std::size_t i = 0; i < windows.size(); ++i)
    (i % 5 == 0 ? held : train_set).push_back(windows[i]);
  if (held.empty() || train_set.empty())
    throw std::invalid_argument("finetune: dataset too small");

  const double before = one_step_error(model, held);
  std::vector<double> before_errors;
  for (const Window& w : held) before_errors.push_back(one_step_error(model, {w}));

  const TrainResult result = finetune_operators(std::move(model), train_set, cfg);
  const double after = one_step_error(result.model, held);
  std::vector<double> after_errors;
  for (const Window& w : held) after_errors.push_back(one_step_error(result.model, {w}));

  fs::create_directories(args.out_dir);
  save_model(result.model, args.out_dir + "/model_finetuned.txt");
  csv::Table report;
  report.header = {"window", "error_before", "error_after"};
  for (std::size_t i = 0; i < before_errors.size(); ++i)
    report.rows.push_back({std::to_string(i), csv::cell(before_errors[i]),
                           csv::cell(after_errors[i])});
  csv::write_file(args.out_dir + "/adaptation_report.csv", report);
  std::cout << "one-step error " << before << " -> " << after << " over "
            << held.size() << " held-out windows\n";
  return kExitOk;
}

int cmd_run(const CommonArgs& args) {
  const ConfigNode root = load_config(args);
  ScenarioConfig scenario = parse_scenario(root);
  if (args.seed.has_value()) scenario.seeds = {*args.seed};
  scenario.validate();

  const ScenarioResult result = run_scenario(scenario);
  fs::create_directories(args.out_dir);
  for (std::size_t i = 0; i < result.per_seed.size(); ++i) {
    const std::string path = args.out_dir + "/steps_seed" +
                             std::to_string(scenario.seeds[i]) + ".csv";
    write_step_log(result.per_seed[i].steps, path, args.real_timing);
  }
  write_metrics_csv(scenario, result, args.out_dir + "/metrics.csv", args.real_timing);
  std::cout << "scenario " << scenario.name << " ("
            << to_string(scenario.controller) << "): infeasible "
            << result.aggregate.infeasible_count << "/" << result.aggregate.total_steps
            << ", avg dist to target " << result.aggregate.avg_dist_target
            << ", min dist " << result.aggregate.min_dist_overall << "\n";
  return result.aggregate.aborted ? kExitAborted : kExitOk;
}

int cmd_compare(const CommonArgs& args) {
  const ConfigNode root = load_config(args);
  const ConfigNode& c = root.child("compare");
  SerialChain chain;
  const Dataset ds = load_dataset(c.child("data").as_string(), &chain);

  std::vector<int> horizons{1, 5, 10, 20, 50};
  if (c.has("horizons")) {
    horizons.clear();
    for (const auto& tok : c.child("horizons").tokens()) horizons.push_back(std::stoi(tok));
  }
  const int max_h = *std::max_element(horizons.begin(), horizons.end());
  const auto windows = make_windows(ds, max_h);

  Vec q_star = Vec::Zero(chain.joint_count());
  if (c.has("q_star")) {
    const auto v = c.child("q_star").as_doubles();
    q_star = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  std::vector<std::pair<std::string, ModelPredictor>> models;
  int kdm_index = 0;
  for (const ConfigNode* m : c.children("model")) {
    const KoopmanModel model = load_model(m->as_string());
    const std::string name = kdm_index == 0 ? "kdm" : "kdm" + std::to_string(kdm_index);
    models.emplace_back(name, predictor_kdm(model));
    ++kdm_index;
  }
  models.emplace_back("lti", predictor_lti(chain, q_star, ds.dt));
  models.emplace_back("ltv", predictor_ltv(chain, ds.dt));

  const CompareResult result = compare_models(models, windows, horizons);
  fs::create_directories(args.out_dir);
  write_compare_csv(result, args.out_dir + "/compare.csv");
  svg::write_file(args.out_dir + "/compare.svg", compare_svg(result));
  for (std::size_t i = 0; i < result.names.size(); ++i) {
    std::cout << result.names[i] << ":";
    for (std::size_t j = 0; j < horizons.size(); ++j)
      std::cout << " h" << horizons[j] << "="
                << result.errors(static_cast<int>(i), static_cast<int>(j));
    std::cout << "\n";
  }
  return kExitOk;
}

int cmd_bench(const CommonArgs& args) {
  const ConfigNode root = load_config(args);
  ScenarioConfig scenario = parse_scenario(root);
  if (args.seed.has_value()) scenario.seeds = {*args.seed};

  std::vector<std::string> controllers{"kmpc", "nmpc"};
  if (root.has("bench")) {
    const ConfigNode& b = root.child("bench");
    if (b.has("controllers")) controllers = b.child("controllers").tokens();
    if (b.has("steps"))
      scenario.episode_steps = static_cast<int>(b.child("steps").as_int());
  }

  fs::create_directories(args.out_dir);
  std::string report = "solve-time benchmark: scenario " + scenario.name + ", " +
                       std::to_string(scenario.episode_steps) + " steps\n";
  csv::Table table;
  table.header = {"controller", "infeasible", "avg_dist_target", "cumulative_cost"};
  for (const std::string& name : controllers) {
    ScenarioConfig run_cfg = scenario;
    run_cfg.controller = controller_from_string(name);
    run_cfg.validate();
    const ScenarioResult result = run_scenario(run_cfg);
    char line[160];
    std::snprintf(line, sizeof(line), "%-6s  solve %.3f +- %.3f ms per step\n",
                  name.c_str(), result.aggregate.solve_ms_mean,
                  result.aggregate.solve_ms_std);
    report += line;
    table.rows.push_back({name, std::to_string(result.aggregate.infeasible_count),
                          csv::cell(result.aggregate.avg_dist_target),
                          csv::cell(result.aggregate.cumulative_cost)});
  }
  std::ofstream(args.out_dir + "/timings.txt") << report;
  csv::write_file(args.out_dir + "/bench.csv", table);
  std::cout << report;
  return kExitOk;
}

int cmd_plot(const CommonArgs& args) {
  const ConfigNode root = load_config(args);
  const ConfigNode& p = root.child("plot");
  fs::create_directories(args.out_dir);

  ScenarioConfig scenario;
  bool have_scenario = false;
  if (root.has("scenario")) {
    scenario = parse_scenario(root);
    have_scenario = true;
  }

  int index = 0;
  for (const ConfigNode* log : p.children("log")) {
    const auto steps = read_step_log(log->as_string());
    if (steps.empty()) throw std::invalid_argument("plot: empty log " + log->as_string());
    const std::string suffix = index == 0 ? "" : "_" + std::to_string(index);
    svg::write_file(args.out_dir + "/trajectory" + suffix + ".svg",
                    trajectory_svg(steps, have_scenario ? scenario : ScenarioConfig{}));
    svg::write_file(args.out_dir + "/phi" + suffix + ".svg", phi_svg(steps));
    ++index;
  }

  for (const ConfigNode* errors : p.children("errors")) {
    const csv::Table table = csv::read_file(errors->as_string());
    const int cb = table.column("error_before");
    const int ca = table.column("error_after");
    if (cb < 0 || ca < 0)
      throw std::invalid_argument("plot: errors file lacks before/after columns");
    std::vector<double> before, after;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      before.push_back(table.number(r, cb));
      after.push_back(table.number(r, ca));
    }
    svg::write_file(args.out_dir + "/error_histogram.svg",
                    svg::histogram_plot("one-step prediction error", before, after, 24,
                                        "before", "after"));
  }
  std::cout << "plots written to " << args.out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"koopsafe: Koopman lifted-model safe MPC workbench"};
  app.require_subcommand(1);

  CommonArgs args;
  std::uint64_t seed_arg = 0;
  bool seed_set = false;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", args.config, "configuration file");
    cmd->add_option("--out-dir", args.out_dir, "output directory");
    auto* opt = cmd->add_option("--seed", seed_arg, "seed override");
    opt->each([&seed_set](const std::string&) { seed_set = true; });
    cmd->add_flag("--real-timing", args.real_timing,
                  "write wall-clock solve times into CSV outputs (breaks byte "
                  "determinism across reruns)");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "sample excitation trajectories");
  CLI::App* train_cmd = app.add_subcommand("train", "train the lifted linear model");
  CLI::App* tune_cmd =
      app.add_subcommand("tune-safety", "adversarially tune the safety index");
  CLI::App* fine = app.add_subcommand("finetune", "adapt operators to new data");
  CLI::App* run_cmd = app.add_subcommand("run", "run a closed-loop scenario");
  CLI::App* cmp = app.add_subcommand("compare", "prediction error vs horizon");
  CLI::App* bench = app.add_subcommand("bench", "per-controller solve timing");
  CLI::App* plot = app.add_subcommand("plot", "emit SVG plots from step logs");
  for (CLI::App* cmd : {gen, train_cmd, tune_cmd, fine, run_cmd, cmp, bench, plot})
    add_common(cmd);

  CLI11_PARSE(app, argc, argv);
  if (seed_set) args.seed = seed_arg;

  try {
    if (gen->parsed()) return cmd_gen_data(args);
    if (train_cmd->parsed()) return cmd_train(args);
    if (tune_cmd->parsed()) return cmd_tune_safety(args);
    if (fine->parsed()) return cmd_finetune(args);
    if (run_cmd->parsed()) return cmd_run(args);
    if (cmp->parsed()) return cmd_compare(args);
    if (bench->parsed()) return cmd_bench(args);
    if (plot->parsed()) return cmd_plot(args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
