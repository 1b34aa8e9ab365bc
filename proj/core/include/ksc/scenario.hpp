#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ksc/configfile.hpp"
#include "ksc/floatbase.hpp"
#include "ksc/koopman.hpp"
#include "ksc/mpc.hpp"
#include "ksc/tuner.hpp"

namespace ksc {

enum class ControllerKind { kKmpc, kLti, kLtv, kNmpc };
enum class ReferenceKind { kFixed, kLine, kCircle, kSine, kStar, kSpiral };

std::string to_string(ControllerKind k);
ControllerKind controller_from_string(const std::string& s);

struct ReferenceSpec {
  ReferenceKind kind = ReferenceKind::kFixed;
  Vec center;           // workspace anchor
  double scale = 0.3;   // amplitude [m]
  double period = 600;  // steps per cycle
  Vec direction;        // for line references
};

// Workspace reference point at a step index.
Vec reference_point(const ReferenceSpec& spec, int step, int workspace_dim);

struct ObstacleSpec {
  Obstacle obstacle;
  int chase_link = -1;      // >= 0: chases that collision sphere
  double chase_speed = 0.0; // [m/s]
};

struct ScenarioConfig {
  std::string name = "scenario";
  bool floating = false;

  // Fixed-base fields.
  SerialChain chain;
  Vec q0;
  Vec q_star;  // LTI linearization configuration

  // Floating-base fields (used when floating = true).
  FloatingChain floating_chain;
  bool base_twist_in_decision = false;

  std::vector<ObstacleSpec> obstacles;
  ReferenceSpec reference;
  ControllerKind controller = ControllerKind::kKmpc;
  int episode_steps = 1000;
  std::vector<std::uint64_t> seeds{1};
  MpcConfig mpc;
  SafetyIndexParams gamma{1.0, 0.1, 0.2};
  double plant_alpha = 1.0;
  ShootingConfig shooting;
  std::optional<KoopmanModel> model;

  void validate() const;
};

struct ControllerStep {
  int t = 0;
  QpStatus status = QpStatus::kSolved;
  bool counted_infeasible = false;
  double solve_ms = 0.0;
  double tracking_cost = 0.0;  // per-step weighted squared error
  double max_phi = 0.0;        // geometric phi0 across links (and obstacles)
  double mean_phi = 0.0;
  double min_dist = 0.0;
  Vec u;
  double slack_total = 0.0;
  Vec p;      // tracked point (workspace), or base position when floating
  Vec p_des;  // workspace reference
  std::vector<double> link_phi;
  Vec base_pose;  // (x, y, heading) for floating scenarios, empty otherwise
};

struct MetricsRecord {
  int infeasible_count = 0;
  int total_steps = 0;
  double avg_dist_target = 0.0;
  double avg_max_phi = 0.0;
  double avg_mean_phi = 0.0;
  double avg_min_dist = 0.0;
  double min_dist_overall = 0.0;
  double cumulative_cost = 0.0;
  double solve_ms_mean = 0.0;
  double solve_ms_std = 0.0;
  bool aborted = false;
};

MetricsRecord aggregate_metrics(const std::vector<ControllerStep>& steps);

struct EpisodeResult {
  std::vector<ControllerStep> steps;
  MetricsRecord metrics;
};

// Closed loop at fixed dt for one seed. The seed drives the shooting sampler
// and any scenario randomness; QP-based controllers are deterministic anyway.
EpisodeResult run_controller(ControllerKind kind, const ScenarioConfig& scenario,
                             std::uint64_t seed);

struct ScenarioResult {
  std::vector<EpisodeResult> per_seed;
  MetricsRecord aggregate;  // averages over seeds, counts summed
};

ScenarioResult run_scenario(const ScenarioConfig& scenario);

// --- model comparison --------------------------------------------------

using ModelPredictor = std::function<Vec(const Vec& x0, const Mat& controls)>;

ModelPredictor predictor_kdm(const KoopmanModel& model);
ModelPredictor predictor_lti(const SerialChain& chain, const Vec& q_star, double dt);
ModelPredictor predictor_ltv(const SerialChain& chain, double dt);

struct CompareResult {
  std::vector<std::string> names;
  std::vector<int> horizons;
  Mat errors;  // names x horizons, mean state-prediction error
};

CompareResult compare_models(
    const std::vector<std::pair<std::string, ModelPredictor>>& models,
    const std::vector<Window>& windows, const std::vector<int>& horizons);

void write_compare_csv(const CompareResult& result, const std::string& path);
std::string compare_svg(const CompareResult& result);

// --- persistence and plots ----------------------------------------------

// Per-step log CSV: t, status, solve_ms, cost, max_phi, mean_phi, min_dist,
// u_1..u_m, slack_total (+ base pose columns for floating scenarios). Timing
// columns carry the deterministic placeholder unless real_timing is set.
void write_step_log(const std::vector<ControllerStep>& steps, const std::string& path,
                    bool real_timing = false);
std::vector<ControllerStep> read_step_log(const std::string& path);

void write_metrics_csv(const ScenarioConfig& scenario, const ScenarioResult& result,
                       const std::string& path, bool real_timing = false);

std::string trajectory_svg(const std::vector<ControllerStep>& steps,
                           const ScenarioConfig& scenario);
std::string phi_svg(const std::vector<ControllerStep>& steps);

// --- configuration ------------------------------------------------------

// Built-in scenario presets (s1..s5); throws on unknown name.
ScenarioConfig scenario_preset(const std::string& name);

// Parse a scenario block, starting from its preset when one is named.
ScenarioConfig parse_scenario(const ConfigNode& root);

}  // namespace ksc
