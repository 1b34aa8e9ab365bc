#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ksc/scenario.hpp"
#include "ksc/svg.hpp"
#include "oracles.hpp"

using namespace ksc;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ScenarioConfig regulation_scenario() {
  ScenarioConfig s = scenario_preset("s1");
  s.episode_steps = 200;
  s.seeds = {3};
  return s;
}

}  // namespace

TEST_CASE("presets validate and stay inside the workspace") {
  for (const char* name : {"s1", "s2", "s3"}) {
    ScenarioConfig s = scenario_preset(name);
    s.controller = ControllerKind::kLtv;  // avoid the model requirement
    CHECK_NOTHROW(s.validate());
  }
}

TEST_CASE("obstacle-free regulation settles to negligible cost") {
  ScenarioConfig s = regulation_scenario();
  const EpisodeResult ep = run_controller(ControllerKind::kLtv, s, 3);
  REQUIRE(!ep.metrics.aborted);
  CHECK(ep.metrics.infeasible_count == 0);
  // Cumulative cost over the settled second half of the episode.
  double tail_cost = 0.0;
  for (std::size_t i = ep.steps.size() / 2; i < ep.steps.size(); ++i)
    tail_cost += ep.steps[i].tracking_cost;
  CHECK(tail_cost < 1e-6);
}

TEST_CASE("episodes are deterministic per seed and config") {
  ScenarioConfig s = regulation_scenario();
  const EpisodeResult a = run_controller(ControllerKind::kLtv, s, 11);
  const EpisodeResult b = run_controller(ControllerKind::kLtv, s, 11);
  REQUIRE(a.steps.size() == b.steps.size());
  CHECK(a.metrics.infeasible_count == b.metrics.infeasible_count);
  CHECK(a.metrics.cumulative_cost == b.metrics.cumulative_cost);
  CHECK(a.metrics.avg_dist_target == b.metrics.avg_dist_target);
  for (std::size_t i = 0; i < a.steps.size(); ++i)
    CHECK((a.steps[i].u - b.steps[i].u).norm() == 0.0);
}

TEST_CASE("applied controls respect the box limits") {
  ScenarioConfig s = scenario_preset("s2");
  s.controller = ControllerKind::kLtv;
  s.episode_steps = 150;
  const EpisodeResult ep = run_controller(ControllerKind::kLtv, s, 5);
  for (const ControllerStep& step : ep.steps) {
    CHECK((step.u.array() <= s.chain.u_max.array() + 1e-12).all());
    CHECK((step.u.array() >= s.chain.u_min.array() - 1e-12).all());
  }
}

TEST_CASE("metrics are recomputable from the persisted log") {
  ScenarioConfig s = regulation_scenario();
  const EpisodeResult ep = run_controller(ControllerKind::kLtv, s, 7);
  const std::string path = "harness_steps.csv";
  write_step_log(ep.steps, path, /*real_timing=*/true);
  const auto restored = read_step_log(path);
  REQUIRE(restored.size() == ep.steps.size());
  const MetricsRecord recomputed = aggregate_metrics(restored);
  const MetricsRecord original = aggregate_metrics(ep.steps);
  CHECK(recomputed.infeasible_count == original.infeasible_count);
  CHECK(recomputed.cumulative_cost == original.cumulative_cost);
  CHECK(recomputed.avg_max_phi == original.avg_max_phi);
  CHECK(recomputed.avg_min_dist == original.avg_min_dist);
  CHECK(recomputed.solve_ms_mean == original.solve_ms_mean);
  std::filesystem::remove(path);
}

TEST_CASE("step logs are byte-stable") {
  ScenarioConfig s = regulation_scenario();
  const EpisodeResult ep = run_controller(ControllerKind::kLtv, s, 9);
  write_step_log(ep.steps, "log_a.csv");
  write_step_log(ep.steps, "log_b.csv");
  CHECK(slurp("log_a.csv") == slurp("log_b.csv"));
  std::filesystem::remove("log_a.csv");
  std::filesystem::remove("log_b.csv");
}

TEST_CASE("seed aggregation is order-independent") {
  ScenarioConfig s = regulation_scenario();
  s.episode_steps = 60;
  s.seeds = {1, 2, 3};
  const ScenarioResult fwd = run_scenario(s);
  s.seeds = {3, 1, 2};
  const ScenarioResult rev = run_scenario(s);
  CHECK(fwd.aggregate.infeasible_count == rev.aggregate.infeasible_count);
  CHECK(fwd.aggregate.cumulative_cost ==
        doctest::Approx(rev.aggregate.cumulative_cost).epsilon(1e-12));
}

TEST_CASE("identical models produce identical comparison rows") {
  const auto chain = SerialChain::planar(3, {0.6, 0.5, 0.4}, {0.05, 0.05, 0.05}, 1.5);
  const Dataset ds = sample_dataset(chain, 20, 30, 0.02, 5, 1.0);
  const auto windows = make_windows(ds, 20);
  KoopmanModel model = KoopmanModel::create(5, 3, 2, {6}, 4, 0.02, 3);
  const CompareResult out = compare_models(
      {{"kdm_a", predictor_kdm(model)}, {"kdm_b", predictor_kdm(model)}}, windows,
      {1, 5, 10, 20});
  for (int j = 0; j < 4; ++j) CHECK(out.errors(0, j) == out.errors(1, j));
}

TEST_CASE("exact operators report zero error on the exactly linear plant") {
  // Joint-only windows at alpha = 1 follow q' = q + dt u exactly, and the
  // raw model is the exact integrator on the joint block.
  const auto chain = SerialChain::planar(2, {0.8, 0.6}, {0.05, 0.05}, 1.5);
  const Dataset ds = sample_dataset(chain, 10, 30, 0.02, 7, 1.0);
  const auto windows = make_windows(ds, 20, StateMode::kJointsOnly);
  const KoopmanModel model = KoopmanModel::create(2, 2, 0, {4}, 2, 0.02, 3);
  const CompareResult out =
      compare_models({{"kdm", predictor_kdm(model)}}, windows, {1, 5, 20});
  for (int j = 0; j < 3; ++j) CHECK(out.errors(0, j) < 1e-10);
}

TEST_CASE("LTI frozen far from the data drifts more than LTV") {
  const auto chain = SerialChain::planar(3, {0.6, 0.5, 0.4}, {0.05, 0.05, 0.05}, 1.5);
  const Dataset ds = sample_dataset(chain, 30, 40, 0.02, 11, 1.0);
  const auto windows = make_windows(ds, 20);
  const Vec q_star = Vec::Zero(3);  // far from most sampled configurations
  const CompareResult out = compare_models({{"lti", predictor_lti(chain, q_star, 0.02)},
                                            {"ltv", predictor_ltv(chain, 0.02)}},
                                           windows, {20});
  CHECK(out.errors(0, 0) > out.errors(1, 0));
}

TEST_CASE("comparison artifacts are deterministic") {
  const auto chain = SerialChain::planar(2, {0.8, 0.6}, {0.05, 0.05}, 1.5);
  const Dataset ds = sample_dataset(chain, 5, 25, 0.02, 13, 1.0);
  const auto windows = make_windows(ds, 20);
  const CompareResult out =
      compare_models({{"ltv", predictor_ltv(chain, 0.02)}}, windows, {1, 5, 20});
  write_compare_csv(out, "cmp_a.csv");
  write_compare_csv(out, "cmp_b.csv");
  CHECK(slurp("cmp_a.csv") == slurp("cmp_b.csv"));
  const std::string svg_a = compare_svg(out);
  const std::string svg_b = compare_svg(out);
  CHECK(svg_a == svg_b);
  std::filesystem::remove("cmp_a.csv");
  std::filesystem::remove("cmp_b.csv");
}

TEST_CASE("plots omit the unsafe layer without obstacles") {
  ScenarioConfig s = regulation_scenario();
  const EpisodeResult ep = run_controller(ControllerKind::kLtv, s, 3);
  const std::string svg = trajectory_svg(ep.steps, s);
  CHECK(svg.find("<circle") == std::string::npos);

  ScenarioConfig with_obs = scenario_preset("s2");
  with_obs.controller = ControllerKind::kLtv;
  with_obs.episode_steps = 50;
  const EpisodeResult ep2 = run_controller(ControllerKind::kLtv, with_obs, 3);
  const std::string svg2 = trajectory_svg(ep2.steps, with_obs);
  CHECK(svg2.find("<circle") != std::string::npos);
}

TEST_CASE("identical logs render byte-identical SVGs") {
  ScenarioConfig s = regulation_scenario();
  const EpisodeResult ep = run_controller(ControllerKind::kLtv, s, 3);
  CHECK(trajectory_svg(ep.steps, s) == trajectory_svg(ep.steps, s));
  CHECK(phi_svg(ep.steps) == phi_svg(ep.steps));
}

TEST_CASE("histogram bin counts match an independent recount") {
  Rng rng(17);
  std::vector<double> values;
  for (int i = 0; i < 500; ++i) values.push_back(rng.normal());
  const int bins = 24;
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const std::vector<int> counts = svg::histogram_counts(values, bins, lo, hi);
  // Independent recount.
  std::vector<int> expect(bins, 0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    if (b >= bins) b = bins - 1;
    if (b < 0) b = 0;
    expect[b]++;
  }
  int total = 0;
  for (int i = 0; i < bins; ++i) {
    CHECK(counts[i] == expect[i]);
    total += counts[i];
  }
  CHECK(total == 500);
}

TEST_CASE("scenario config files parse with preset overrides") {
  const std::string text = R"(
scenario {
  preset s2
  name custom
  controller ltv
  episode_steps 77
  seeds 4 5
  mpc {
    horizon 9
    slack off
  }
  gamma {
    n 1.5
    beta -0.05
  }
}
)";
  const ScenarioConfig s = parse_scenario(ConfigNode::parse_string(text));
  CHECK(s.name == "custom");
  CHECK(s.controller == ControllerKind::kLtv);
  CHECK(s.episode_steps == 77);
  REQUIRE(s.seeds.size() == 2);
  CHECK(s.seeds[1] == 5);
  CHECK(s.mpc.use_slack == false);
  CHECK(s.gamma.n == 1.5);
  CHECK(s.gamma.beta == -0.05);
  CHECK(s.obstacles.size() == 1);  // inherited from the preset
}

TEST_CASE("reference generators stay bounded") {
  for (auto kind : {ReferenceKind::kLine, ReferenceKind::kCircle, ReferenceKind::kSine,
                    ReferenceKind::kStar, ReferenceKind::kSpiral}) {
    ReferenceSpec spec;
    spec.kind = kind;
    spec.center = (Vec(2) << 0.5, 0.2).finished();
    spec.scale = 0.4;
    spec.period = 200;
    spec.direction = (Vec(2) << 1.0, 0.5).finished();
    for (int t = 0; t < 500; t += 7) {
      const Vec p = reference_point(spec, t, 2);
      CHECK((p - spec.center).norm() <= 1.2 * spec.scale + 1e-9);
    }
  }
}
