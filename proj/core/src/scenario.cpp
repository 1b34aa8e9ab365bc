#include "ksc/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "ksc/csv.hpp"
#include "ksc/svg.hpp"

namespace ksc {

std::string to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::kKmpc: return "kmpc";
    case ControllerKind::kLti: return "lti";
    case ControllerKind::kLtv: return "ltv";
    case ControllerKind::kNmpc: return "nmpc";
  }
  return "unknown";
}

ControllerKind controller_from_string(const std::string& s) {
  if (s == "kmpc") return ControllerKind::kKmpc;
  if (s == "lti") return ControllerKind::kLti;
  if (s == "ltv") return ControllerKind::kLtv;
  if (s == "nmpc") return ControllerKind::kNmpc;
  throw std::invalid_argument("unknown controller kind: " + s);
}

Vec reference_point(const ReferenceSpec& spec, int step, int w) {
  Vec p = spec.center.size() == w ? spec.center : Vec::Zero(w);
  const double phase = 2.0 * M_PI * static_cast<double>(step) / spec.period;
  switch (spec.kind) {
    case ReferenceKind::kFixed:
      break;
    case ReferenceKind::kLine: {
      Vec dir = spec.direction.size() == w ? spec.direction : Vec::Unit(w, 0);
      if (dir.norm() > 0) dir /= dir.norm();
      p += spec.scale * std::sin(phase) * dir;
      break;
    }
    case ReferenceKind::kCircle:
      p[0] += spec.scale * std::cos(phase);
      p[1] += spec.scale * std::sin(phase);
      break;
    case ReferenceKind::kSine:
      p[0] += spec.scale * std::sin(phase);
      p[1] += 0.5 * spec.scale * std::sin(2.0 * phase);
      break;
    case ReferenceKind::kStar: {
      const double r = spec.scale * (0.55 + 0.45 * std::cos(5.0 * phase));
      p[0] += r * std::cos(phase);
      p[1] += r * std::sin(phase);
      break;
    }
    case ReferenceKind::kSpiral: {
      const double frac = phase / (2.0 * M_PI) - std::floor(phase / (2.0 * M_PI));
      const double r = spec.scale * (0.2 + 0.8 * frac);
      p[0] += r * std::cos(3.0 * phase);
      p[1] += r * std::sin(3.0 * phase);
      break;
    }
  }
  if (w == 3 && spec.kind != ReferenceKind::kFixed)
    p[2] += 0.15 * spec.scale * std::sin(phase);
  return p;
}

void ScenarioConfig::validate() const {
  if (episode_steps < 1) throw std::invalid_argument("scenario: episode must be >= 1");
  if (seeds.empty()) throw std::invalid_argument("scenario: at least one seed");
  if (floating) {
    floating_chain.validate();
  } else {
    chain.validate();
    if (chain.joint_count() < 2)
      throw std::invalid_argument("scenario: chains must have at least two joints");
    if (q0.size() != chain.joint_count())
      throw std::invalid_argument("scenario: q0 dimension mismatch");
    const double reach = [&] {
      double r = 0.0;
      for (double l : chain.link_lengths) r += l;
      return r;
    }();
    for (int t : {0, episode_steps / 2, episode_steps}) {
      const Vec p = reference_point(reference, t, chain.workspace_dim());
      if (p.norm() > reach)
        throw std::invalid_argument("scenario: reference leaves the workspace");
    }
  }
  if ((controller == ControllerKind::kKmpc || floating) && !model.has_value())
    throw std::invalid_argument("scenario: this controller needs a trained model");
  gamma.validate();
}

MetricsRecord aggregate_metrics(const std::vector<ControllerStep>& steps) {
  MetricsRecord m;
  m.total_steps = static_cast<int>(steps.size());
  if (steps.empty()) return m;
  double dist_sum = 0.0;
  double max_phi_sum = 0.0;
  double mean_phi_sum = 0.0;
  double min_dist_sum = 0.0;
  m.min_dist_overall = steps.front().min_dist;
  std::vector<double> times;
  for (const ControllerStep& s : steps) {
    m.infeasible_count += s.counted_infeasible ? 1 : 0;
    dist_sum += (s.p - s.p_des).norm();
    max_phi_sum += s.max_phi;
    mean_phi_sum += s.mean_phi;
    min_dist_sum += s.min_dist;
    m.min_dist_overall = std::min(m.min_dist_overall, s.min_dist);
    m.cumulative_cost += s.tracking_cost;
    times.push_back(s.solve_ms);
  }
  const double n = static_cast<double>(steps.size());
  m.avg_dist_target = dist_sum / n;
  m.avg_max_phi = max_phi_sum / n;
  m.avg_mean_phi = mean_phi_sum / n;
  m.avg_min_dist = min_dist_sum / n;
  // Timing statistics exclude a 10-solve warm-up.
  const std::size_t skip = times.size() > 10 ? 10 : 0;
  double mean = 0.0;
  for (std::size_t i = skip; i < times.size(); ++i) mean += times[i];
  const double count = static_cast<double>(times.size() - skip);
  mean /= std::max(count, 1.0);
  double var = 0.0;
  for (std::size_t i = skip; i < times.size(); ++i)
    var += (times[i] - mean) * (times[i] - mean);
  m.solve_ms_mean = mean;
  m.solve_ms_std = std::sqrt(var / std::max(count, 1.0));
  return m;
}

namespace {

struct ObstacleState {
  Obstacle obstacle;
  int chase_link = -1;
  double chase_speed = 0.0;
};

// Geometric phi0 statistics of a configuration against all obstacles.
struct SafetySnapshot {
  std::vector<double> link_phi;  // per sphere: d_min - min distance
  double max_phi = 0.0;
  double mean_phi = 0.0;
  double min_dist = 0.0;
};

SafetySnapshot snapshot_fixed(const SerialChain& chain, const Vec& q,
                              const std::vector<ObstacleState>& obstacles,
                              double d_min) {
  SafetySnapshot snap;
  const int spheres = chain.sphere_count();
  snap.link_phi.assign(spheres, -1e9);
  snap.min_dist = 1e9;
  if (obstacles.empty()) {
    snap.link_phi.assign(spheres, 0.0);
    snap.min_dist = 0.0;
    return snap;
  }
  const FkResult fk = forward_kinematics(chain, q);
  for (int s = 0; s < spheres; ++s) {
    double dmin_s = 1e9;
    for (const ObstacleState& o : obstacles) {
      const double d =
          (fk.sphere_center(s) - o.obstacle.center).norm() - chain.sphere_radius(s);
      dmin_s = std::min(dmin_s, d);
    }
    snap.link_phi[s] = d_min - dmin_s;
    snap.min_dist = std::min(snap.min_dist, dmin_s);
  }
  snap.max_phi = *std::max_element(snap.link_phi.begin(), snap.link_phi.end());
  double sum = 0.0;
  for (double v : snap.link_phi) sum += v;
  snap.mean_phi = sum / static_cast<double>(spheres);
  return snap;
}

void advance_obstacles(std::vector<ObstacleState>& obstacles,
                       const std::vector<Vec>& sphere_centers, double dt) {
  for (ObstacleState& o : obstacles) {
    if (o.chase_link >= 0 &&
        o.chase_link < static_cast<int>(sphere_centers.size())) {
      Vec delta = sphere_centers[o.chase_link] - o.obstacle.center;
      const double dist = delta.norm();
      o.obstacle.velocity =
          dist > 1e-9 ? Vec(o.chase_speed * delta / dist) : Vec::Zero(delta.size());
    }
    o.obstacle.center += dt * o.obstacle.velocity;
  }
}

std::vector<Obstacle> plain_obstacles(const std::vector<ObstacleState>& obstacles) {
  std::vector<Obstacle> out;
  out.reserve(obstacles.size());
  for (const ObstacleState& o : obstacles) out.push_back(o.obstacle);
  return out;
}

// Shift the control part of a stacked solution one step forward; slack
// variables are dropped (the next problem re-allocates its own).
Vec shift_controls(const Vec& y, int m, int horizon) {
  Vec next = y.head(m * horizon);
  for (int k = 0; k + 1 < horizon; ++k)
    next.segment(k * m, m) = next.segment((k + 1) * m, m);
  return next;
}

std::optional<Vec> pad_warm_start(const std::optional<Vec>& controls, int var_count) {
  if (!controls.has_value() || controls->size() > var_count) return std::nullopt;
  Vec full = Vec::Zero(var_count);
  full.head(controls->size()) = *controls;
  return full;
}

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

EpisodeResult run_fixed_episode(ControllerKind kind, const ScenarioConfig& scenario,
                                std::uint64_t seed) {
  const SerialChain& chain = scenario.chain;
  const int n = chain.joint_count();
  const int w = chain.workspace_dim();
  const int nx = w + n;
  MpcConfig mpc = scenario.mpc;
  if (mpc.u_min.size() == 0) {
    mpc.u_min = chain.u_min;
    mpc.u_max = chain.u_max;
  }

  // Seeds jitter the initial configuration so multi-seed aggregates see
  // distinct episodes even for deterministic controllers.
  Rng rng(seed);
  Vec q0 = scenario.q0 + rng.uniform_vec(n, -0.2, 0.2);
  PlantState state = PlantState::initial(chain, q0);

  std::vector<ObstacleState> obstacles;
  for (const ObstacleSpec& spec : scenario.obstacles)
    obstacles.push_back({spec.obstacle, spec.chase_link, spec.chase_speed});

  // The reference tracks the workspace point; joint coordinates carry the
  // nominal posture (normally weighted zero).
  auto reference = [&](int t) {
    Vec x(nx);
    x << reference_point(scenario.reference, t, w), scenario.q0;
    return x;
  };

  const SafetyIndexParams filter_gamma{1.0, 0.0, scenario.gamma.d_min};
  ShootingConfig shooting = scenario.shooting;
  shooting.seed = seed;
  shooting.plant_alpha = scenario.plant_alpha;

  EpisodeResult result;
  Vec prev_u = Vec::Zero(n);
  Vec last_feasible_u = Vec::Zero(n);
  std::optional<Vec> warm;

  for (int t = 0; t < scenario.episode_steps; ++t) {
    const double t0 = now_ms();
    Vec u = Vec::Zero(n);
    QpStatus status = QpStatus::kSolved;
    bool counted = false;
    double slack_total = 0.0;

    const std::vector<Obstacle> obs = plain_obstacles(obstacles);
    switch (kind) {
      case ControllerKind::kKmpc: {
        const CondensedQp built = build_kmpc(*scenario.model, scenario.gamma, chain,
                                             obs, state, t, reference, mpc);
        const QpOutcome out =
            solve(built.qp, pad_warm_start(warm, built.qp.var_count()));
        status = out.status;
        if (out.status == QpStatus::kSolved) {
          u = out.y.head(n);
          slack_total = out.slack_values.size() ? out.slack_values.sum() : 0.0;
          warm = shift_controls(out.y, built.control_dim, mpc.horizon);
        } else {
          counted = out.status == QpStatus::kPrimalInfeasible || out.weak_certificate;
          u = 0.5 * prev_u;  // fall back and count the step
          warm.reset();
        }
        break;
      }
      case ControllerKind::kLti:
      case ControllerKind::kLtv: {
        const CondensedQp built =
            kind == ControllerKind::kLti
                ? build_lti(chain, scenario.q_star.size() == n ? scenario.q_star
                                                               : scenario.q0,
                            state, t, reference, mpc)
                : build_ltv(chain, state, t, reference, mpc);
        const QpOutcome out =
            solve(built.qp, pad_warm_start(warm, built.qp.var_count()));
        Vec u_ref = prev_u;
        if (out.status == QpStatus::kSolved) {
          u_ref = out.y.head(n);
          warm = shift_controls(out.y, built.control_dim, mpc.horizon);
        }
        std::vector<PhiDotRow> rows;
        for (const Obstacle& o : obs)
          for (int s = 0; s < chain.sphere_count(); ++s) {
            auto row = analytic_phi_row(chain, filter_gamma, state.q, o, s, mpc.dt,
                                        mpc.bound);
            if (row.has_value()) rows.push_back(std::move(*row));
          }
        const FilterResult filtered = safety_filter(
            u_ref, rows, mpc.u_min, mpc.u_max, mpc.use_slack, mpc.slack_weight);
        status = filtered.status;
        slack_total = filtered.slack_total;
        if (filtered.infeasible()) {
          counted = true;
          u = last_feasible_u;
        } else {
          u = filtered.u;
          last_feasible_u = u;
        }
        break;
      }
      case ControllerKind::kNmpc: {
        const std::vector<Vec> seq = shooting_nmpc(chain, obs, filter_gamma, state, t,
                                                   reference, mpc, shooting);
        std::vector<PhiDotRow> rows;
        for (const Obstacle& o : obs)
          for (int s = 0; s < chain.sphere_count(); ++s) {
            auto row = analytic_phi_row(chain, filter_gamma, state.q, o, s, mpc.dt,
                                        mpc.bound);
            if (row.has_value()) rows.push_back(std::move(*row));
          }
        const FilterResult filtered = safety_filter(
            seq.front(), rows, mpc.u_min, mpc.u_max, mpc.use_slack, mpc.slack_weight);
        status = filtered.status;
        slack_total = filtered.slack_total;
        if (filtered.infeasible()) {
          counted = true;
          u = last_feasible_u;
        } else {
          u = filtered.u;
          last_feasible_u = u;
        }
        break;
      }
    }
    const double solve_ms = now_ms() - t0;

    state = step_plant(chain, state, u, mpc.dt, scenario.plant_alpha);
    prev_u = u;

    if (!state.q.allFinite()) {
      result.metrics = aggregate_metrics(result.steps);
      result.metrics.aborted = true;
      return result;
    }

    const FkResult fk = forward_kinematics(chain, state.q);
    std::vector<Vec> centers;
    for (int s = 0; s < chain.sphere_count(); ++s)
      centers.push_back(fk.sphere_center(s));
    advance_obstacles(obstacles, centers, mpc.dt);

    ControllerStep step;
    step.t = t;
    step.status = status;
    step.counted_infeasible = counted;
    step.solve_ms = solve_ms;
    const Vec xdes = reference(t + 1);
    const Vec err = state.x() - xdes;
    step.tracking_cost = err.dot(mpc.q_weights.cwiseProduct(err));
    const SafetySnapshot snap =
        snapshot_fixed(chain, state.q, obstacles, scenario.gamma.d_min);
    step.max_phi = snap.max_phi;
    step.mean_phi = snap.mean_phi;
    step.min_dist = snap.min_dist;
    step.link_phi = snap.link_phi;
    step.u = u;
    step.slack_total = slack_total;
    step.p = state.p;
    step.p_des = xdes.head(w);
    result.steps.push_back(std::move(step));
  }
  result.metrics = aggregate_metrics(result.steps);
  return result;
}

SafetySnapshot snapshot_floating(const FloatingChain& chain, const FloatingState& state,
                                 const std::vector<ObstacleState>& obstacles,
                                 double d_min) {
  SafetySnapshot snap;
  const int spheres = chain.sphere_count();
  snap.link_phi.assign(spheres, 0.0);
  snap.min_dist = 1e9;
  if (obstacles.empty()) {
    snap.min_dist = 0.0;
    return snap;
  }
  for (int s = 0; s < spheres; ++s) {
    const FloatingGeometry geo = floating_sphere_geometry(chain, state, s);
    double dmin_s = 1e9;
    for (const ObstacleState& o : obstacles) {
      const double d = (geo.center - o.obstacle.center).norm() - chain.sphere_radius(s);
      dmin_s = std::min(dmin_s, d);
    }
    snap.link_phi[s] = d_min - dmin_s;
    snap.min_dist = std::min(snap.min_dist, dmin_s);
  }
  snap.max_phi = *std::max_element(snap.link_phi.begin(), snap.link_phi.end());
  double sum = 0.0;
  for (double v : snap.link_phi) sum += v;
  snap.mean_phi = sum / static_cast<double>(spheres);
  return snap;
}

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a < -M_PI) a += 2.0 * M_PI;
  return a;
}

EpisodeResult run_floating_episode(const ScenarioConfig& scenario, std::uint64_t seed) {
  const FloatingChain& chain = scenario.floating_chain;
  const int n = chain.arm_joints();
  const int nx = chain.state_dim();
  const KoopmanModel& model = *scenario.model;

  MpcConfig mpc = scenario.mpc;
  const bool decide_base = scenario.base_twist_in_decision;
  if (mpc.u_min.size() == 0) {
    mpc.u_min = decide_base ? chain.control_min() : chain.arm.u_min;
    mpc.u_max = decide_base ? chain.control_max() : chain.arm.u_max;
  }

  Rng rng(seed);
  Vec q0 = scenario.q0.size() == n ? scenario.q0 : Vec::Zero(n);
  q0 += rng.uniform_vec(n, -0.1, 0.1);
  const Vec start = reference_point(scenario.reference, 0, 2);
  FloatingState state = FloatingState::initial(chain, q0, Vec2(start[0], start[1]), 0.0);
  {
    const Vec ahead = reference_point(scenario.reference, 40, 2);
    state.heading = std::atan2(ahead[1] - start[1], ahead[0] - start[0]);
  }

  std::vector<ObstacleState> obstacles;
  for (const ObstacleSpec& spec : scenario.obstacles)
    obstacles.push_back({spec.obstacle, spec.chase_link, spec.chase_speed});

  const int lookahead = 40;
  const double v_nom = 0.8 * chain.twist_max[0];

  EpisodeResult result;
  std::optional<Vec> warm;
  Vec prev_u = Vec::Zero(chain.control_dim());

  for (int t = 0; t < scenario.episode_steps; ++t) {
    const double t0 = now_ms();

    // Pure-pursuit heading/speed targets from the raw workspace path; the
    // predictive state carries no global translation, so the reference is
    // expressed in (heading, speed) terms.
    const Vec target = reference_point(scenario.reference, t + lookahead, 2);
    const Vec2 to_target(target[0] - state.base_pos[0], target[1] - state.base_pos[1]);
    const double dist = to_target.norm();
    double theta_des = dist > 1e-6 ? std::atan2(to_target[1], to_target[0])
                                   : state.heading;
    theta_des = state.heading + wrap_angle(theta_des - state.heading);
    const double v_des =
        std::min(v_nom, dist / (lookahead * mpc.dt));

    auto reference = [&](int) {
      Vec x(nx);
      x << q0, theta_des, v_des, 0.0;
      return x;
    };

    FloatingMpcOptions options;
    options.base_twist_in_decision = decide_base;
    Vec base_plan(2);
    base_plan << v_des, std::clamp(1.5 * wrap_angle(theta_des - state.heading),
                                   chain.twist_min[1], chain.twist_max[1]);
    options.base_twist_plan = base_plan;

    const CondensedQp built =
        build_floating_kmpc(model, chain, state, plain_obstacles(obstacles),
                            scenario.gamma, t, reference, mpc, options);
    const QpOutcome out = solve(built.qp, pad_warm_start(warm, built.qp.var_count()));

    Vec u = Vec::Zero(chain.control_dim());
    bool counted = false;
    double slack_total = 0.0;
    if (out.status == QpStatus::kSolved) {
      if (decide_base) {
        u = out.y.head(chain.control_dim());
      } else {
        u.head(n) = out.y.head(n);
        u.tail(2) = base_plan;
      }
      slack_total = out.slack_values.size() ? out.slack_values.sum() : 0.0;
      warm = shift_controls(out.y, built.control_dim, mpc.horizon);
    } else {
      counted = out.status == QpStatus::kPrimalInfeasible || out.weak_certificate;
      u = 0.5 * prev_u;
      warm.reset();
    }
    const double solve_ms = now_ms() - t0;

    state = step_floating_plant(chain, state, u, mpc.dt, scenario.plant_alpha, 0.6);
    prev_u = u;
    if (!state.q.allFinite() || !std::isfinite(state.heading)) {
      result.metrics = aggregate_metrics(result.steps);
      result.metrics.aborted = true;
      return result;
    }

    std::vector<Vec> centers;
    for (int s = 0; s < chain.sphere_count(); ++s)
      centers.push_back(floating_sphere_geometry(chain, state, s).center);
    advance_obstacles(obstacles, centers, mpc.dt);

    ControllerStep step;
    step.t = t;
    step.status = out.status;
    step.counted_infeasible = counted;
    step.solve_ms = solve_ms;
    const Vec p_des = reference_point(scenario.reference, t + 1, 2);
    step.p = Vec(state.base_pos);
    step.p_des = p_des;
    const double derr = (step.p - p_des).norm();
    step.tracking_cost = derr * derr;
    const SafetySnapshot snap =
        snapshot_floating(chain, state, obstacles, scenario.gamma.d_min);
    step.max_phi = snap.max_phi;
    step.mean_phi = snap.mean_phi;
    step.min_dist = snap.min_dist;
    step.link_phi = snap.link_phi;
    step.u = u;
    step.slack_total = slack_total;
    step.base_pose = Vec(3);
    step.base_pose << state.base_pos[0], state.base_pos[1], state.heading;
    result.steps.push_back(std::move(step));
  }
  result.metrics = aggregate_metrics(result.steps);
  return result;
}

}  // namespace

EpisodeResult run_controller(ControllerKind kind, const ScenarioConfig& scenario,
                             std::uint64_t seed) {
  scenario.validate();
  if (scenario.floating) return run_floating_episode(scenario, seed);
  return run_fixed_episode(kind, scenario, seed);
}

ScenarioResult run_scenario(const ScenarioConfig& scenario) {
  ScenarioResult result;
  for (std::uint64_t seed : scenario.seeds)
    result.per_seed.push_back(run_controller(scenario.controller, scenario, seed));

  MetricsRecord& agg = result.aggregate;
  const double count = static_cast<double>(result.per_seed.size());
  agg.min_dist_overall = 1e9;
  for (const EpisodeResult& ep : result.per_seed) {
    agg.infeasible_count += ep.metrics.infeasible_count;
    agg.total_steps += ep.metrics.total_steps;
    agg.avg_dist_target += ep.metrics.avg_dist_target / count;
    agg.avg_max_phi += ep.metrics.avg_max_phi / count;
    agg.avg_mean_phi += ep.metrics.avg_mean_phi / count;
    agg.avg_min_dist += ep.metrics.avg_min_dist / count;
    agg.min_dist_overall = std::min(agg.min_dist_overall, ep.metrics.min_dist_overall);
    agg.cumulative_cost += ep.metrics.cumulative_cost / count;
    agg.solve_ms_mean += ep.metrics.solve_ms_mean / count;
    agg.solve_ms_std += ep.metrics.solve_ms_std / count;
    agg.aborted = agg.aborted || ep.metrics.aborted;
  }
  return result;
}

// --- model comparison ----------------------------------------------------

ModelPredictor predictor_kdm(const KoopmanModel& model) {
  return [model](const Vec& x0, const Mat& controls) {
    Vec z = model.lift(x0);
    for (int k = 0; k < controls.cols(); ++k)
      z = model.A * z + model.B * controls.col(k);
    return model.project(z);
  };
}

ModelPredictor predictor_lti(const SerialChain& chain, const Vec& q_star, double dt) {
  const Mat jac = position_jacobian(chain, q_star, chain.joint_count() - 1);
  return [chain, jac, dt](const Vec& x0, const Mat& controls) {
    const int w = chain.workspace_dim();
    const int n = chain.joint_count();
    Vec p = x0.head(w);
    Vec q = x0.tail(n);
    for (int k = 0; k < controls.cols(); ++k) {
      p += dt * jac * controls.col(k);
      q += dt * controls.col(k);
    }
    Vec x(w + n);
    x << p, q;
    return x;
  };
}

ModelPredictor predictor_ltv(const SerialChain& chain, double dt) {
  return [chain, dt](const Vec& x0, const Mat& controls) {
    const int w = chain.workspace_dim();
    const int n = chain.joint_count();
    Vec p = x0.head(w);
    Vec q = x0.tail(n);
    for (int k = 0; k < controls.cols(); ++k) {
      p += dt * position_jacobian(chain, q, n - 1) * controls.col(k);
      q += dt * controls.col(k);
    }
    Vec x(w + n);
    x << p, q;
    return x;
  };
}

CompareResult compare_models(
    const std::vector<std::pair<std::string, ModelPredictor>>& models,
    const std::vector<Window>& windows, const std::vector<int>& horizons) {
  CompareResult result;
  result.horizons = horizons;
  result.errors = Mat::Zero(static_cast<int>(models.size()),
                            static_cast<int>(horizons.size()));
  for (const auto& [name, predictor] : models) result.names.push_back(name);

  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    for (std::size_t hi = 0; hi < horizons.size(); ++hi) {
      const int h = horizons[hi];
      double total = 0.0;
      std::size_t used = 0;
      for (const Window& w : windows) {
        if (w.u.cols() < h) continue;
        const Vec xhat = models[mi].second(w.x.col(0), w.u.leftCols(h));
        total += (xhat - w.x.col(h)).norm();
        ++used;
      }
      if (used == 0)
        throw std::invalid_argument("compare_models: windows shorter than horizon");
      result.errors(static_cast<int>(mi), static_cast<int>(hi)) =
          total / static_cast<double>(used);
    }
  }
  return result;
}

void write_compare_csv(const CompareResult& result, const std::string& path) {
  csv::Table table;
  table.header.push_back("model");
  for (int h : result.horizons) table.header.push_back("h" + std::to_string(h));
  for (std::size_t i = 0; i < result.names.size(); ++i) {
    std::vector<std::string> row{result.names[i]};
    for (std::size_t j = 0; j < result.horizons.size(); ++j)
      row.push_back(csv::cell(result.errors(static_cast<int>(i), static_cast<int>(j))));
    table.rows.push_back(std::move(row));
  }
  csv::write_file(path, table);
}

std::string compare_svg(const CompareResult& result) {
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd"};
  std::vector<svg::Series> series;
  for (std::size_t i = 0; i < result.names.size(); ++i) {
    svg::Series s;
    s.label = result.names[i];
    s.color = kColors[i % 5];
    for (std::size_t j = 0; j < result.horizons.size(); ++j) {
      s.x.push_back(result.horizons[j]);
      s.y.push_back(result.errors(static_cast<int>(i), static_cast<int>(j)));
    }
    series.push_back(std::move(s));
  }
  return svg::line_plot("prediction error vs horizon", series);
}

// --- persistence ----------------------------------------------------------

void write_step_log(const std::vector<ControllerStep>& steps, const std::string& path,
                    bool real_timing) {
  csv::Table table;
  const int m = steps.empty() ? 0 : static_cast<int>(steps.front().u.size());
  const int w = steps.empty() ? 0 : static_cast<int>(steps.front().p.size());
  const int links = steps.empty() ? 0 : static_cast<int>(steps.front().link_phi.size());
  const bool floating = !steps.empty() && steps.front().base_pose.size() == 3;

  table.header = {"t", "status", "solve_ms", "cost", "max_phi", "mean_phi", "min_dist"};
  for (int i = 1; i <= m; ++i) table.header.push_back("u_" + std::to_string(i));
  table.header.push_back("slack_total");
  for (int i = 1; i <= w; ++i) table.header.push_back("p_" + std::to_string(i));
  for (int i = 1; i <= w; ++i) table.header.push_back("pdes_" + std::to_string(i));
  for (int i = 1; i <= links; ++i) table.header.push_back("phi_" + std::to_string(i));
  if (floating) {
    table.header.push_back("base_x");
    table.header.push_back("base_y");
    table.header.push_back("base_theta");
  }

  for (const ControllerStep& s : steps) {
    std::vector<std::string> row;
    row.push_back(std::to_string(s.t));
    row.push_back(to_string(s.status) + (s.counted_infeasible ? "!" : ""));
    row.push_back(csv::cell(real_timing ? s.solve_ms : 0.0));
    row.push_back(csv::cell(s.tracking_cost));
    row.push_back(csv::cell(s.max_phi));
    row.push_back(csv::cell(s.mean_phi));
    row.push_back(csv::cell(s.min_dist));
    for (int i = 0; i < m; ++i) row.push_back(csv::cell(s.u[i]));
    row.push_back(csv::cell(s.slack_total));
    for (int i = 0; i < w; ++i) row.push_back(csv::cell(s.p[i]));
    for (int i = 0; i < w; ++i) row.push_back(csv::cell(s.p_des[i]));
    for (int i = 0; i < links; ++i) row.push_back(csv::cell(s.link_phi[i]));
    if (floating)
      for (int i = 0; i < 3; ++i) row.push_back(csv::cell(s.base_pose[i]));
    table.rows.push_back(std::move(row));
  }
  csv::write_file(path, table);
}

std::vector<ControllerStep> read_step_log(const std::string& path) {
  const csv::Table table = csv::read_file(path);
  std::vector<ControllerStep> steps;
  const int c_t = table.column("t");
  const int c_status = table.column("status");
  const int c_ms = table.column("solve_ms");
  const int c_cost = table.column("cost");
  const int c_max = table.column("max_phi");
  const int c_mean = table.column("mean_phi");
  const int c_min = table.column("min_dist");
  const int c_slack = table.column("slack_total");
  int m = 0;
  while (table.column("u_" + std::to_string(m + 1)) >= 0) ++m;
  int w = 0;
  while (table.column("p_" + std::to_string(w + 1)) >= 0) ++w;
  int links = 0;
  while (table.column("phi_" + std::to_string(links + 1)) >= 0) ++links;
  const int c_bx = table.column("base_x");

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    ControllerStep s;
    s.t = static_cast<int>(table.number(r, c_t));
    std::string status = table.rows[r][c_status];
    if (!status.empty() && status.back() == '!') {
      s.counted_infeasible = true;
      status.pop_back();
    }
    if (status == "infeasible") s.status = QpStatus::kPrimalInfeasible;
    else if (status == "max_iter") s.status = QpStatus::kMaxIter;
    else s.status = QpStatus::kSolved;
    s.solve_ms = table.number(r, c_ms);
    s.tracking_cost = table.number(r, c_cost);
    s.max_phi = table.number(r, c_max);
    s.mean_phi = table.number(r, c_mean);
    s.min_dist = table.number(r, c_min);
    s.slack_total = table.number(r, c_slack);
    s.u = Vec(m);
    for (int i = 0; i < m; ++i)
      s.u[i] = table.number(r, table.column("u_" + std::to_string(i + 1)));
    s.p = Vec(w);
    s.p_des = Vec(w);
    for (int i = 0; i < w; ++i) {
      s.p[i] = table.number(r, table.column("p_" + std::to_string(i + 1)));
      s.p_des[i] = table.number(r, table.column("pdes_" + std::to_string(i + 1)));
    }
    for (int i = 0; i < links; ++i)
      s.link_phi.push_back(table.number(r, table.column("phi_" + std::to_string(i + 1))));
    if (c_bx >= 0) {
      s.base_pose = Vec(3);
      s.base_pose << table.number(r, c_bx), table.number(r, table.column("base_y")),
          table.number(r, table.column("base_theta"));
    }
    steps.push_back(std::move(s));
  }
  return steps;
}

void write_metrics_csv(const ScenarioConfig& scenario, const ScenarioResult& result,
                       const std::string& path, bool real_timing) {
  csv::Table table;
  table.header = {"scenario",       "controller",      "seed",
                  "infeasible",     "total_steps",     "avg_dist_target",
                  "avg_max_phi",    "avg_mean_phi",    "avg_min_dist",
                  "min_dist",       "cumulative_cost", "solve_ms_mean",
                  "solve_ms_std",   "aborted"};
  auto add_row = [&](const std::string& seed_label, const MetricsRecord& m) {
    table.rows.push_back({scenario.name, to_string(scenario.controller), seed_label,
                          std::to_string(m.infeasible_count),
                          std::to_string(m.total_steps), csv::cell(m.avg_dist_target),
                          csv::cell(m.avg_max_phi), csv::cell(m.avg_mean_phi),
                          csv::cell(m.avg_min_dist), csv::cell(m.min_dist_overall),
                          csv::cell(m.cumulative_cost),
                          csv::cell(real_timing ? m.solve_ms_mean : 0.0),
                          csv::cell(real_timing ? m.solve_ms_std : 0.0),
                          m.aborted ? "1" : "0"});
  };
  for (std::size_t i = 0; i < result.per_seed.size(); ++i)
    add_row(std::to_string(scenario.seeds[i]), result.per_seed[i].metrics);
  add_row("all", result.aggregate);
  csv::write_file(path, table);
}

std::string trajectory_svg(const std::vector<ControllerStep>& steps,
                           const ScenarioConfig& scenario) {
  std::vector<svg::Series> series(2);
  series[0].label = "reference";
  series[0].color = "#555555";
  series[1].label = "executed";
  series[1].color = "#1f77b4";
  for (const ControllerStep& s : steps) {
    if (s.p_des.size() >= 2) {
      series[0].x.push_back(s.p_des[0]);
      series[0].y.push_back(s.p_des[1]);
    }
    if (s.p.size() >= 2) {
      series[1].x.push_back(s.p[0]);
      series[1].y.push_back(s.p[1]);
    }
  }
  std::vector<svg::Disk> disks;
  for (const ObstacleSpec& o : scenario.obstacles) {
    if (o.obstacle.center.size() < 2) continue;
    svg::Disk d;
    d.x = o.obstacle.center[0];
    d.y = o.obstacle.center[1];
    d.radius = scenario.gamma.d_min;
    d.label = "unsafe";
    disks.push_back(d);
  }
  return svg::line_plot("trajectory: " + scenario.name, series, disks, 640, 480, true);
}

std::string phi_svg(const std::vector<ControllerStep>& steps) {
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  const int links = steps.empty() ? 0 : static_cast<int>(steps.front().link_phi.size());
  std::vector<svg::Series> series(links);
  for (int i = 0; i < links; ++i) {
    series[i].label = "link " + std::to_string(i + 1);
    series[i].color = kColors[i % 8];
  }
  for (const ControllerStep& s : steps)
    for (int i = 0; i < links && i < static_cast<int>(s.link_phi.size()); ++i) {
      series[i].x.push_back(s.t);
      series[i].y.push_back(s.link_phi[i]);
    }
  return svg::line_plot("linkwise phi over time", series);
}

// --- presets and parsing ---------------------------------------------------

namespace {

MpcConfig default_mpc(int nx, int m, int w) {
  MpcConfig mpc;
  mpc.horizon = 9;
  mpc.dt = 0.02;
  mpc.q_weights = Vec::Zero(nx);
  for (int i = 0; i < w; ++i) mpc.q_weights[i] = 1.0;
  mpc.qn_weights = 2.0 * mpc.q_weights;
  mpc.r_weights = Vec::Constant(m, 0.01);
  mpc.use_slack = true;
  // High enough that per-step slack never accumulates into real intrusion.
  mpc.slack_weight = 1e6;
  return mpc;
}

}  // namespace

ScenarioConfig scenario_preset(const std::string& name) {
  ScenarioConfig s;
  s.name = name;
  if (name == "s1") {
    // Obstacle-free regulation around a fixed point.
    s.chain = SerialChain::planar(3, {0.6, 0.5, 0.4}, {0.05, 0.05, 0.05}, 1.5);
    s.q0 = (Vec(3) << 0.5, 0.4, -0.3).finished();
    s.controller = ControllerKind::kLtv;
    s.reference.kind = ReferenceKind::kFixed;
    s.reference.center = forward_kinematics(s.chain, s.q0).tip;
    s.plant_alpha = 1.0;
    s.mpc = default_mpc(5, 3, 2);
    // Posture weight pins the redundant null space so regulation settles to
    // the exact fixed point.
    s.mpc.q_weights.tail(3).setConstant(0.05);
    s.mpc.qn_weights = 2.0 * s.mpc.q_weights;
    s.mpc.r_weights.setConstant(1e-3);
    s.episode_steps = 400;
  } else if (name == "s2" || name == "s4") {
    // Planar single static obstacle on the reference circle. s4 reuses the
    // geometry with a perturbed plant for the adaptation experiments.
    s.chain = SerialChain::planar(3, {0.6, 0.5, 0.4}, {0.05, 0.05, 0.05}, 1.5);
    // Start on the reference circle (tip at its phase-zero point).
    s.q0 = (Vec(3) << 1.2575, -1.638, 0.166).finished();
    s.controller = ControllerKind::kKmpc;
    s.reference.kind = ReferenceKind::kCircle;
    s.reference.center = (Vec(2) << 0.72, 0.3).finished();
    s.reference.scale = 0.32;
    s.reference.period = 500;
    // Outside the reference circle: the tracked arc cuts into the clearance
    // shell, inner links stay on the far side.
    ObstacleSpec obs;
    obs.obstacle = Obstacle::fixed((Vec(2) << 0.955, 0.707).finished());
    s.obstacles.push_back(obs);
    s.plant_alpha = name == "s4" ? 0.5 : 0.7;
    if (name == "s4") {
      // Perturbed kinematics: link lengths +-5%.
      s.chain = SerialChain::planar(3, {0.6 * 1.05, 0.5 * 0.95, 0.4 * 1.05},
                                    {0.05, 0.05, 0.05}, 1.5);
    }
    s.mpc = default_mpc(5, 3, 2);
    s.episode_steps = 1000;
  } else if (name == "s2_dynamic") {
    // Table-I-style single-obstacle variant: the one obstacle chases the
    // tip sphere, slack disabled, so infeasible solves are observable.
    s = scenario_preset("s2");
    s.name = name;
    s.obstacles.clear();
    ObstacleSpec chaser;
    chaser.obstacle = Obstacle::fixed((Vec(2) << 1.25, 0.75).finished());
    chaser.chase_link = 3;
    chaser.chase_speed = 0.3;
    s.obstacles.push_back(chaser);
    s.mpc.use_slack = false;
    return s;
  } else if (name == "s3") {
    // 7-link 3D chain, one chasing obstacle plus five static ones.
    s.chain = SerialChain::alternating3d(
        7, {0.4, 0.35, 0.3, 0.3, 0.25, 0.2, 0.15},
        {0.06, 0.06, 0.05, 0.05, 0.05, 0.04, 0.04}, 1.0);
    // Start on the reference circle (tip at its phase-zero point).
    s.q0 = (Vec(7) << 0.6355, -0.1661, -0.6933, 0.7382, -0.7201, 0.5777, -0.0237)
               .finished();
    s.controller = ControllerKind::kKmpc;
    s.reference.kind = ReferenceKind::kCircle;
    s.reference.center = (Vec(3) << 1.05, 0.10, -0.50).finished();
    s.reference.scale = 0.3;
    s.reference.period = 500;
    ObstacleSpec chaser;
    chaser.obstacle = Obstacle::fixed((Vec(3) << 0.4, -0.8, 0.1).finished());
    chaser.chase_link = 4;
    chaser.chase_speed = 0.25;
    s.obstacles.push_back(chaser);
    // Static spheres ringing the path just outside it, plus one overhead.
    const double statics[5][3] = {{1.050, 0.620, -0.455},
                                  {0.555, 0.261, -0.486},
                                  {0.744, -0.321, -0.536},
                                  {1.356, -0.321, -0.536},
                                  {1.262, 0.312, -0.230}};
    for (const auto& c : statics) {
      ObstacleSpec o;
      o.obstacle = Obstacle::fixed((Vec(3) << c[0], c[1], c[2]).finished());
      s.obstacles.push_back(o);
    }
    s.plant_alpha = 0.7;
    s.mpc = default_mpc(10, 7, 3);
    s.episode_steps = 1000;
    s.shooting.samples = 100;
    s.shooting.iterations = 4;
  } else if (name == "s5") {
    // Floating base: the raw path crosses the unsafe disk.
    s.floating = true;
    s.floating_chain.arm = SerialChain::planar(2, {0.35, 0.3}, {0.05, 0.05}, 1.5);
    s.floating_chain.base_radius = 0.15;
    s.floating_chain.twist_min = (Vec(2) << -0.2, -1.2).finished();
    s.floating_chain.twist_max = (Vec(2) << 1.0, 1.2).finished();
    s.base_twist_in_decision = true;
    // Arm tucked so the base sphere leads the interaction.
    s.q0 = (Vec(2) << 2.2, -1.8).finished();
    s.controller = ControllerKind::kKmpc;
    // Back-and-forth line through the unsafe disk sitting slightly off the
    // path axis.
    s.reference.kind = ReferenceKind::kLine;
    s.reference.center = (Vec(2) << 0.0, 0.0).finished();
    s.reference.direction = (Vec(2) << 1.0, 0.0).finished();
    s.reference.scale = 2.0;
    s.reference.period = 2000;
    // The path clips the edge of the unsafe disk, so the blocked direction
    // separates from the pursuit direction as the base closes in.
    ObstacleSpec obs;
    obs.obstacle = Obstacle::fixed((Vec(2) << 1.6, 0.14).finished());
    s.obstacles.push_back(obs);
    s.plant_alpha = 0.8;
    s.mpc = default_mpc(s.floating_chain.state_dim(), s.floating_chain.control_dim(), 0);
    // Predictive-state tracking weights: posture, heading, speed, yaw rate.
    // Speed dominates and heading stays cheap, so a blocked base slides
    // around the constraint instead of parking against it.
    s.mpc.q_weights = (Vec(5) << 0.05, 0.05, 0.12, 1.5, 0.02).finished();
    s.mpc.qn_weights = 2.0 * s.mpc.q_weights;
    s.mpc.r_weights = Vec::Constant(4, 0.02);
    s.mpc.bound.eps_act = 0.04;
    s.episode_steps = 1000;
  } else {
    throw std::invalid_argument("unknown scenario preset: " + name);
  }
  s.gamma = SafetyIndexParams{1.0, 0.1, 0.2};
  return s;
}

namespace {

Vec node_vec(const ConfigNode& node) {
  const std::vector<double> v = node.as_doubles();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ReferenceKind reference_kind_from(const std::string& s) {
  if (s == "fixed") return ReferenceKind::kFixed;
  if (s == "line") return ReferenceKind::kLine;
  if (s == "circle") return ReferenceKind::kCircle;
  if (s == "sine") return ReferenceKind::kSine;
  if (s == "star") return ReferenceKind::kStar;
  if (s == "spiral") return ReferenceKind::kSpiral;
  throw std::invalid_argument("unknown reference kind: " + s);
}

}  // namespace

ScenarioConfig parse_scenario(const ConfigNode& root) {
  const ConfigNode& node = root.has("scenario") ? root.child("scenario") : root;
  ScenarioConfig s = node.has("preset") ? scenario_preset(node.child("preset").as_string())
                                        : ScenarioConfig{};
  if (node.has("name")) s.name = node.child("name").as_string();
  if (node.has("controller"))
    s.controller = controller_from_string(node.child("controller").as_string());
  if (node.has("episode_steps"))
    s.episode_steps = static_cast<int>(node.child("episode_steps").as_int());
  if (node.has("seeds")) {
    s.seeds.clear();
    for (const std::string& tok : node.child("seeds").tokens())
      s.seeds.push_back(static_cast<std::uint64_t>(std::stoull(tok)));
  }
  if (node.has("plant_alpha")) s.plant_alpha = node.child("plant_alpha").as_double();
  if (node.has("chain")) {
    const ConfigNode& c = node.child("chain");
    SerialChain chain;
    chain.axis_mode = c.get_string("axis", "planar") == "planar"
                          ? AxisMode::kPlanarZ
                          : AxisMode::kAlternating3D;
    chain.link_lengths = c.child("lengths").as_doubles();
    chain.collision_radii = c.child("radii").as_doubles();
    const double u_limit = c.get_double("u_limit", 1.5);
    chain.u_min = Vec::Constant(chain.joint_count(), -u_limit);
    chain.u_max = Vec::Constant(chain.joint_count(), u_limit);
    if (c.has("u_min")) chain.u_min = node_vec(c.child("u_min"));
    if (c.has("u_max")) chain.u_max = node_vec(c.child("u_max"));
    chain.validate();
    s.chain = chain;
    s.mpc = default_mpc(chain.state_dim(), chain.joint_count(), chain.workspace_dim());
  }
  if (node.has("q0")) s.q0 = node_vec(node.child("q0"));
  if (node.has("q_star")) s.q_star = node_vec(node.child("q_star"));
  if (node.has("obstacles_clear")) s.obstacles.clear();
  for (const ConfigNode* o : node.children("obstacle")) {
    ObstacleSpec spec;
    spec.obstacle.center = node_vec(o->child("center"));
    spec.obstacle.velocity = o->has("velocity") ? node_vec(o->child("velocity"))
                                                : Vec::Zero(spec.obstacle.center.size());
    spec.chase_link = static_cast<int>(o->get_int("chase_link", -1));
    spec.chase_speed = o->get_double("chase_speed", 0.0);
    s.obstacles.push_back(std::move(spec));
  }
  if (node.has("reference")) {
    const ConfigNode& r = node.child("reference");
    if (r.has("kind")) s.reference.kind = reference_kind_from(r.child("kind").as_string());
    if (r.has("center")) s.reference.center = node_vec(r.child("center"));
    if (r.has("direction")) s.reference.direction = node_vec(r.child("direction"));
    s.reference.scale = r.get_double("scale", s.reference.scale);
    s.reference.period = r.get_double("period", s.reference.period);
  }
  if (node.has("gamma")) {
    const ConfigNode& g = node.child("gamma");
    s.gamma.n = g.get_double("n", s.gamma.n);
    s.gamma.beta = g.get_double("beta", s.gamma.beta);
    s.gamma.d_min = g.get_double("d_min", s.gamma.d_min);
  }
  if (node.has("gamma_file")) s.gamma = load_gamma(node.child("gamma_file").as_string());
  if (node.has("mpc")) {
    const ConfigNode& m = node.child("mpc");
    s.mpc.horizon = static_cast<int>(m.get_int("horizon", s.mpc.horizon));
    s.mpc.dt = m.get_double("dt", s.mpc.dt);
    if (m.has("q")) s.mpc.q_weights = node_vec(m.child("q"));
    if (m.has("r")) s.mpc.r_weights = node_vec(m.child("r"));
    if (m.has("qn")) s.mpc.qn_weights = node_vec(m.child("qn"));
    s.mpc.use_slack = m.get_bool("slack", s.mpc.use_slack);
    s.mpc.slack_weight = m.get_double("slack_weight", s.mpc.slack_weight);
  }
  if (node.has("bound")) {
    const ConfigNode& b = node.child("bound");
    s.mpc.bound.lambda = b.get_double("lambda", s.mpc.bound.lambda);
    s.mpc.bound.eps_act = b.get_double("eps_act", s.mpc.bound.eps_act);
    s.mpc.bound.eps_bd = b.get_double("eps_bd", s.mpc.bound.eps_bd);
  }
  if (node.has("nmpc")) {
    const ConfigNode& nm = node.child("nmpc");
    s.shooting.samples = static_cast<int>(nm.get_int("samples", s.shooting.samples));
    s.shooting.iterations =
        static_cast<int>(nm.get_int("iterations", s.shooting.iterations));
    s.shooting.penalty_weight = nm.get_double("penalty", s.shooting.penalty_weight);
  }
  if (node.has("model_file")) s.model = load_model(node.child("model_file").as_string());
  if (node.has("model_drift_inject") && s.model.has_value()) {
    const double scale = node.child("model_drift_inject").as_double();
    const double bscale = node.get_double("model_authority_scale", 1.0);
    const std::uint64_t inj_seed =
        static_cast<std::uint64_t>(node.get_int("model_inject_seed", 777));
    const SerialChain& c = s.floating ? s.floating_chain.arm : s.chain;
    s.model = make_infeasibility_prone(*s.model, c.workspace_dim(), c.joint_count(),
                                       scale, bscale, inj_seed);
  }
  return s;
}

}  // namespace ksc
