#include "ksc/floatbase.hpp"

#include <cmath>
#include <stdexcept>

namespace ksc {

double FloatingChain::sphere_radius(int sphere) const {
  if (sphere < arm.sphere_count()) return arm.sphere_radius(sphere);
  if (sphere == arm.sphere_count()) return base_radius;
  throw std::out_of_range("FloatingChain: sphere index out of range");
}

Vec FloatingChain::control_min() const {
  Vec u(control_dim());
  u << arm.u_min, twist_min;
  return u;
}

Vec FloatingChain::control_max() const {
  Vec u(control_dim());
  u << arm.u_max, twist_max;
  return u;
}

void FloatingChain::validate() const {
  arm.validate();
  if (arm.axis_mode != AxisMode::kPlanarZ)
    throw std::invalid_argument("FloatingChain: the carried arm must be planar");
  if (!(base_radius > 0.0))
    throw std::invalid_argument("FloatingChain: base radius must be positive");
  if (twist_min.size() != 2 || twist_max.size() != 2)
    throw std::invalid_argument("FloatingChain: twist limits must be 2D");
  for (int i = 0; i < 2; ++i)
    if (!(twist_min[i] < twist_max[i]))
      throw std::invalid_argument("FloatingChain: twist_min must be below twist_max");
}

Vec FloatingState::predictive_state(const FloatingChain& chain) const {
  Vec x(chain.state_dim());
  x << q, heading, v_base;
  return x;
}

FloatingState FloatingState::initial(const FloatingChain& chain, const Vec& q0,
                                     const Vec2& pos, double heading) {
  FloatingState s;
  s.q = q0;
  s.base_pos = pos;
  s.heading = heading;
  s.v_base = Vec::Zero(2);
  s.u_lag_arm = Vec::Zero(chain.arm_joints());
  return s;
}

FloatingState step_floating_plant(const FloatingChain& chain,
                                  const FloatingState& state, const Vec& u,
                                  double dt, double alpha_arm, double alpha_base) {
  if (u.size() != chain.control_dim())
    throw std::invalid_argument("step_floating_plant: control dimension mismatch");
  const int n = chain.arm_joints();
  const Vec qdot_cmd = clamp(Vec(u.head(n)), chain.arm.u_min, chain.arm.u_max);
  const Vec twist_cmd = clamp(Vec(u.tail(2)), chain.twist_min, chain.twist_max);

  FloatingState next = state;
  next.u_lag_arm = (1.0 - alpha_arm) * state.u_lag_arm + alpha_arm * qdot_cmd;
  next.q = state.q + dt * next.u_lag_arm;
  next.v_base = (1.0 - alpha_base) * state.v_base + alpha_base * twist_cmd;
  next.base_pos = state.base_pos +
                  dt * next.v_base[0] * Vec2(std::cos(state.heading),
                                             std::sin(state.heading));
  next.heading = state.heading + dt * next.v_base[1];
  return next;
}

FloatingGeometry floating_sphere_geometry(const FloatingChain& chain,
                                          const FloatingState& state, int sphere) {
  const int n = chain.arm_joints();
  const double c = std::cos(state.heading);
  const double s = std::sin(state.heading);
  Mat2 rot;
  rot << c, -s, s, c;

  FloatingGeometry geo;
  if (sphere < chain.arm.sphere_count()) {
    const FkResult fk = forward_kinematics(chain.arm, state.q);
    const Vec local = fk.sphere_center(sphere);
    geo.center = state.base_pos + rot * local;
    geo.jq = rot * sphere_jacobian(chain.arm, state.q, sphere);
    geo.jb = Mat::Zero(2, 2);
    geo.jb.col(0) = Vec2(c, s);               // forward speed
    const Vec world_offset = rot * local;     // omega column: perpendicular lever
    geo.jb(0, 1) = -world_offset[1];
    geo.jb(1, 1) = world_offset[0];
  } else if (sphere == chain.arm.sphere_count()) {
    geo.center = state.base_pos;
    geo.jq = Mat::Zero(2, n);
    geo.jb = Mat::Zero(2, 2);
    geo.jb.col(0) = Vec2(c, s);
  } else {
    throw std::out_of_range("floating_sphere_geometry: sphere index out of range");
  }
  return geo;
}

Vec whole_body_velocity(const Mat& jb, const Vec& v_base, const Mat& jq,
                        const Vec& qdot) {
  if (jb.cols() != v_base.size() || jq.cols() != qdot.size() || jb.rows() != jq.rows())
    throw std::invalid_argument("whole_body_velocity: dimension mismatch");
  return jb * v_base + jq * qdot;
}

std::optional<PhiDotRow> floating_constraint_row(const FloatingChain& chain,
                                                 const FloatingState& state,
                                                 const Obstacle& obstacle, int sphere,
                                                 const SafetyIndexParams& gamma,
                                                 double dt,
                                                 const SafetyBoundConfig& config) {
  gamma.validate();
  config.validate();
  const FloatingGeometry geo = floating_sphere_geometry(chain, state, sphere);
  const Vec delta = obstacle.center - geo.center;
  const double center_dist = delta.norm();
  if (center_dist < 1e-12)
    throw std::invalid_argument("floating_constraint_row: coincident centers");
  const Vec unit = delta / center_dist;
  const double d = std::max(center_dist - chain.sphere_radius(sphere), 1e-9);
  const double phi = phi_param(gamma, d);
  const std::optional<double> bound = safety_bound(phi, config);
  if (!bound.has_value()) return std::nullopt;
  const double kappa = -phi_param_slope(gamma, d);
  const Vec drift = geo.jb * state.v_base - obstacle.velocity;
  return velocity_phi_row(kappa, unit, geo.jq, drift, dt, *bound, sphere, d);
}

CondensedQp build_floating_kmpc(const KoopmanModel& model, const FloatingChain& chain,
                                const FloatingState& state,
                                const std::vector<Obstacle>& obstacles,
                                const SafetyIndexParams& gamma, int step,
                                const ReferenceFn& reference, const MpcConfig& config,
                                const FloatingMpcOptions& options) {
  const int n = chain.arm_joints();
  const int nx = chain.state_dim();
  const int m = chain.control_dim();
  if (model.state_dim() != nx || model.control_dim() != m)
    throw std::invalid_argument("build_floating_kmpc: model does not match chain");

  LiftedLinearSystem sys;
  sys.A = model.A;
  sys.z0 = model.lift(state.predictive_state(chain));
  sys.nx = nx;
  if (options.base_twist_in_decision) {
    sys.B = model.B;
  } else {
    sys.B = model.B.leftCols(n);
    sys.B_fixed = model.B.rightCols(2);
    Vec plan = options.base_twist_plan.size() == 2 ? options.base_twist_plan
                                                   : Vec(state.v_base);
    sys.fixed_inputs.assign(config.horizon, plan);
  }

  // Frozen velocity-level rows, identical at every step: geometry and drift
  // are evaluated once at the measured state.
  std::vector<PhiDotRow> rows;
  for (const Obstacle& obs : obstacles) {
    for (int sphere = 0; sphere < chain.sphere_count(); ++sphere) {
      std::optional<PhiDotRow> row =
          floating_constraint_row(chain, state, obs, sphere, gamma, config.dt,
                                  config.bound);
      if (!row.has_value()) continue;
      if (options.base_twist_in_decision) {
        // Base columns join the decision side; drift keeps only -v_obs.
        const FloatingGeometry geo = floating_sphere_geometry(chain, state, sphere);
        const double kappa = -phi_param_slope(gamma, row->distance);
        Mat jfull(2, m);
        jfull.leftCols(n) = geo.jq;
        jfull.rightCols(2) = geo.jb;
        *row = velocity_phi_row(kappa, row->unit, jfull, Vec(-obs.velocity),
                                config.dt, row->rhs, sphere, row->distance);
      }
      rows.push_back(std::move(*row));
    }
  }

  Mat x_des(nx, config.horizon);
  for (int k = 1; k <= config.horizon; ++k) {
    const Vec r = reference(step + k);
    if (r.size() != nx)
      throw std::invalid_argument("build_floating_kmpc: reference dimension mismatch");
    x_des.col(k - 1) = r;
  }
  return condense(sys, x_des, {}, config, rows);
}

std::vector<Window> sample_floating_windows(const FloatingChain& chain, int count,
                                            int horizon, int k_steps, double dt,
                                            std::uint64_t seed, double alpha_arm,
                                            double alpha_base) {
  Rng rng(seed);
  const int n = chain.arm_joints();
  const int m = chain.control_dim();
  const int nx = chain.state_dim();
  const Vec u_lo = chain.control_min();
  const Vec u_hi = chain.control_max();

  std::vector<Window> out;
  for (int t = 0; t < count; ++t) {
    FloatingState state = FloatingState::initial(
        chain, rng.uniform_vec(n, -M_PI, M_PI), Vec2::Zero(),
        rng.uniform(-M_PI, M_PI));
    std::vector<Vec> xs{state.predictive_state(chain)};
    std::vector<Vec> us;
    Vec u = Vec::Zero(m);
    for (int k = 0; k < horizon; ++k) {
      if (k % 5 == 0) u = rng.uniform_vec(m, u_lo, u_hi);
      state = step_floating_plant(chain, state, u, dt, alpha_arm, alpha_base);
      us.push_back(u);
      xs.push_back(state.predictive_state(chain));
    }
    for (int start = 0; start + k_steps <= horizon; ++start) {
      Window w;
      w.x.resize(nx, k_steps + 1);
      w.u.resize(m, k_steps);
      for (int k = 0; k <= k_steps; ++k) {
        w.x.col(k) = xs[start + k];
        if (k < k_steps) w.u.col(k) = us[start + k];
      }
      out.push_back(std::move(w));
    }
  }
  return out;
}

}  // namespace ksc
