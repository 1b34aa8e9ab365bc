#include "ksc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ksc {

void MpcConfig::validate(int nx, int m) const {
  if (horizon < 1) throw std::invalid_argument("MpcConfig: horizon must be >= 1");
  if (q_weights.size() != nx || qn_weights.size() != nx)
    throw std::invalid_argument("MpcConfig: state weight dimension mismatch");
  if (r_weights.size() != m)
    throw std::invalid_argument("MpcConfig: control weight dimension mismatch");
  if ((q_weights.array() < 0).any() || (r_weights.array() < 0).any() ||
      (qn_weights.array() < 0).any())
    throw std::invalid_argument("MpcConfig: weights must be nonnegative");
  if (u_min.size() != m || u_max.size() != m)
    throw std::invalid_argument("MpcConfig: control limit dimension mismatch");
  if (!(dt > 0.0)) throw std::invalid_argument("MpcConfig: dt must be positive");
}

CondensedQp condense(const LiftedLinearSystem& sys, const Mat& x_des,
                     const std::vector<SafetyRowSpec>& safety,
                     const MpcConfig& config,
                     const std::vector<PhiDotRow>& velocity_rows) {
  const int N = config.horizon;
  const int L = static_cast<int>(sys.A.rows());
  const int m = static_cast<int>(sys.B.cols());
  const int nx = sys.nx;
  config.validate(nx, m);
  if (x_des.rows() != nx || x_des.cols() != N)
    throw std::invalid_argument("condense: reference must be nx x N (steps 1..N)");
  const bool has_fixed = sys.B_fixed.size() > 0;
  if (has_fixed && static_cast<int>(sys.fixed_inputs.size()) != N)
    throw std::invalid_argument("condense: fixed input schedule must cover the horizon");

  // Projected impulse blocks D_p = P A^p B and the control-free chain s_k.
  std::vector<Mat> d_blocks(N);      // nx x m
  std::vector<Mat> pa_chain(N + 1);  // P A^p
  pa_chain[0] = Mat::Zero(nx, L);
  pa_chain[0].leftCols(nx).setIdentity();
  for (int p = 0; p < N; ++p) {
    d_blocks[p] = pa_chain[p] * sys.B;
    pa_chain[p + 1] = pa_chain[p] * sys.A;
  }

  std::vector<Vec> s_chain(N + 1);
  {
    Vec z = sys.z0;
    s_chain[0] = z.head(nx);
    for (int k = 0; k < N; ++k) {
      z = sys.A * z;
      if (has_fixed) z += sys.B_fixed * sys.fixed_inputs[k];
      s_chain[k + 1] = z.head(nx);
    }
  }

  // Prediction matrix F: block row k-1 (state k), block col j holds D_{k-1-j}.
  Mat f = Mat::Zero(N * nx, N * m);
  for (int k = 1; k <= N; ++k)
    for (int j = 0; j < k; ++j)
      f.block((k - 1) * nx, j * m, nx, m) = d_blocks[k - 1 - j];

  Vec qbar(N * nx);
  for (int k = 1; k <= N; ++k)
    qbar.segment((k - 1) * nx, nx) = (k == N) ? config.qn_weights : config.q_weights;

  Vec err0(N * nx);  // control-free tracking error s_k - x_des_k
  for (int k = 1; k <= N; ++k)
    err0.segment((k - 1) * nx, nx) = s_chain[k] - x_des.col(k - 1);

  const Mat qf = qbar.asDiagonal() * f;
  CondensedQp out;
  out.control_dim = m;
  out.qp.H = 2.0 * (f.transpose() * qf);
  for (int k = 0; k < N; ++k)
    out.qp.H.block(k * m, k * m, m, m) += 2.0 * Mat(config.r_weights.asDiagonal());
  out.qp.H = 0.5 * (out.qp.H + out.qp.H.transpose()).eval();
  out.qp.g = 2.0 * (qf.transpose() * err0);
  out.qp.obj_offset = err0.dot(qbar.cwiseProduct(err0));

  out.qp.lb = Vec(N * m);
  out.qp.ub = Vec(N * m);
  for (int k = 0; k < N; ++k) {
    out.qp.lb.segment(k * m, m) = config.u_min;
    out.qp.ub.segment(k * m, m) = config.u_max;
  }

  // Safety rows: for each frozen spec and step k, constrain the projected
  // one-step difference, grad^T (P z_{k+1} - P z_k) <= dt * rhs. The
  // coefficients reuse the D_p blocks of the cost. Velocity rows repeat the
  // same control inequality at every step.
  const int rows =
      static_cast<int>(safety.size() + velocity_rows.size()) * N;
  out.qp.G = Mat::Zero(rows, N * m);
  out.qp.h = Vec::Zero(rows);
  int row = 0;
  for (const SafetyRowSpec& spec : safety) {
    if (spec.grad_x.size() != nx)
      throw std::invalid_argument("condense: safety gradient dimension mismatch");
    for (int k = 0; k < N; ++k) {
      for (int j = 0; j <= k; ++j) {
        Vec coef = d_blocks[k - j].transpose() * spec.grad_x;
        if (j < k) coef -= d_blocks[k - 1 - j].transpose() * spec.grad_x;
        out.qp.G.block(row, j * m, 1, m) = coef.transpose();
      }
      out.qp.h[row] = config.dt * spec.rhs - spec.grad_x.dot(s_chain[k + 1] - s_chain[k]);
      out.safety_row_indices.push_back(row);
      ++row;
    }
  }
  for (const PhiDotRow& vrow : velocity_rows) {
    if (vrow.a.size() != m)
      throw std::invalid_argument("condense: velocity row dimension mismatch");
    for (int k = 0; k < N; ++k) {
      out.qp.G.block(row, k * m, 1, m) = vrow.a.transpose();
      out.qp.h[row] = vrow.dt * vrow.rhs - vrow.c;
      out.safety_row_indices.push_back(row);
      ++row;
    }
  }

  if (config.use_slack && !out.safety_row_indices.empty()) {
    out.qp = add_slack(out.qp, out.safety_row_indices, config.slack_weight);
  }
  out.qp.validate();
  return out;
}

double rollout_cost(const LiftedLinearSystem& sys, const Mat& x_des,
                    const MpcConfig& config, const Vec& u_stacked) {
  const int N = config.horizon;
  const int m = static_cast<int>(sys.B.cols());
  const bool has_fixed = sys.B_fixed.size() > 0;
  Vec z = sys.z0;
  double cost = 0.0;
  for (int k = 0; k < N; ++k) {
    const Vec u = u_stacked.segment(k * m, m);
    cost += u.dot(config.r_weights.cwiseProduct(u));
    z = sys.A * z + sys.B * u;
    if (has_fixed) z += sys.B_fixed * sys.fixed_inputs[k];
    const Vec err = z.head(sys.nx) - x_des.col(k);
    const Vec& w = (k == N - 1) ? config.qn_weights : config.q_weights;
    cost += err.dot(w.cwiseProduct(err));
  }
  return cost;
}

namespace {

Mat stack_reference(const ReferenceFn& reference, int step, int horizon, int nx) {
  Mat x_des(nx, horizon);
  for (int k = 1; k <= horizon; ++k) {
    const Vec r = reference(step + k);
    if (r.size() != nx) throw std::invalid_argument("reference dimension mismatch");
    x_des.col(k - 1) = r;
  }
  return x_des;
}

LiftedLinearSystem analytic_system(const SerialChain& chain, const Vec& q_bar,
                                   const PlantState& state, double dt) {
  const int n = chain.joint_count();
  const int w = chain.workspace_dim();
  const int nx = w + n;
  LiftedLinearSystem sys;
  sys.A = Mat::Identity(nx, nx);
  sys.B = Mat::Zero(nx, n);
  sys.B.topRows(w) = dt * position_jacobian(chain, q_bar, n - 1);
  sys.B.bottomRows(n) = dt * Mat::Identity(n, n);
  sys.z0 = state.x();
  sys.nx = nx;
  return sys;
}

}  // namespace

CondensedQp build_kmpc(const KoopmanModel& model, const SafetyIndexParams& gamma,
                       const SerialChain& chain,
                       const std::vector<Obstacle>& obstacles,
                       const PlantState& state, int step,
                       const ReferenceFn& reference, const MpcConfig& config) {
  const int nx = chain.state_dim();
  if (model.state_dim() != nx)
    throw std::invalid_argument("build_kmpc: model/chain state mismatch");

  LiftedLinearSystem sys;
  sys.A = model.A;
  sys.B = model.B;
  sys.z0 = model.lift(state.x());
  sys.nx = nx;

  std::vector<SafetyRowSpec> rows;
  for (std::size_t o = 0; o < obstacles.size(); ++o) {
    for (int link = 0; link < chain.sphere_count(); ++link) {
      const PhiDotCoeffs coeffs =
          phidot_coeffs(model, gamma, chain, state.q, obstacles[o], link);
      const std::optional<double> bound = safety_bound(coeffs.phi, config.bound);
      if (!bound.has_value()) continue;
      SafetyRowSpec spec;
      spec.grad_x = coeffs.grad_x;
      spec.rhs = *bound;
      spec.link_index = link;
      spec.obstacle_index = static_cast<int>(o);
      rows.push_back(std::move(spec));
    }
  }

  const Mat x_des = stack_reference(reference, step, config.horizon, nx);
  return condense(sys, x_des, rows, config);
}

CondensedQp build_lti(const SerialChain& chain, const Vec& q_star,
                      const PlantState& state, int step,
                      const ReferenceFn& reference, const MpcConfig& config) {
  const LiftedLinearSystem sys = analytic_system(chain, q_star, state, config.dt);
  const Mat x_des = stack_reference(reference, step, config.horizon, sys.nx);
  return condense(sys, x_des, {}, config);
}

CondensedQp build_ltv(const SerialChain& chain, const PlantState& state, int step,
                      const ReferenceFn& reference, const MpcConfig& config) {
  const LiftedLinearSystem sys = analytic_system(chain, state.q, state, config.dt);
  const Mat x_des = stack_reference(reference, step, config.horizon, sys.nx);
  return condense(sys, x_des, {}, config);
}

FilterResult safety_filter(const Vec& u_ref, const std::vector<PhiDotRow>& rows,
                           const Vec& u_min, const Vec& u_max, bool use_slack,
                           double slack_weight) {
  const int m = static_cast<int>(u_ref.size());
  FilterResult result;
  if (rows.empty()) {
    result.u = clamp(u_ref, u_min, u_max);
    result.status = QpStatus::kSolved;
    return result;
  }
  QpProblem p;
  p.H = 2.0 * Mat::Identity(m, m);
  p.g = -2.0 * u_ref;
  p.G = Mat::Zero(static_cast<int>(rows.size()), m);
  p.h = Vec::Zero(static_cast<int>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    p.G.row(static_cast<int>(i)) = rows[i].a.transpose();
    p.h[static_cast<int>(i)] = rows[i].dt * rows[i].rhs - rows[i].c;
  }
  p.lb = u_min;
  p.ub = u_max;
  QpProblem to_solve = p;
  if (use_slack) {
    std::vector<int> all(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) all[i] = static_cast<int>(i);
    to_solve = add_slack(p, all, slack_weight);
  }
  Vec start = Vec::Zero(to_solve.var_count());
  start.head(m) = u_ref;
  const QpOutcome out = solve(to_solve, start);
  result.status = out.status;
  if (out.status == QpStatus::kSolved) {
    result.u = clamp(Vec(out.y.head(m)), u_min, u_max);
    result.slack_total = out.slack_values.size() ? out.slack_values.sum() : 0.0;
  } else {
    result.u = clamp(u_ref, u_min, u_max);
  }
  return result;
}

double shooting_cost(const SerialChain& chain, const std::vector<Obstacle>& obstacles,
                     const SafetyIndexParams& gamma, const PlantState& state,
                     int step, const ReferenceFn& reference, const MpcConfig& config,
                     double penalty_weight, double plant_alpha,
                     const std::vector<Vec>& controls) {
  PlantState sim = state;
  double cost = 0.0;
  const int N = config.horizon;
  for (int k = 0; k < N; ++k) {
    const Vec u = clamp(controls[k], config.u_min, config.u_max);
    cost += u.dot(config.r_weights.cwiseProduct(u));
    sim = step_plant(chain, sim, u, config.dt, plant_alpha);
    const Vec err = sim.x() - reference(step + k + 1);
    const Vec& w = (k == N - 1) ? config.qn_weights : config.q_weights;
    cost += err.dot(w.cwiseProduct(err));
    // Quadratic hinge on unsafe links; obstacles advance ballistically.
    const FkResult fk = forward_kinematics(chain, sim.q);
    for (const Obstacle& obs : obstacles) {
      const Vec center = obs.center + (k + 1) * config.dt * obs.velocity;
      for (int s = 0; s < chain.sphere_count(); ++s) {
        const double d = std::max(
            (fk.sphere_center(s) - center).norm() - chain.sphere_radius(s), 1e-9);
        const double phi = phi_param(gamma, d);
        if (phi > 0.0) cost += penalty_weight * phi * phi;
      }
    }
  }
  return cost;
}

std::vector<Vec> shooting_nmpc(const SerialChain& chain,
                               const std::vector<Obstacle>& obstacles,
                               const SafetyIndexParams& gamma,
                               const PlantState& state, int step,
                               const ReferenceFn& reference, const MpcConfig& config,
                               const ShootingConfig& shooting) {
  if (shooting.samples < 1)
    throw std::invalid_argument("shooting_nmpc: need at least one sample");
  const int N = config.horizon;
  const int m = static_cast<int>(config.u_min.size());
  const Vec half_range = 0.5 * (config.u_max - config.u_min);

  std::vector<Vec> mean(N, Vec::Zero(m));
  std::vector<Vec> stddev(N, shooting.init_std_scale * half_range);

  std::vector<Vec> best_seq = mean;
  double best_cost =
      shooting_cost(chain, obstacles, gamma, state, step, reference, config,
                    shooting.penalty_weight, shooting.plant_alpha, mean);

  Rng base(shooting.seed);
  const int elites = std::max(
      1, static_cast<int>(std::ceil(shooting.elite_fraction * shooting.samples)));

  for (int iter = 0; iter < shooting.iterations; ++iter) {
    std::vector<std::vector<Vec>> candidates(shooting.samples);
    std::vector<std::pair<double, int>> scored(shooting.samples);
    for (int i = 0; i < shooting.samples; ++i) {
      // Candidate i draws from its own stream, so a larger sample count
      // keeps the earlier candidates identical (common random numbers).
      Rng stream = base.fork(static_cast<std::uint64_t>(iter) * 1000003ull +
                             static_cast<std::uint64_t>(i));
      std::vector<Vec> seq(N);
      for (int k = 0; k < N; ++k) {
        seq[k] = mean[k] + stddev[k].cwiseProduct(stream.normal_vec(m));
        seq[k] = clamp(seq[k], config.u_min, config.u_max);
      }
      const double cost =
          shooting_cost(chain, obstacles, gamma, state, step, reference, config,
                        shooting.penalty_weight, shooting.plant_alpha, seq);
      candidates[i] = std::move(seq);
      scored[i] = {cost, i};
    }
    std::sort(scored.begin(), scored.end());
    if (scored.front().first < best_cost) {
      best_cost = scored.front().first;
      best_seq = candidates[scored.front().second];
    }
    // Refit the sampler to the elite set.
    for (int k = 0; k < N; ++k) {
      Vec mu = Vec::Zero(m);
      for (int e = 0; e < elites; ++e) mu += candidates[scored[e].second][k];
      mu /= elites;
      Vec var = Vec::Zero(m);
      for (int e = 0; e < elites; ++e) {
        const Vec d = candidates[scored[e].second][k] - mu;
        var += d.cwiseProduct(d);
      }
      var /= elites;
      mean[k] = mu;
      stddev[k] = var.cwiseSqrt().cwiseMax(1e-3 * half_range);
    }
  }
  return best_seq;
}

}  // namespace ksc
