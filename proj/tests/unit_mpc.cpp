#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ksc/mpc.hpp"
#include "ksc/scenario.hpp"
#include "oracles.hpp"

using namespace ksc;

namespace {

SerialChain planar3() {
  return SerialChain::planar(3, {0.6, 0.5, 0.4}, {0.05, 0.05, 0.05}, 1.5);
}

MpcConfig make_config(int nx, int m, int w, double dt = 0.02) {
  MpcConfig cfg;
  cfg.horizon = 9;
  cfg.dt = dt;
  cfg.q_weights = Vec::Zero(nx);
  for (int i = 0; i < w; ++i) cfg.q_weights[i] = 1.0;
  cfg.qn_weights = 2.0 * cfg.q_weights;
  cfg.r_weights = Vec::Constant(m, 0.01);
  cfg.u_min = Vec::Constant(m, -1.5);
  cfg.u_max = Vec::Constant(m, 1.5);
  cfg.use_slack = false;
  return cfg;
}

// Koopman model whose projected dynamics equal the analytic linearization at
// q_bar: drift-free x-block with B_x = dt [J; I].
KoopmanModel matched_model(const SerialChain& chain, const Vec& q_bar, double dt) {
  const int nx = chain.state_dim();
  const int n = chain.joint_count();
  const int w = chain.workspace_dim();
  KoopmanModel m = KoopmanModel::create(nx, n, w, {6}, 4, dt, 3);
  m.B.setZero();
  m.B.topRows(w) = dt * position_jacobian(chain, q_bar, n - 1);
  m.B.middleRows(w, n) = dt * Mat::Identity(n, n);
  return m;
}

ReferenceFn fixed_reference(const Vec& x_des) {
  return [x_des](int) { return x_des; };
}

}  // namespace

TEST_CASE("drift-free model reproduces the LTI tracking solution") {
  const auto chain = planar3();
  const auto cfg = make_config(5, 3, 2);
  const PlantState state = PlantState::initial(chain, (Vec(3) << 0.4, 0.2, -0.1).finished());
  const Vec x_des = (Vec(5) << 0.9, 0.7, 0.0, 0.0, 0.0).finished();
  const auto model = matched_model(chain, state.q, cfg.dt);

  const CondensedQp kmpc = build_kmpc(model, {1.0, 0.0, 0.2}, chain, {}, state, 0,
                                      fixed_reference(x_des), cfg);
  const CondensedQp lti =
      build_lti(chain, state.q, state, 0, fixed_reference(x_des), cfg);
  const QpOutcome a = solve(kmpc.qp);
  const QpOutcome b = solve(lti.qp);
  REQUIRE(a.status == QpStatus::kSolved);
  REQUIRE(b.status == QpStatus::kSolved);
  CHECK((a.y - b.y).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("one-step scalar problem matches the hand KKT solution") {
  LiftedLinearSystem sys;
  const double a = 0.9, b = 0.2, z0 = 1.3, xd = 0.5, qn = 2.0, r = 0.1;
  sys.A = Mat::Constant(1, 1, a);
  sys.B = Mat::Constant(1, 1, b);
  sys.z0 = Vec::Constant(1, z0);
  sys.nx = 1;
  MpcConfig cfg;
  cfg.horizon = 1;
  cfg.dt = 0.1;
  cfg.q_weights = Vec::Zero(1);
  cfg.qn_weights = Vec::Constant(1, qn);
  cfg.r_weights = Vec::Constant(1, r);
  cfg.u_min = Vec::Constant(1, -10.0);
  cfg.u_max = Vec::Constant(1, 10.0);
  cfg.use_slack = false;
  const CondensedQp qp = condense(sys, Mat::Constant(1, 1, xd), {}, cfg);
  const QpOutcome out = solve(qp.qp);
  REQUIRE(out.status == QpStatus::kSolved);
  // d/du [qn (a z0 + b u - xd)^2 + r u^2] = 0
  const double expect = qn * b * (xd - a * z0) / (qn * b * b + r);
  CHECK(out.y[0] == doctest::Approx(expect).epsilon(1e-8));
}

TEST_CASE("shipped scenario configs use horizon 9") {
  for (const char* name : {"s1", "s2", "s3", "s4", "s5"})
    CHECK(scenario_preset(name).mpc.horizon == 9);
}

TEST_CASE("condensed objective equals the explicit rollout cost") {
  Rng rng(5);
  const auto chain = planar3();
  const auto cfg = make_config(5, 3, 2);
  const PlantState state = PlantState::initial(chain, rng.uniform_vec(3, -1.0, 1.0));
  KoopmanModel model = matched_model(chain, state.q, cfg.dt);
  model.A += Mat::NullaryExpr(model.A.rows(), model.A.cols(),
                              [&]() { return 0.01 * rng.normal(); });
  const Vec x_des = (Vec(5) << 0.8, 0.5, 0.0, 0.0, 0.0).finished();

  LiftedLinearSystem sys;
  sys.A = model.A;
  sys.B = model.B;
  sys.z0 = model.lift(state.x());
  sys.nx = 5;
  Mat refs(5, cfg.horizon);
  for (int k = 0; k < cfg.horizon; ++k) refs.col(k) = x_des;
  const CondensedQp qp = condense(sys, refs, {}, cfg);

  for (int trial = 0; trial < 10; ++trial) {
    const Vec u = rng.uniform_vec(3 * cfg.horizon, -1.0, 1.0);
    const double via_qp = 0.5 * u.dot(qp.qp.H * u) + qp.qp.g.dot(u) + qp.qp.obj_offset;
    const double via_rollout = rollout_cost(sys, refs, cfg, u);
    CHECK(std::abs(via_qp - via_rollout) < 1e-9 * std::max(1.0, std::abs(via_rollout)));
  }
}

TEST_CASE("condensation handles known-input schedules") {
  Rng rng(7);
  LiftedLinearSystem sys;
  sys.A = Mat::NullaryExpr(4, 4, [&]() { return 0.2 * rng.normal(); });
  sys.A += Mat::Identity(4, 4);
  sys.B = Mat::NullaryExpr(4, 1, [&]() { return rng.normal(); });
  sys.B_fixed = Mat::NullaryExpr(4, 2, [&]() { return rng.normal(); });
  sys.z0 = rng.normal_vec(4);
  sys.nx = 2;
  MpcConfig cfg;
  cfg.horizon = 5;
  cfg.dt = 0.05;
  cfg.q_weights = Vec::Ones(2);
  cfg.qn_weights = Vec::Ones(2);
  cfg.r_weights = Vec::Constant(1, 0.1);
  cfg.u_min = Vec::Constant(1, -2.0);
  cfg.u_max = Vec::Constant(1, 2.0);
  cfg.use_slack = false;
  for (int k = 0; k < 5; ++k) sys.fixed_inputs.push_back(rng.uniform_vec(2, -0.5, 0.5));
  Mat refs = Mat::Zero(2, 5);
  const CondensedQp qp = condense(sys, refs, {}, cfg);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec u = rng.uniform_vec(5, -1.0, 1.0);
    const double via_qp = 0.5 * u.dot(qp.qp.H * u) + qp.qp.g.dot(u) + qp.qp.obj_offset;
    CHECK(std::abs(via_qp - rollout_cost(sys, refs, cfg, u)) < 1e-9);
  }
}

TEST_CASE("drift-free operators reproduce the LTV first control") {
  const auto chain = planar3();
  const auto cfg = make_config(5, 3, 2);
  const PlantState state =
      PlantState::initial(chain, (Vec(3) << -0.3, 0.7, 0.2).finished());
  const auto model = matched_model(chain, state.q, cfg.dt);
  const Vec x_des = (Vec(5) << 0.6, 0.9, 0.0, 0.0, 0.0).finished();
  const QpOutcome a =
      solve(build_kmpc(model, {1.0, 0.0, 0.2}, chain, {}, state, 0,
                       fixed_reference(x_des), cfg).qp);
  const QpOutcome b =
      solve(build_ltv(chain, state, 0, fixed_reference(x_des), cfg).qp);
  REQUIRE(a.status == QpStatus::kSolved);
  REQUIRE(b.status == QpStatus::kSolved);
  CHECK((a.y.head(3) - b.y.head(3)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("LTV at q_star produces the identical QP to LTI") {
  const auto chain = planar3();
  const auto cfg = make_config(5, 3, 2);
  const PlantState state = PlantState::initial(chain, (Vec(3) << 0.2, 0.1, -0.4).finished());
  const Vec x_des = (Vec(5) << 0.7, 0.6, 0.0, 0.0, 0.0).finished();
  const CondensedQp lti = build_lti(chain, state.q, state, 0, fixed_reference(x_des), cfg);
  const CondensedQp ltv = build_ltv(chain, state, 0, fixed_reference(x_des), cfg);
  CHECK((lti.qp.H - ltv.qp.H).cwiseAbs().maxCoeff() == 0.0);
  CHECK((lti.qp.g - ltv.qp.g).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("safety rows in the condensed QP track the predicted chain") {
  Rng rng(11);
  const auto chain = planar3();
  auto cfg = make_config(5, 3, 2);
  cfg.use_slack = false;
  const PlantState state = PlantState::initial(chain, (Vec(3) << 0.5, 0.3, 0.2).finished());
  KoopmanModel model = matched_model(chain, state.q, cfg.dt);
  model.A += Mat::NullaryExpr(model.A.rows(), model.A.cols(),
                              [&]() { return 0.01 * rng.normal(); });
  const SafetyIndexParams gamma{1.2, 0.1, 0.2};
  const Obstacle obs = Obstacle::fixed((Vec(2) << 0.8, 0.5).finished());
  const Vec x_des = (Vec(5) << 0.8, 0.5, 0.0, 0.0, 0.0).finished();
  const CondensedQp qp = build_kmpc(model, gamma, chain, {obs}, state, 0,
                                    fixed_reference(x_des), cfg);
  REQUIRE(!qp.safety_row_indices.empty());

  // Rebuild the frozen specs the same way the builder activates them.
  std::vector<SafetyRowSpec> specs;
  for (int link = 0; link < chain.sphere_count(); ++link) {
    const auto coeffs = phidot_coeffs(model, gamma, chain, state.q, obs, link);
    const auto bound = safety_bound(coeffs.phi, cfg.bound);
    if (!bound.has_value()) continue;
    specs.push_back({coeffs.grad_x, *bound, link, 0});
  }
  REQUIRE(static_cast<int>(specs.size()) * cfg.horizon ==
          static_cast<int>(qp.safety_row_indices.size()));

  for (int trial = 0; trial < 5; ++trial) {
    const Vec u = rng.uniform_vec(3 * cfg.horizon, -1.0, 1.0);
    // Explicit lifted rollout.
    std::vector<Vec> z{model.lift(state.x())};
    for (int k = 0; k < cfg.horizon; ++k)
      z.push_back(model.A * z.back() + model.B * u.segment(3 * k, 3));
    int row = 0;
    for (const auto& spec : specs) {
      for (int k = 0; k < cfg.horizon; ++k, ++row) {
        const double lhs = qp.qp.G.row(row).dot(u);
        const double explicit_diff =
            spec.grad_x.dot((z[k + 1] - z[k]).head(5));
        const double rhs_gap = cfg.dt * spec.rhs - qp.qp.h[row];
        CHECK(std::abs((lhs + rhs_gap) - explicit_diff) < 1e-9);
      }
    }
  }
}

TEST_CASE("safety filter passes safe references through") {
  const Vec u_ref = (Vec(2) << 0.3, -0.2).finished();
  const auto out = safety_filter(u_ref, {}, Vec::Constant(2, -1.0), Vec::Constant(2, 1.0),
                                 false, 1e3);
  CHECK((out.u - u_ref).norm() == 0.0);
}

TEST_CASE("single-row violation projects onto the half-space") {
  // phi_dot = (a u + c)/dt <= rhs with a=dt, c=0, rhs=-0.5 -> u <= -0.5.
  PhiDotRow row;
  row.a = Vec::Constant(1, 0.1);
  row.c = 0.0;
  row.rhs = -0.5;
  row.dt = 0.1;
  const Vec u_ref = Vec::Constant(1, 0.8);
  const auto out = safety_filter(u_ref, {row}, Vec::Constant(1, -2.0),
                                 Vec::Constant(1, 2.0), false, 1e3);
  REQUIRE(out.status == QpStatus::kSolved);
  CHECK(out.u[0] == doctest::Approx(-0.5).epsilon(1e-6));
}

TEST_CASE("filter agrees with a directly assembled projection QP") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const int m = 3;
    std::vector<PhiDotRow> rows;
    for (int i = 0; i < 4; ++i) {
      PhiDotRow row;
      row.a = rng.normal_vec(m) * 0.1;
      row.c = rng.uniform(-0.05, 0.05);
      row.rhs = rng.uniform(-0.1, 0.05);
      row.dt = 0.02;
      rows.push_back(std::move(row));
    }
    const Vec u_ref = rng.uniform_vec(m, -1.0, 1.0);
    const Vec lo = Vec::Constant(m, -1.0);
    const Vec hi = Vec::Constant(m, 1.0);
    const auto filtered = safety_filter(u_ref, rows, lo, hi, false, 1e3);
    if (filtered.status != QpStatus::kSolved) continue;

    QpProblem p;
    p.H = 2.0 * Mat::Identity(m, m);
    p.g = -2.0 * u_ref;
    p.G = Mat(4, m);
    p.h = Vec(4);
    for (int i = 0; i < 4; ++i) {
      p.G.row(i) = rows[i].a.transpose();
      p.h[i] = rows[i].dt * rows[i].rhs - rows[i].c;
    }
    p.lb = lo;
    p.ub = hi;
    const QpOutcome direct = solve(p);
    REQUIRE(direct.status == QpStatus::kSolved);
    CHECK((filtered.u - direct.y).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("zero-variance single-sample shooting returns zero controls") {
  const auto chain = planar3();
  auto cfg = make_config(5, 3, 2);
  const PlantState state = PlantState::initial(chain, Vec::Zero(3));
  ShootingConfig shoot;
  shoot.samples = 1;
  shoot.iterations = 1;
  shoot.init_std_scale = 0.0;
  const auto seq = shooting_nmpc(chain, {}, {1.0, 0.0, 0.2}, state, 0,
                                 fixed_reference(Vec::Zero(5)), cfg, shoot);
  for (const Vec& u : seq) CHECK(u.norm() == 0.0);
}

TEST_CASE("shooting approaches the convex optimum on a linear toy") {
  const auto chain = planar3();
  auto cfg = make_config(5, 3, 2);
  // Track joint coordinates only: the alpha=1 plant is exactly linear in q,
  // so the condensed QP optimum is the true optimum of the shooting cost.
  cfg.horizon = 5;
  cfg.q_weights = (Vec(5) << 0.0, 0.0, 1.0, 1.0, 1.0).finished();
  cfg.qn_weights = 2.0 * cfg.q_weights;
  const PlantState state = PlantState::initial(chain, (Vec(3) << 0.2, -0.1, 0.3).finished());
  const Vec x_des = (Vec(5) << 0.0, 0.0, 0.5, 0.2, -0.1).finished();

  ShootingConfig shoot;
  shoot.samples = 1000;
  shoot.iterations = 8;
  shoot.seed = 9;
  shoot.plant_alpha = 1.0;
  const auto seq = shooting_nmpc(chain, {}, {1.0, 0.0, 0.2}, state, 0,
                                 fixed_reference(x_des), cfg, shoot);
  const double nmpc_cost = shooting_cost(chain, {}, {1.0, 0.0, 0.2}, state, 0,
                                         fixed_reference(x_des), cfg, shoot.penalty_weight,
                                         1.0, seq);

  const CondensedQp qp = build_ltv(chain, state, 0, fixed_reference(x_des), cfg);
  const QpOutcome opt = solve(qp.qp);
  REQUIRE(opt.status == QpStatus::kSolved);
  CHECK(nmpc_cost <= 1.05 * opt.objective + 1e-9);
  CHECK(nmpc_cost >= opt.objective - 1e-9);
}

TEST_CASE("more shooting samples never hurt on matched seeds") {
  const auto chain = planar3();
  auto cfg = make_config(5, 3, 2);
  const PlantState state = PlantState::initial(chain, (Vec(3) << 0.4, 0.1, -0.2).finished());
  const Vec x_des = (Vec(5) << 0.8, 0.4, 0.0, 0.0, 0.0).finished();
  const SafetyIndexParams gamma{1.0, 0.0, 0.2};

  ShootingConfig small;
  small.samples = 10;
  small.iterations = 1;
  small.seed = 4;
  small.plant_alpha = 1.0;
  ShootingConfig big = small;
  big.samples = 100;

  const auto seq10 = shooting_nmpc(chain, {}, gamma, state, 0, fixed_reference(x_des),
                                   cfg, small);
  const auto seq100 = shooting_nmpc(chain, {}, gamma, state, 0, fixed_reference(x_des),
                                    cfg, big);
  const double c10 = shooting_cost(chain, {}, gamma, state, 0, fixed_reference(x_des),
                                   cfg, small.penalty_weight, 1.0, seq10);
  const double c100 = shooting_cost(chain, {}, gamma, state, 0, fixed_reference(x_des),
                                    cfg, big.penalty_weight, 1.0, seq100);
  CHECK(c100 <= c10 + 1e-12);
}
