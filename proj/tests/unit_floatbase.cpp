#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ksc/floatbase.hpp"
#include "oracles.hpp"

using namespace ksc;

namespace {

FloatingChain make_chain() {
  FloatingChain c;
  c.arm = SerialChain::planar(2, {0.35, 0.3}, {0.05, 0.05}, 1.5);
  c.base_radius = 0.15;
  c.twist_min = (Vec(2) << -0.2, -1.2).finished();
  c.twist_max = (Vec(2) << 1.0, 1.2).finished();
  c.validate();
  return c;
}

FloatingState make_state(const FloatingChain& chain, double heading = 0.7) {
  FloatingState s = FloatingState::initial(
      chain, (Vec(2) << 0.4, -0.3).finished(), Vec2(0.3, -0.2), heading);
  return s;
}

}  // namespace

TEST_CASE("zero base twist reduces to the joint contribution") {
  const auto chain = make_chain();
  const auto state = make_state(chain);
  const FloatingGeometry geo = floating_sphere_geometry(chain, state, 1);
  const Vec qdot = (Vec(2) << 0.3, -0.5).finished();
  const Vec v = whole_body_velocity(geo.jb, Vec::Zero(2), geo.jq, qdot);
  CHECK((v - geo.jq * qdot).norm() == 0.0);
}

TEST_CASE("pure base translation transports every sphere equally") {
  const auto chain = make_chain();
  const auto state = make_state(chain, 0.4);
  const Vec v_base = (Vec(2) << 0.7, 0.0).finished();  // forward only
  const Vec expect = 0.7 * Vec2(std::cos(0.4), std::sin(0.4));
  for (int s = 0; s < chain.sphere_count(); ++s) {
    const FloatingGeometry geo = floating_sphere_geometry(chain, state, s);
    const Vec v = whole_body_velocity(geo.jb, v_base, geo.jq, Vec::Zero(2));
    CHECK((v - expect).norm() < 1e-14);
  }
}

TEST_CASE("whole-body velocity matches finite differences of composite motion") {
  const auto chain = make_chain();
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    FloatingState state = make_state(chain, rng.uniform(-M_PI, M_PI));
    state.q = rng.uniform_vec(2, -1.2, 1.2);
    const Vec v_base = rng.uniform_vec(2, -0.8, 0.8);
    const Vec qdot = rng.uniform_vec(2, -1.0, 1.0);
    for (int sphere = 0; sphere < chain.sphere_count(); ++sphere) {
      const FloatingGeometry geo = floating_sphere_geometry(chain, state, sphere);
      const Vec analytic = whole_body_velocity(geo.jb, v_base, geo.jq, qdot);

      // Simulate the composite motion directly: unicycle pose + joint drift.
      auto position_at = [&](double t) {
        FloatingState moved = state;
        moved.base_pos = state.base_pos +
                         t * v_base[0] * Vec2(std::cos(state.heading),
                                              std::sin(state.heading));
        moved.heading = state.heading + t * v_base[1];
        moved.q = state.q + t * qdot;
        return Vec(floating_sphere_geometry(chain, moved, sphere).center);
      };
      const double h = 1e-6;
      const Vec fd = (position_at(h) - position_at(-h)) / (2.0 * h);
      CHECK((analytic - fd).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("superposition of base and joint motion is exact") {
  const auto chain = make_chain();
  const auto state = make_state(chain);
  const FloatingGeometry geo = floating_sphere_geometry(chain, state, 0);
  Rng rng(5);
  const Vec vb1 = rng.uniform_vec(2, -1.0, 1.0);
  const Vec vb2 = rng.uniform_vec(2, -1.0, 1.0);
  const Vec qd1 = rng.uniform_vec(2, -1.0, 1.0);
  const Vec qd2 = rng.uniform_vec(2, -1.0, 1.0);
  const Vec lhs = whole_body_velocity(geo.jb, vb1 + 2.0 * vb2, geo.jq, qd1 + 2.0 * qd2);
  const Vec rhs = whole_body_velocity(geo.jb, vb1, geo.jq, qd1) +
                  2.0 * whole_body_velocity(geo.jb, vb2, geo.jq, qd2);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("drift-free floating row bit-matches the fixed-base row") {
  const auto chain = make_chain();
  const SafetyIndexParams gamma{1.3, -0.1, 0.2};
  const SafetyBoundConfig bound;
  Rng rng(7);
  int compared = 0;
  for (int trial = 0; trial < 2000 && compared < 1000; ++trial) {
    // Identity base pose with zero twist: the floating chain occupies the
    // same workspace as the bare arm.
    FloatingState state = FloatingState::initial(
        chain, rng.uniform_vec(2, -M_PI, M_PI), Vec2::Zero(), 0.0);
    const Obstacle obs = Obstacle::fixed(rng.uniform_vec(2, -1.0, 1.0));
    for (int sphere = 0; sphere < chain.arm.sphere_count(); ++sphere) {
      std::optional<PhiDotRow> floating =
          floating_constraint_row(chain, state, obs, sphere, gamma, 0.02, bound);
      std::optional<PhiDotRow> fixed =
          analytic_phi_row(chain.arm, gamma, state.q, obs, sphere, 0.02, bound);
      REQUIRE(floating.has_value() == fixed.has_value());
      if (!floating.has_value()) continue;
      ++compared;
      REQUIRE(floating->a.size() == fixed->a.size());
      for (int i = 0; i < fixed->a.size(); ++i) CHECK(floating->a[i] == fixed->a[i]);
      CHECK(floating->c == fixed->c);
      CHECK(floating->rhs == fixed->rhs);
      CHECK(floating->distance == fixed->distance);
    }
  }
  CHECK(compared >= 1000);
}

TEST_CASE("base drift alone can exhaust the joint authority") {
  FloatingChain chain = make_chain();
  chain.arm.u_min = Vec::Constant(2, -1e-4);  // negligible joint authority
  chain.arm.u_max = Vec::Constant(2, 1e-4);
  FloatingState state = make_state(chain, 0.0);
  state.v_base = (Vec(2) << 0.9, 0.0).finished();  // charging forward

  // Obstacle dead ahead of the base sphere.
  const Obstacle obs =
      Obstacle::fixed((Vec(2) << state.base_pos[0] + 0.4, state.base_pos[1]).finished());
  const SafetyIndexParams gamma{1.0, 0.0, 0.2};
  SafetyBoundConfig bound;
  const auto row = floating_constraint_row(chain, state, obs, chain.arm.sphere_count(),
                                           gamma, 0.02, bound);
  REQUIRE(row.has_value());
  // min over joint-velocity vertices still violates the bound.
  double best = 1e18;
  for (int mask = 0; mask < 4; ++mask) {
    Vec v(2);
    v << (mask & 1 ? 1e-4 : -1e-4), (mask & 2 ? 1e-4 : -1e-4);
    best = std::min(best, (row->a.dot(v) + row->c) / row->dt);
  }
  CHECK(best > row->rhs);
}

TEST_CASE("static obstacles reduce the drift to the base term") {
  const auto chain = make_chain();
  FloatingState state = make_state(chain, 0.3);
  state.v_base = (Vec(2) << 0.5, -0.4).finished();
  const Obstacle obs = Obstacle::fixed((Vec(2) << 1.2, 0.4).finished());
  const SafetyIndexParams gamma{1.0, 0.0, 0.2};
  SafetyBoundConfig bound;
  for (int sphere = 0; sphere < chain.sphere_count(); ++sphere) {
    const auto row =
        floating_constraint_row(chain, state, obs, sphere, gamma, 0.02, bound);
    if (!row.has_value()) continue;
    const FloatingGeometry geo = floating_sphere_geometry(chain, state, sphere);
    const double kappa = -phi_param_slope(gamma, row->distance);
    const double expect = (0.02 * kappa) * row->unit.dot(geo.jb * state.v_base);
    CHECK(row->c == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("floating drift rows are constant across the horizon") {
  const auto chain = make_chain();
  FloatingState state = make_state(chain, 0.2);
  state.v_base = (Vec(2) << 0.4, 0.1).finished();
  const Obstacle obs = Obstacle::fixed((Vec(2) << 0.7, 0.0).finished());

  KoopmanModel model = KoopmanModel::create(chain.state_dim(), chain.control_dim(),
                                            0, {6}, 4, 0.02, 3);
  MpcConfig cfg;
  cfg.horizon = 5;
  cfg.dt = 0.02;
  cfg.q_weights = Vec::Ones(chain.state_dim());
  cfg.qn_weights = Vec::Ones(chain.state_dim());
  cfg.r_weights = Vec::Constant(chain.arm_joints(), 0.1);
  cfg.u_min = chain.arm.u_min;
  cfg.u_max = chain.arm.u_max;
  cfg.use_slack = false;

  FloatingMpcOptions options;  // drift mode
  options.base_twist_plan = state.v_base;
  auto reference = [&](int) { return Vec(Vec::Zero(chain.state_dim())); };
  const CondensedQp qp = build_floating_kmpc(model, chain, state, {obs},
                                             {1.0, 0.0, 0.2}, 0, reference, cfg, options);
  REQUIRE(!qp.safety_row_indices.empty());
  REQUIRE(qp.safety_row_indices.size() % cfg.horizon == 0);
  // Every row of one spec carries the same bound and the same coefficients.
  const std::size_t specs = qp.safety_row_indices.size() / cfg.horizon;
  for (std::size_t s = 0; s < specs; ++s) {
    const int first = qp.safety_row_indices[s * cfg.horizon];
    for (int k = 1; k < cfg.horizon; ++k) {
      const int row = qp.safety_row_indices[s * cfg.horizon + k];
      CHECK(qp.qp.h[row] == qp.qp.h[first]);
    }
  }
}

TEST_CASE("far obstacles and zero twist reduce to the fixed-base controller") {
  const auto chain = make_chain();
  const int n = chain.arm_joints();
  const double dt = 0.02;

  // Block-structured floating model: arm joints integrate, base coordinates
  // hold, latent block idle.
  KoopmanModel fmodel = KoopmanModel::create(chain.state_dim(), chain.control_dim(),
                                             0, {4}, 3, dt, 5);
  fmodel.B.setZero();
  for (int i = 0; i < n; ++i) fmodel.B(i, i) = dt;

  // Matching fixed-base model over [p; q]: q integrates, p held (weights on q
  // coordinates only, so the p block is irrelevant).
  KoopmanModel amodel = KoopmanModel::create(chain.arm.state_dim(), n, 2, {4}, 3, dt, 5);

  FloatingState state = FloatingState::initial(
      chain, (Vec(2) << 0.5, -0.4).finished(), Vec2::Zero(), 0.0);
  const PlantState arm_state = PlantState::initial(chain.arm, state.q);

  const Vec q_des = (Vec(2) << -0.2, 0.3).finished();

  MpcConfig fcfg;
  fcfg.horizon = 9;
  fcfg.dt = dt;
  fcfg.q_weights = (Vec(5) << 1.0, 1.0, 0.0, 0.0, 0.0).finished();
  fcfg.qn_weights = 2.0 * fcfg.q_weights;
  fcfg.r_weights = Vec::Constant(n, 0.05);
  fcfg.u_min = chain.arm.u_min;
  fcfg.u_max = chain.arm.u_max;
  fcfg.use_slack = false;
  FloatingMpcOptions options;
  options.base_twist_plan = Vec::Zero(2);
  auto f_ref = [&](int) {
    Vec x(chain.state_dim());
    x << q_des, 0.0, 0.0, 0.0;
    return x;
  };
  const QpOutcome fa = solve(
      build_floating_kmpc(fmodel, chain, state, {}, {1.0, 0.0, 0.2}, 0, f_ref, fcfg,
                          options).qp);

  MpcConfig acfg = fcfg;
  acfg.q_weights = (Vec(4) << 0.0, 0.0, 1.0, 1.0).finished();
  acfg.qn_weights = 2.0 * acfg.q_weights;
  auto a_ref = [&](int) {
    Vec x(4);
    x << 0.0, 0.0, q_des;
    return x;
  };
  const QpOutcome fb = solve(
      build_kmpc(amodel, {1.0, 0.0, 0.2}, chain.arm, {}, arm_state, 0, a_ref, acfg).qp);

  REQUIRE(fa.status == QpStatus::kSolved);
  REQUIRE(fb.status == QpStatus::kSolved);
  CHECK((fa.y.head(n) - fb.y.head(n)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("floating plant determinism and lag recurrence") {
  const auto chain = make_chain();
  FloatingState s = make_state(chain);
  const Vec u = (Vec(4) << 0.4, -0.2, 0.6, 0.3).finished();
  const FloatingState a = step_floating_plant(chain, s, u, 0.02, 0.7, 0.6);
  const FloatingState b = step_floating_plant(chain, s, u, 0.02, 0.7, 0.6);
  CHECK((a.q - b.q).norm() == 0.0);
  CHECK(a.heading == b.heading);
  // twist lag recurrence
  CHECK(a.v_base[0] == doctest::Approx(0.4 * s.v_base[0] + 0.6 * 0.6).epsilon(1e-15));
}
