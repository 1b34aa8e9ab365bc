#pragma once

#include <optional>

#include "ksc/koopman.hpp"
#include "ksc/mpc.hpp"
#include "ksc/safety.hpp"

namespace ksc {

// Planar kinematic base (unicycle twist commands) carrying a serial arm.
// Controls are [arm joint velocities; forward speed command; yaw rate
// command], so m = n_arm + 2.
struct FloatingChain {
  SerialChain arm;           // planar
  double base_radius = 0.2;  // collision sphere at the base origin
  Vec twist_min, twist_max;  // (v, omega) command limits

  int arm_joints() const { return arm.joint_count(); }
  int control_dim() const { return arm_joints() + 2; }
  // Predictive state: [q_arm; heading; v; omega] — no global translation.
  int state_dim() const { return arm_joints() + 3; }
  // Spheres: arm link midpoints, arm tip, then the base sphere.
  int sphere_count() const { return arm.sphere_count() + 1; }
  double sphere_radius(int sphere) const;
  Vec control_min() const;
  Vec control_max() const;

  void validate() const;
};

struct FloatingState {
  Vec q;              // arm joints
  Vec2 base_pos;      // world (x, y): simulation ground truth only
  double heading = 0.0;
  Vec v_base;         // measured twist (v, omega)
  Vec u_lag_arm;      // actuator filter state

  // [q; heading; v; omega] — the coordinates the lifted model evolves.
  Vec predictive_state(const FloatingChain& chain) const;

  static FloatingState initial(const FloatingChain& chain, const Vec& q0,
                               const Vec2& pos, double heading);
};

// Twist commands respond with first-order lag alpha_base; arm joints with
// alpha_arm. The pose integrates the updated twist at the old heading.
FloatingState step_floating_plant(const FloatingChain& chain,
                                  const FloatingState& state, const Vec& u,
                                  double dt, double alpha_arm = 1.0,
                                  double alpha_base = 0.6);

// World-frame geometry of one collision sphere.
struct FloatingGeometry {
  Vec center;  // 2D world position
  Mat jq;      // 2 x n_arm
  Mat jb;      // 2 x 2, columns for (v, omega)
};

FloatingGeometry floating_sphere_geometry(const FloatingChain& chain,
                                          const FloatingState& state, int sphere);

// v_link = J_b v_base + J_q qdot (exact sum; linear in both arguments).
Vec whole_body_velocity(const Mat& jb, const Vec& v_base, const Mat& jq,
                        const Vec& qdot);

// Appendix-style velocity row over the arm joint velocities with the base
// twist as measured drift: kappa * u_d^T (J_q qdot + J_b v_base - v_obs)
// <= b_phi. Zero drift reduces bitwise to the fixed-base analytic row.
std::optional<PhiDotRow> floating_constraint_row(const FloatingChain& chain,
                                                 const FloatingState& state,
                                                 const Obstacle& obstacle, int sphere,
                                                 const SafetyIndexParams& gamma,
                                                 double dt,
                                                 const SafetyBoundConfig& config);

struct FloatingMpcOptions {
  // Default (off) treats the commanded base twist as a known input schedule
  // and keeps joint velocities as the only decision variables. Scenarios
  // that need base steering authority switch it on.
  bool base_twist_in_decision = false;
  Vec base_twist_plan;  // commanded twist used as drift schedule when off
};

// Condensed floating-base safe MPC: geometry (u_d, J_b, J_q) evaluated once
// at the measured state and reused across the horizon, drift identical at
// every step.
CondensedQp build_floating_kmpc(const KoopmanModel& model, const FloatingChain& chain,
                                const FloatingState& state,
                                const std::vector<Obstacle>& obstacles,
                                const SafetyIndexParams& gamma, int step,
                                const ReferenceFn& reference, const MpcConfig& config,
                                const FloatingMpcOptions& options);

// Random-excitation data for the floating plant in predictive-state
// coordinates; the returned windows feed the shared trainer.
std::vector<Window> sample_floating_windows(const FloatingChain& chain, int count,
                                            int horizon, int k_steps, double dt,
                                            std::uint64_t seed, double alpha_arm,
                                            double alpha_base);

}  // namespace ksc
