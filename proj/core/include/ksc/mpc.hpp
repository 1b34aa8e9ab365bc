#pragma once

#include <functional>
#include <vector>

#include "ksc/kinematics.hpp"
#include "ksc/koopman.hpp"
#include "ksc/qp.hpp"
#include "ksc/safety.hpp"

namespace ksc {

// Reference supplier: desired state (projected coordinates) at an absolute
// step index.
using ReferenceFn = std::function<Vec(int step)>;

struct MpcConfig {
  int horizon = 9;
  Vec q_weights;   // diagonal state weights (projected coordinates)
  Vec r_weights;   // diagonal control weights
  Vec qn_weights;  // terminal weights
  double dt = 0.02;
  Vec u_min, u_max;
  bool use_slack = true;
  double slack_weight = 1e3;
  SafetyBoundConfig bound;

  void validate(int nx, int m) const;
};

// One frozen safety row to be applied along the horizon: the gradient and
// bound are evaluated at the current measured state, the drift chain is
// horizon-accurate through the condensation.
struct SafetyRowSpec {
  Vec grad_x;
  double rhs = 0.0;
  int link_index = -1;
  int obstacle_index = -1;
};

// Linear lifted system for condensation. B splits into decision columns and
// an optional known-input schedule whose contribution folds into the constant
// chain.
struct LiftedLinearSystem {
  Mat A;
  Mat B;        // decision inputs
  Vec z0;
  int nx = 0;   // projected (leading) coordinates
  Mat B_fixed;                   // may be 0 x 0
  std::vector<Vec> fixed_inputs; // horizon schedule when B_fixed is nonempty
};

// Condensed control-only QP: decision variables are the stacked controls
// u_0..u_{N-1}; the objective constant is carried in obj_offset so that the
// reported objective equals the explicit rollout cost.
struct CondensedQp {
  QpProblem qp;
  std::vector<int> safety_row_indices;  // rows of qp.G carrying safety
  int control_dim = 0;
};

// `safety` rows ride the predicted state chain; `velocity_rows` are
// velocity-level rows applied identically to every step's control block
// (frozen linearization with constant drift).
CondensedQp condense(const LiftedLinearSystem& sys, const Mat& x_des,
                     const std::vector<SafetyRowSpec>& safety,
                     const MpcConfig& config,
                     const std::vector<PhiDotRow>& velocity_rows = {});

// Explicit rollout cost of a stacked control sequence (oracle counterpart of
// the condensed objective; sums k = 1..N state terms plus all control terms).
double rollout_cost(const LiftedLinearSystem& sys, const Mat& x_des,
                    const MpcConfig& config, const Vec& u_stacked);

// Unified Koopman safe MPC over the lifted dynamics with linkwise safety
// rows per obstacle and horizon step.
CondensedQp build_kmpc(const KoopmanModel& model, const SafetyIndexParams& gamma,
                       const SerialChain& chain,
                       const std::vector<Obstacle>& obstacles,
                       const PlantState& state, int step,
                       const ReferenceFn& reference, const MpcConfig& config);

// Analytic baselines: p' = p + dt J(q_bar) u, q' = q + dt u with the Jacobian
// frozen at q* (LTI) or the current configuration (LTV). No safety rows; the
// separate filter handles safety.
CondensedQp build_lti(const SerialChain& chain, const Vec& q_star,
                      const PlantState& state, int step,
                      const ReferenceFn& reference, const MpcConfig& config);
CondensedQp build_ltv(const SerialChain& chain, const PlantState& state, int step,
                      const ReferenceFn& reference, const MpcConfig& config);

struct FilterResult {
  Vec u;
  QpStatus status = QpStatus::kSolved;
  double slack_total = 0.0;
  bool infeasible() const { return status != QpStatus::kSolved; }
};

// Projection of u_ref onto the intersection of the half-spaces carried by the
// rows, within box limits: min ||u - u_ref||^2. With slack the projection is
// always solvable; without, infeasibility is reported and u_ref is clamped.
FilterResult safety_filter(const Vec& u_ref, const std::vector<PhiDotRow>& rows,
                           const Vec& u_min, const Vec& u_max, bool use_slack,
                           double slack_weight);

struct ShootingConfig {
  int samples = 100;
  int iterations = 4;
  double elite_fraction = 0.2;
  double init_std_scale = 0.4;  // times half the control range
  double penalty_weight = 1e4;
  std::uint64_t seed = 0;
  double plant_alpha = 1.0;
};

// Cross-entropy random shooting through the true plant. Candidate i of every
// iteration draws from a per-index stream, so enlarging the sample count
// keeps earlier candidates identical (common random numbers). Returns the
// best sample's control sequence.
std::vector<Vec> shooting_nmpc(const SerialChain& chain,
                               const std::vector<Obstacle>& obstacles,
                               const SafetyIndexParams& gamma,
                               const PlantState& state, int step,
                               const ReferenceFn& reference, const MpcConfig& config,
                               const ShootingConfig& shooting);

// Tracking + penalty cost of one candidate sequence (exposed for tests).
double shooting_cost(const SerialChain& chain, const std::vector<Obstacle>& obstacles,
                     const SafetyIndexParams& gamma, const PlantState& state,
                     int step, const ReferenceFn& reference, const MpcConfig& config,
                     double penalty_weight, double plant_alpha,
                     const std::vector<Vec>& controls);

}  // namespace ksc
