#pragma once

#include <optional>

#include "ksc/kinematics.hpp"
#include "ksc/koopman.hpp"
#include "ksc/linalg.hpp"

namespace ksc {

// Parameterized safety index phi_{n,beta}(d) = d_min^n - d^n + beta*d.
// Gamma = (n, beta); (1, 0) collapses to the plain signed distance phi0.
struct SafetyIndexParams {
  double n = 1.0;
  double beta = 0.0;
  double d_min = 0.2;  // [m]

  void validate() const;
};

struct SafetyBoundConfig {
  double lambda = 0.05;   // decay margin outside the allowable set
  double eps_act = 0.3;   // constraint row kept while phi >= -eps_act
  double eps_bd = 1e-3;   // boundary membership tolerance

  void validate() const;
};

// One safety constraint row, phi_dot ~= (a^T u + c) / dt <= rhs, i.e. the
// control inequality a^T u <= dt * rhs - c.
struct PhiDotRow {
  Vec a;
  double c = 0.0;
  double rhs = 0.0;
  double dt = 0.0;
  int link_index = -1;
  double distance = 0.0;  // d at evaluation time
  Vec unit;               // unit vector from sphere surface point toward obstacle
};

// phi0 = d_min - ||p_ego - p_obs||. Throws on coincident points.
double phi0(const Vec& p_ego, const Obstacle& obstacle, double d_min);

double phi_param(const SafetyIndexParams& gamma, double d);
// d(phi)/dd = -n d^(n-1) + beta
double phi_param_slope(const SafetyIndexParams& gamma, double d);

// Piecewise bound: 0 within the boundary/activation band, -lambda outside the
// allowable set, inactive (nullopt) deep inside — the infinite branch is
// realized by dropping the row.
std::optional<double> safety_bound(double phi, const SafetyBoundConfig& config);

// Geometry of one (collision sphere, obstacle) pair. Distance is measured
// sphere surface to obstacle center, floored at 1e-9.
struct SphereGeometry {
  double distance = 0.0;
  Vec unit;      // toward the obstacle
  Mat jacobian;  // w x n sphere-center Jacobian
};

SphereGeometry sphere_geometry(const SerialChain& chain, const Vec& q, int sphere,
                               const Obstacle& obstacle);

// Index-independent part of the phi-dot row under the Koopman surrogate:
// phi_dot = phi'(d) * (a_geo^T u + c_geo) / dt. The index enters only
// through the scalar slope, which the tuner differentiates.
struct PhiDotGeometry {
  Vec a_geo;
  double c_geo = 0.0;
  double distance = 0.0;
  Vec unit;
  Vec grad_d;  // d(d)/dx, zero on the tracked-point block
};

PhiDotGeometry phidot_geometry(const KoopmanModel& model, const SerialChain& chain,
                               const Vec& q, const Obstacle& obstacle,
                               int link_index);

// Raw phi-dot data under the Koopman surrogate, before the bound decides
// whether the row is active. a = (PB)^T grad_x, c = grad_x^T (PA - P) z.
struct PhiDotCoeffs {
  Vec a;
  double c = 0.0;
  double phi = 0.0;
  double distance = 0.0;
  Vec unit;
  Vec grad_x;  // d(phi)/dx, zero on the tracked-point block
};

PhiDotCoeffs phidot_coeffs(const KoopmanModel& model, const SafetyIndexParams& gamma,
                           const SerialChain& chain, const Vec& q,
                           const Obstacle& obstacle, int link_index);

std::optional<PhiDotRow> phidot_row(const KoopmanModel& model,
                                    const SafetyIndexParams& gamma,
                                    const SerialChain& chain, const Vec& q,
                                    const Obstacle& obstacle, int link_index,
                                    const SafetyBoundConfig& config);

// Shared velocity-level row kernel:
//   phi_dot = kappa * unit^T (J_q qdot + drift),  kappa = -phi'(d),
// packed into the (a^T u + c)/dt convention. The fixed-base analytic row and
// the floating-base row both route through here so the zero-drift reduction
// is exact.
PhiDotRow velocity_phi_row(double kappa, const Vec& unit, const Mat& jq,
                           const Vec& drift_velocity, double dt, double rhs,
                           int link_index, double distance);

// Analytic Jacobian-form row used by the baseline safety filter; drift is
// -v_obs for moving obstacles.
std::optional<PhiDotRow> analytic_phi_row(const SerialChain& chain,
                                          const SafetyIndexParams& gamma,
                                          const Vec& q, const Obstacle& obstacle,
                                          int link_index, double dt,
                                          const SafetyBoundConfig& config);

}  // namespace ksc
