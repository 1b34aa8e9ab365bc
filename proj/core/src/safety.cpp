#include "ksc/safety.hpp"

#include <cmath>
#include <stdexcept>

namespace ksc {

namespace {
constexpr double kDistanceFloor = 1e-9;
constexpr double kCoincidentTol = 1e-12;
}  // namespace

void SafetyIndexParams::validate() const {
  if (!(d_min > 0.0)) throw std::invalid_argument("SafetyIndexParams: d_min must be > 0");
  if (!(n > 0.0)) throw std::invalid_argument("SafetyIndexParams: n must be > 0");
}

void SafetyBoundConfig::validate() const {
  if (!(lambda > 0.0) || !(eps_act > 0.0) || !(eps_bd > 0.0))
    throw std::invalid_argument("SafetyBoundConfig: all tolerances must be positive");
}

double phi0(const Vec& p_ego, const Obstacle& obstacle, double d_min) {
  if (p_ego.size() != obstacle.center.size())
    throw std::invalid_argument("phi0: dimension mismatch");
  const double d = (p_ego - obstacle.center).norm();
  if (d < kCoincidentTol)
    throw std::invalid_argument("phi0: ego and obstacle centers coincide");
  return d_min - d;
}

double phi_param(const SafetyIndexParams& gamma, double d) {
  if (!(d > 0.0)) throw std::invalid_argument("phi_param: d must be positive");
  return std::pow(gamma.d_min, gamma.n) - std::pow(d, gamma.n) + gamma.beta * d;
}

double phi_param_slope(const SafetyIndexParams& gamma, double d) {
  if (!(d > 0.0)) throw std::invalid_argument("phi_param_slope: d must be positive");
  return -gamma.n * std::pow(d, gamma.n - 1.0) + gamma.beta;
}

std::optional<double> safety_bound(double phi, const SafetyBoundConfig& config) {
  if (phi < -config.eps_act) return std::nullopt;
  if (phi > config.eps_bd) return -config.lambda;
  return 0.0;
}

SphereGeometry sphere_geometry(const SerialChain& chain, const Vec& q, int sphere,
                               const Obstacle& obstacle) {
  const FkResult fk = forward_kinematics(chain, q);
  const Vec& center = fk.sphere_center(sphere);
  if (center.size() != obstacle.center.size())
    throw std::invalid_argument("sphere_geometry: obstacle dimension mismatch");
  const Vec delta = obstacle.center - center;
  const double center_dist = delta.norm();
  if (center_dist < kCoincidentTol)
    throw std::invalid_argument("sphere_geometry: obstacle coincides with sphere center");
  SphereGeometry g;
  g.unit = delta / center_dist;
  g.distance = std::max(center_dist - chain.sphere_radius(sphere), kDistanceFloor);
  g.jacobian = sphere_jacobian(chain, q, sphere);
  return g;
}

PhiDotGeometry phidot_geometry(const KoopmanModel& model, const SerialChain& chain,
                               const Vec& q, const Obstacle& obstacle,
                               int link_index) {
  const SphereGeometry geo = sphere_geometry(chain, q, link_index, obstacle);
  const int w = chain.workspace_dim();
  const int n = chain.joint_count();
  const int nx = w + n;
  if (model.state_dim() != nx || model.control_dim() != n)
    throw std::invalid_argument("phidot_geometry: model does not match chain dimensions");

  // d d/dq = (-unit)^T J. The tracked-point block of x does not enter: the
  // sphere position is a function of q alone.
  PhiDotGeometry out;
  out.distance = geo.distance;
  out.unit = geo.unit;
  out.grad_d = Vec::Zero(nx);
  out.grad_d.tail(n) = geo.jacobian.transpose() * (-geo.unit);

  const Vec x = (Vec(nx) << forward_kinematics(chain, q).tip, q).finished();
  const Vec z = model.lift(x);
  out.a_geo = model.B.topRows(nx).transpose() * out.grad_d;     // (PB)^T grad
  out.c_geo = out.grad_d.dot(model.A.topRows(nx) * z - x);      // grad^T (PA-P) z
  return out;
}

PhiDotCoeffs phidot_coeffs(const KoopmanModel& model, const SafetyIndexParams& gamma,
                           const SerialChain& chain, const Vec& q,
                           const Obstacle& obstacle, int link_index) {
  gamma.validate();
  const PhiDotGeometry geo = phidot_geometry(model, chain, q, obstacle, link_index);
  const double slope = phi_param_slope(gamma, geo.distance);
  PhiDotCoeffs out;
  out.phi = phi_param(gamma, geo.distance);
  out.distance = geo.distance;
  out.unit = geo.unit;
  out.grad_x = slope * geo.grad_d;
  out.a = slope * geo.a_geo;
  out.c = slope * geo.c_geo;
  return out;
}

std::optional<PhiDotRow> phidot_row(const KoopmanModel& model,
                                    const SafetyIndexParams& gamma,
                                    const SerialChain& chain, const Vec& q,
                                    const Obstacle& obstacle, int link_index,
                                    const SafetyBoundConfig& config) {
  config.validate();
  const PhiDotCoeffs coeffs = phidot_coeffs(model, gamma, chain, q, obstacle, link_index);
  const std::optional<double> bound = safety_bound(coeffs.phi, config);
  if (!bound.has_value()) return std::nullopt;
  PhiDotRow row;
  row.a = coeffs.a;
  row.c = coeffs.c;
  row.rhs = *bound;
  row.dt = model.dt;
  row.link_index = link_index;
  row.distance = coeffs.distance;
  row.unit = coeffs.unit;
  return row;
}

PhiDotRow velocity_phi_row(double kappa, const Vec& unit, const Mat& jq,
                           const Vec& drift_velocity, double dt, double rhs,
                           int link_index, double distance) {
  PhiDotRow row;
  row.a = (dt * kappa) * (jq.transpose() * unit);
  row.c = (dt * kappa) * unit.dot(drift_velocity);
  row.rhs = rhs;
  row.dt = dt;
  row.link_index = link_index;
  row.distance = distance;
  row.unit = unit;
  return row;
}

std::optional<PhiDotRow> analytic_phi_row(const SerialChain& chain,
                                          const SafetyIndexParams& gamma,
                                          const Vec& q, const Obstacle& obstacle,
                                          int link_index, double dt,
                                          const SafetyBoundConfig& config) {
  gamma.validate();
  config.validate();
  const SphereGeometry geo = sphere_geometry(chain, q, link_index, obstacle);
  const double phi = phi_param(gamma, geo.distance);
  const std::optional<double> bound = safety_bound(phi, config);
  if (!bound.has_value()) return std::nullopt;
  const double kappa = -phi_param_slope(gamma, geo.distance);
  const Vec drift = -obstacle.velocity;
  return velocity_phi_row(kappa, geo.unit, geo.jacobian, drift, dt, *bound,
                          link_index, geo.distance);
}

}  // namespace ksc
