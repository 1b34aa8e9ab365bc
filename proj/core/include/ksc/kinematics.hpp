#pragma once

#include <string>
#include <vector>

#include "ksc/linalg.hpp"
#include "ksc/rng.hpp"

namespace ksc {

enum class AxisMode {
  kPlanarZ,        // planar chain, all joints rotate about Z, workspace is 2D
  kAlternating3D,  // joint axes alternate Z, Y, Z, Y, ...; workspace is 3D
};

// Serial-chain robot with one collision sphere per link (at the link
// midpoint) plus a tip sphere on the end-effector.
struct SerialChain {
  AxisMode axis_mode = AxisMode::kPlanarZ;
  std::vector<double> link_lengths;     // [m]
  std::vector<double> collision_radii;  // [m], one per link
  Vec u_min, u_max;                     // joint velocity limits [rad/s]

  int joint_count() const { return static_cast<int>(link_lengths.size()); }
  int workspace_dim() const { return axis_mode == AxisMode::kPlanarZ ? 2 : 3; }
  // Collision spheres: one per link midpoint plus the tip.
  int sphere_count() const { return joint_count() + 1; }
  // Radius of sphere s; the tip sphere reuses the last link's radius.
  double sphere_radius(int sphere) const;

  int state_dim() const { return workspace_dim() + joint_count(); }

  static SerialChain planar(int joints, std::vector<double> lengths,
                            std::vector<double> radii, double u_limit);
  static SerialChain alternating3d(int joints, std::vector<double> lengths,
                                   std::vector<double> radii, double u_limit);

  void validate() const;  // throws std::invalid_argument
};

// Forward-kinematics image of a configuration: joint-frame origins, link
// midpoints, and the tip, all in workspace coordinates (2D or 3D).
struct FkResult {
  std::vector<Vec> joint_origin;  // size n+1, joint_origin[0] is the base
  std::vector<Vec> link_mid;      // size n
  Vec tip;                        // == joint_origin[n]

  // Center of collision sphere s (link midpoints, then the tip).
  const Vec& sphere_center(int sphere) const;
  int sphere_count() const { return static_cast<int>(link_mid.size()) + 1; }
};

FkResult forward_kinematics(const SerialChain& chain, const Vec& q);

// Jacobian of the end of link `link_index` (w x n). Columns for joints
// distal to the link are zero.
Mat position_jacobian(const SerialChain& chain, const Vec& q, int link_index);

// Jacobian of an arbitrary point along link `link_index`: ratio 0 is the
// proximal joint, 0.5 the midpoint, 1 the link end.
Mat point_jacobian(const SerialChain& chain, const Vec& q, int link_index,
                   double ratio);

// Jacobian of collision sphere s (midpoints for 0..n-1, tip for s == n).
Mat sphere_jacobian(const SerialChain& chain, const Vec& q, int sphere);

// Plant state: x = [p; q] with p the tracked point (chain tip). u_lag is the
// actuator filter state (previous effective velocity), not part of x.
struct PlantState {
  Vec q;
  Vec p;
  Vec u_lag;

  Vec x() const;  // [p; q]
  static PlantState initial(const SerialChain& chain, const Vec& q0);
};

// Velocity-level plant step with first-order actuator lag:
//   u_eff = (1 - alpha) * u_lag + alpha * clamp(u),  q' = q + dt * u_eff.
// alpha = 1 recovers the exact velocity integrator.
PlantState step_plant(const SerialChain& chain, const PlantState& state,
                      const Vec& u, double dt, double alpha = 1.0);

struct Obstacle {
  Vec center;
  Vec velocity;  // zero for static obstacles

  static Obstacle fixed(const Vec& c);
  static Obstacle moving(const Vec& c, const Vec& v);
};

struct Trajectory {
  std::vector<Vec> q;  // length T+1
  std::vector<Vec> p;  // length T+1
  std::vector<Vec> u;  // length T (commanded, within limits)
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  double dt = 0.0;
  double alpha = 1.0;
  std::uint64_t seed = 0;

  std::size_t transition_count() const;
};

// Random excitation data: q0 uniform in the start region (default
// [-pi, pi]^n), piecewise-constant uniform controls redrawn every 5 steps,
// rolled through step_plant. Scenario configs narrow the start region to
// their operating envelope, since the lifted model's constant control gain
// is only meaningful where the data lives.
Dataset sample_dataset(const SerialChain& chain, int count, int horizon,
                       double dt, std::uint64_t seed, double alpha = 0.7,
                       const Vec& q_lo = Vec(), const Vec& q_hi = Vec());

// One CSV per trajectory (columns t, q_1..q_n, u_1..u_n, p_1..p_w; the final
// row carries zero controls) plus a manifest with dt, seed, chain parameters.
void save_dataset(const Dataset& dataset, const SerialChain& chain,
                  const std::string& dir);
Dataset load_dataset(const std::string& dir, SerialChain* chain_out = nullptr);

}  // namespace ksc
