#include "ksc/kinematics.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "ksc/configfile.hpp"
#include "ksc/csv.hpp"

namespace ksc {

namespace {

namespace fs = std::filesystem;

Mat3 rot_z(double a) {
  Mat3 r;
  r << std::cos(a), -std::sin(a), 0.0,
       std::sin(a),  std::cos(a), 0.0,
       0.0,          0.0,         1.0;
  return r;
}

Mat3 rot_y(double a) {
  Mat3 r;
  r <<  std::cos(a), 0.0, std::sin(a),
        0.0,         1.0, 0.0,
       -std::sin(a), 0.0, std::cos(a);
  return r;
}

Vec3 joint_axis_local(const SerialChain& chain, int joint) {
  if (chain.axis_mode == AxisMode::kPlanarZ || joint % 2 == 0) return Vec3::UnitZ();
  return Vec3::UnitY();
}

Mat3 joint_rotation(const SerialChain& chain, int joint, double angle) {
  if (chain.axis_mode == AxisMode::kPlanarZ || joint % 2 == 0) return rot_z(angle);
  return rot_y(angle);
}

Vec slice_w(const SerialChain& chain, const Vec3& p) {
  return p.head(chain.workspace_dim());
}

// 3D frames along the chain: world rotation entering each joint, world
// origin of each joint, and world joint axes. All links extend along the
// local +X axis.
struct Frames {
  std::vector<Vec3> origin;  // n+1
  std::vector<Vec3> axis;    // n, world-frame joint axes
  std::vector<Vec3> mid;     // n
};

Frames compute_frames(const SerialChain& chain, const Vec& q) {
  const int n = chain.joint_count();
  if (q.size() != n) throw std::invalid_argument("forward_kinematics: q has wrong length");
  Frames f;
  f.origin.resize(n + 1);
  f.axis.resize(n);
  f.mid.resize(n);
  Mat3 rot = Mat3::Identity();
  Vec3 o = Vec3::Zero();
  f.origin[0] = o;
  for (int i = 0; i < n; ++i) {
    f.axis[i] = rot * joint_axis_local(chain, i);
    rot = rot * joint_rotation(chain, i, q[i]);
    const Vec3 step = rot * Vec3(chain.link_lengths[i], 0.0, 0.0);
    f.mid[i] = o + 0.5 * step;
    o += step;
    f.origin[i + 1] = o;
  }
  return f;
}

}  // namespace

double SerialChain::sphere_radius(int sphere) const {
  const int n = joint_count();
  if (sphere < 0 || sphere > n) throw std::out_of_range("sphere_radius: index out of range");
  return sphere < n ? collision_radii[sphere] : collision_radii[n - 1];
}

SerialChain SerialChain::planar(int joints, std::vector<double> lengths,
                                std::vector<double> radii, double u_limit) {
  SerialChain c;
  c.axis_mode = AxisMode::kPlanarZ;
  c.link_lengths = std::move(lengths);
  c.collision_radii = std::move(radii);
  c.u_min = Vec::Constant(joints, -u_limit);
  c.u_max = Vec::Constant(joints, u_limit);
  c.validate();
  if (c.joint_count() != joints)
    throw std::invalid_argument("SerialChain: joint count does not match lengths");
  return c;
}

SerialChain SerialChain::alternating3d(int joints, std::vector<double> lengths,
                                       std::vector<double> radii, double u_limit) {
  SerialChain c = planar(joints, std::move(lengths), std::move(radii), u_limit);
  c.axis_mode = AxisMode::kAlternating3D;
  return c;
}

void SerialChain::validate() const {
  if (link_lengths.empty()) throw std::invalid_argument("SerialChain: no links");
  if (collision_radii.size() != link_lengths.size())
    throw std::invalid_argument("SerialChain: radii count must match link count");
  for (double l : link_lengths)
    if (!(l > 0.0)) throw std::invalid_argument("SerialChain: link lengths must be positive");
  for (double r : collision_radii)
    if (!(r > 0.0)) throw std::invalid_argument("SerialChain: radii must be positive");
  const int n = joint_count();
  if (u_min.size() != n || u_max.size() != n)
    throw std::invalid_argument("SerialChain: velocity limit dimension mismatch");
  for (int i = 0; i < n; ++i)
    if (!(u_min[i] < u_max[i]))
      throw std::invalid_argument("SerialChain: u_min must be below u_max");
}

const Vec& FkResult::sphere_center(int sphere) const {
  const int n = static_cast<int>(link_mid.size());
  if (sphere < 0 || sphere > n) throw std::out_of_range("sphere_center: index out of range");
  return sphere < n ? link_mid[sphere] : tip;
}

FkResult forward_kinematics(const SerialChain& chain, const Vec& q) {
  const Frames f = compute_frames(chain, q);
  const int n = chain.joint_count();
  FkResult out;
  out.joint_origin.resize(n + 1);
  out.link_mid.resize(n);
  for (int i = 0; i <= n; ++i) out.joint_origin[i] = slice_w(chain, f.origin[i]);
  for (int i = 0; i < n; ++i) out.link_mid[i] = slice_w(chain, f.mid[i]);
  out.tip = out.joint_origin[n];
  return out;
}

Mat point_jacobian(const SerialChain& chain, const Vec& q, int link_index,
                   double ratio) {
  const int n = chain.joint_count();
  if (link_index < 0 || link_index >= n)
    throw std::out_of_range("point_jacobian: link index out of range");
  const Frames f = compute_frames(chain, q);
  const Vec3 point =
      f.origin[link_index] + ratio * (f.origin[link_index + 1] - f.origin[link_index]);
  const int w = chain.workspace_dim();
  Mat jac = Mat::Zero(w, n);
  for (int j = 0; j <= link_index; ++j) {
    const Vec3 col = f.axis[j].cross(point - f.origin[j]);
    jac.col(j) = col.head(w);
  }
  return jac;
}

Mat position_jacobian(const SerialChain& chain, const Vec& q, int link_index) {
  return point_jacobian(chain, q, link_index, 1.0);
}

Mat sphere_jacobian(const SerialChain& chain, const Vec& q, int sphere) {
  const int n = chain.joint_count();
  if (sphere < 0 || sphere > n) throw std::out_of_range("sphere_jacobian: index out of range");
  if (sphere < n) return point_jacobian(chain, q, sphere, 0.5);
  return point_jacobian(chain, q, n - 1, 1.0);
}

Vec PlantState::x() const {
  Vec out(p.size() + q.size());
  out << p, q;
  return out;
}

PlantState PlantState::initial(const SerialChain& chain, const Vec& q0) {
  PlantState s;
  s.q = q0;
  s.p = forward_kinematics(chain, q0).tip;
  s.u_lag = Vec::Zero(chain.joint_count());
  return s;
}

PlantState step_plant(const SerialChain& chain, const PlantState& state,
                      const Vec& u, double dt, double alpha) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_plant: dt must be positive");
  const Vec u_cmd = clamp(u, chain.u_min, chain.u_max);
  PlantState next;
  next.u_lag = (1.0 - alpha) * state.u_lag + alpha * u_cmd;
  next.q = state.q + dt * next.u_lag;
  next.p = forward_kinematics(chain, next.q).tip;
  return next;
}

Obstacle Obstacle::fixed(const Vec& c) { return Obstacle{c, Vec::Zero(c.size())}; }
Obstacle Obstacle::moving(const Vec& c, const Vec& v) { return Obstacle{c, v}; }

std::size_t Dataset::transition_count() const {
  std::size_t total = 0;
  for (const auto& t : trajectories) total += t.u.size();
  return total;
}

Dataset sample_dataset(const SerialChain& chain, int count, int horizon,
                       double dt, std::uint64_t seed, double alpha,
                       const Vec& q_lo, const Vec& q_hi) {
  if (count < 1 || horizon < 1)
    throw std::invalid_argument("sample_dataset: count and horizon must be >= 1");
  Dataset ds;
  ds.dt = dt;
  ds.alpha = alpha;
  ds.seed = seed;
  Rng rng(seed);
  const int n = chain.joint_count();
  const Vec lo = q_lo.size() == n ? q_lo : Vec::Constant(n, -M_PI);
  const Vec hi = q_hi.size() == n ? q_hi : Vec::Constant(n, M_PI);
  for (int t = 0; t < count; ++t) {
    Trajectory traj;
    PlantState state = PlantState::initial(chain, rng.uniform_vec(n, lo, hi));
    traj.q.push_back(state.q);
    traj.p.push_back(state.p);
    Vec u = Vec::Zero(n);
    for (int k = 0; k < horizon; ++k) {
      if (k % 5 == 0) u = rng.uniform_vec(n, chain.u_min, chain.u_max);
      state = step_plant(chain, state, u, dt, alpha);
      traj.u.push_back(u);
      traj.q.push_back(state.q);
      traj.p.push_back(state.p);
    }
    ds.trajectories.push_back(std::move(traj));
  }
  return ds;
}

namespace {

std::string axis_name(AxisMode m) {
  return m == AxisMode::kPlanarZ ? "planar" : "alternating3d";
}

AxisMode axis_from_name(const std::string& s) {
  if (s == "planar") return AxisMode::kPlanarZ;
  if (s == "alternating3d") return AxisMode::kAlternating3D;
  throw std::runtime_error("unknown axis mode: " + s);
}

std::vector<double> to_std(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vec from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string traj_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traj_%04zu.csv", index);
  return buf;
}

}  // namespace

void save_dataset(const Dataset& dataset, const SerialChain& chain,
                  const std::string& dir) {
  fs::create_directories(dir);
  const int n = chain.joint_count();
  const int w = chain.workspace_dim();

  ConfigWriter manifest;
  manifest.open_block("dataset");
  manifest.entry("dt", dataset.dt);
  manifest.entry("alpha", dataset.alpha);
  manifest.entry("seed", static_cast<long>(dataset.seed));
  manifest.entry("trajectories", static_cast<long>(dataset.trajectories.size()));
  manifest.close_block();
  manifest.open_block("chain");
  manifest.entry("axis", axis_name(chain.axis_mode));
  manifest.entry("joints", static_cast<long>(n));
  manifest.entry("lengths", chain.link_lengths);
  manifest.entry("radii", chain.collision_radii);
  manifest.entry("u_min", to_std(chain.u_min));
  manifest.entry("u_max", to_std(chain.u_max));
  manifest.close_block();
  manifest.write_file(dir + "/manifest.txt");

  for (std::size_t t = 0; t < dataset.trajectories.size(); ++t) {
    const Trajectory& traj = dataset.trajectories[t];
    csv::Table table;
    table.header.push_back("t");
    for (int i = 1; i <= n; ++i) table.header.push_back("q_" + std::to_string(i));
    for (int i = 1; i <= n; ++i) table.header.push_back("u_" + std::to_string(i));
    for (int i = 1; i <= w; ++i) table.header.push_back("p_" + std::to_string(i));
    for (std::size_t k = 0; k < traj.q.size(); ++k) {
      std::vector<std::string> row;
      row.push_back(std::to_string(k));
      for (int i = 0; i < n; ++i) row.push_back(csv::cell(traj.q[k][i]));
      const bool has_u = k < traj.u.size();
      for (int i = 0; i < n; ++i) row.push_back(csv::cell(has_u ? traj.u[k][i] : 0.0));
      for (int i = 0; i < w; ++i) row.push_back(csv::cell(traj.p[k][i]));
      table.rows.push_back(std::move(row));
    }
    csv::write_file(dir + "/" + traj_filename(t), table);
  }
}

Dataset load_dataset(const std::string& dir, SerialChain* chain_out) {
  const ConfigNode root = ConfigNode::parse_file(dir + "/manifest.txt");
  const ConfigNode& ds_node = root.child("dataset");
  const ConfigNode& ch_node = root.child("chain");

  SerialChain chain;
  chain.axis_mode = axis_from_name(ch_node.child("axis").as_string());
  chain.link_lengths = ch_node.child("lengths").as_doubles();
  chain.collision_radii = ch_node.child("radii").as_doubles();
  chain.u_min = from_std(ch_node.child("u_min").as_doubles());
  chain.u_max = from_std(ch_node.child("u_max").as_doubles());
  chain.validate();
  if (chain_out) *chain_out = chain;

  Dataset ds;
  ds.dt = ds_node.child("dt").as_double();
  ds.alpha = ds_node.get_double("alpha", 1.0);
  ds.seed = static_cast<std::uint64_t>(ds_node.child("seed").as_int());
  const long count = ds_node.child("trajectories").as_int();

  const int n = chain.joint_count();
  const int w = chain.workspace_dim();
  for (long t = 0; t < count; ++t) {
    const csv::Table table = csv::read_file(dir + "/" + traj_filename(static_cast<std::size_t>(t)));
    Trajectory traj;
    const std::size_t rows = table.rows.size();
    for (std::size_t k = 0; k < rows; ++k) {
      Vec q(n), u(n), p(w);
      for (int i = 0; i < n; ++i) q[i] = table.number(k, 1 + i);
      for (int i = 0; i < n; ++i) u[i] = table.number(k, 1 + n + i);
      for (int i = 0; i < w; ++i) p[i] = table.number(k, 1 + 2 * n + i);
      traj.q.push_back(q);
      traj.p.push_back(p);
      if (k + 1 < rows) traj.u.push_back(u);
    }
    ds.trajectories.push_back(std::move(traj));
  }
  return ds;
}

}  // namespace ksc
