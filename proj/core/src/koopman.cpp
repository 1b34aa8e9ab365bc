#include "ksc/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ksc/configfile.hpp"

namespace ksc {

void KoopmanModel::validate() const {
  net.validate();
  if (net.input_dim() != state_dim())
    throw std::invalid_argument("KoopmanModel: net input must equal state dim");
  if (A.rows() != lifted_dim() || A.cols() != lifted_dim())
    throw std::invalid_argument("KoopmanModel: A shape mismatch");
  if (B.rows() != lifted_dim())
    throw std::invalid_argument("KoopmanModel: B shape mismatch");
  if (std_scale.size() != std_mean.size())
    throw std::invalid_argument("KoopmanModel: standardization shape mismatch");
  if ((std_scale.array() <= 0.0).any())
    throw std::invalid_argument("KoopmanModel: standardization scale must be positive");
  if (!all_finite(A) || !all_finite(B))
    throw std::invalid_argument("KoopmanModel: non-finite operators");
}

Vec KoopmanModel::lift(const Vec& x) const {
  if (x.size() != state_dim())
    throw std::invalid_argument("lift: state dimension mismatch");
  Vec z(lifted_dim());
  z.head(state_dim()) = x;
  const Vec xs = (x - std_mean).cwiseQuotient(std_scale);
  z.tail(latent_dim()) = net.forward(xs);
  return z;
}

Mat KoopmanModel::lift_batch(const Mat& x_cols) const {
  if (x_cols.rows() != state_dim())
    throw std::invalid_argument("lift_batch: state dimension mismatch");
  Mat z(lifted_dim(), x_cols.cols());
  z.topRows(state_dim()) = x_cols;
  Mat xs = (x_cols.colwise() - std_mean).array().colwise() / std_scale.array();
  z.bottomRows(latent_dim()) = net.forward(xs);
  return z;
}

Vec KoopmanModel::project(const Vec& z) const { return z.head(state_dim()); }

std::vector<Vec> KoopmanModel::rollout(const Vec& z0,
                                       const std::vector<Vec>& controls) const {
  std::vector<Vec> out;
  out.reserve(controls.size());
  Vec z = z0;
  for (const Vec& u : controls) {
    if (u.size() != control_dim())
      throw std::invalid_argument("rollout: control dimension mismatch");
    z = A * z + B * u;
    out.push_back(z);
  }
  return out;
}

Vec KoopmanModel::predict_state(const Vec& x0, const std::vector<Vec>& controls) const {
  if (controls.empty()) return x0;
  return project(rollout(lift(x0), controls).back());
}

KoopmanModel KoopmanModel::create(int state_dim, int control_dim,
                                  int joint_block_offset,
                                  const std::vector<int>& hidden, int latent,
                                  double dt, std::uint64_t seed) {
  Rng rng(seed);
  KoopmanModel m;
  m.net = LiftingNetwork::create(state_dim, hidden, latent, rng);
  const int lifted = state_dim + latent;
  m.A = Mat::Identity(lifted, lifted);
  m.B = Mat::Zero(lifted, control_dim);
  for (int j = 0; j < control_dim; ++j) {
    const int row = joint_block_offset + j;
    if (row < state_dim) m.B(row, j) = dt;
  }
  m.std_mean = Vec::Zero(state_dim);
  m.std_scale = Vec::Ones(state_dim);
  m.dt = dt;
  m.validate();
  return m;
}

std::vector<Window> make_windows(const Dataset& dataset, int k_steps, StateMode mode) {
  if (k_steps < 1) throw std::invalid_argument("make_windows: k_steps must be >= 1");
  std::vector<Window> out;
  for (const Trajectory& traj : dataset.trajectories) {
    const int steps = static_cast<int>(traj.u.size());
    if (steps < k_steps) continue;
    const int w = static_cast<int>(traj.p.front().size());
    const int n = static_cast<int>(traj.q.front().size());
    const int nx = mode == StateMode::kPositionAndJoints ? w + n : n;
    for (int start = 0; start + k_steps <= steps; ++start) {
      Window win;
      win.x.resize(nx, k_steps + 1);
      win.u.resize(n, k_steps);
      for (int k = 0; k <= k_steps; ++k) {
        if (mode == StateMode::kPositionAndJoints) {
          win.x.col(k).head(w) = traj.p[start + k];
          win.x.col(k).tail(n) = traj.q[start + k];
        } else {
          win.x.col(k) = traj.q[start + k];
        }
        if (k < k_steps) win.u.col(k) = traj.u[start + k];
      }
      out.push_back(std::move(win));
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (k_steps < 1) throw std::invalid_argument("TrainConfig: K must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("TrainConfig: gamma must be in (0, 1]");
  if (batch_size < 1 || epochs < 0 || !(learning_rate > 0.0))
    throw std::invalid_argument("TrainConfig: bad optimizer settings");
}

ModelGrads ModelGrads::zeros_like(const KoopmanModel& model) {
  ModelGrads g;
  g.net_w = model.net.zero_like_weights();
  g.net_b = model.net.zero_like_biases();
  g.A = Mat::Zero(model.A.rows(), model.A.cols());
  g.B = Mat::Zero(model.B.rows(), model.B.cols());
  return g;
}

namespace {

// Batched view of a window set: X[k] holds the k-th state of every window in
// the batch as columns; U[k] likewise for controls.
struct BatchTensors {
  std::vector<Mat> x;  // K+1 matrices (nx x B)
  std::vector<Mat> u;  // K matrices (m x B)
  int k_steps = 0;
  int count = 0;
};

BatchTensors gather(const std::vector<const Window*>& batch) {
  if (batch.empty()) throw std::invalid_argument("kstep loss: empty batch");
  BatchTensors t;
  t.count = static_cast<int>(batch.size());
  t.k_steps = static_cast<int>(batch.front()->u.cols());
  const int nx = static_cast<int>(batch.front()->x.rows());
  const int m = static_cast<int>(batch.front()->u.rows());
  t.x.assign(t.k_steps + 1, Mat(nx, t.count));
  t.u.assign(t.k_steps, Mat(m, t.count));
  for (int b = 0; b < t.count; ++b) {
    const Window& w = *batch[b];
    if (w.u.cols() != t.k_steps || w.x.cols() != t.k_steps + 1 ||
        w.x.rows() != nx || w.u.rows() != m)
      throw std::invalid_argument("kstep loss: ragged batch");
    for (int k = 0; k <= t.k_steps; ++k) t.x[k].col(b) = w.x.col(k);
    for (int k = 0; k < t.k_steps; ++k) t.u[k].col(b) = w.u.col(k);
  }
  return t;
}

}  // namespace

double kstep_loss_and_grads(const KoopmanModel& model,
                            const std::vector<const Window*>& batch,
                            double gamma, ModelGrads* grads,
                            bool operators_only) {
  const BatchTensors t = gather(batch);
  const int K = t.k_steps;
  const int B = t.count;
  const int nx = model.state_dim();
  const int d = model.latent_dim();
  const int D = nx + d;

  // Forward: lift every state column, keeping network caches per step.
  std::vector<LiftingNetwork::Workspace> ws(K + 1);
  std::vector<Mat> z(K + 1);
  for (int k = 0; k <= K; ++k) {
    Mat xs = (t.x[k].colwise() - model.std_mean).array().colwise() /
             model.std_scale.array();
    Mat psi = model.net.forward(xs, ws[k]);
    z[k].resize(D, B);
    z[k].topRows(nx) = t.x[k];
    z[k].bottomRows(d) = psi;
  }

  // Linear rollout of the lifted batch.
  std::vector<Mat> zhat(K + 1);
  zhat[0] = z[0];
  for (int k = 0; k < K; ++k) zhat[k + 1] = model.A * zhat[k] + model.B * t.u[k];

  // Loss and residuals. MSE averages over lifted coordinates; the batch mean
  // divides by B.
  double loss = 0.0;
  std::vector<Mat> resid(K + 1);
  double decay = 1.0;
  for (int k = 1; k <= K; ++k) {
    resid[k] = zhat[k] - z[k];
    loss += decay * resid[k].squaredNorm() / (static_cast<double>(D) * B);
    decay *= gamma;
  }

  if (grads == nullptr) return loss;

  // Reverse pass through the rollout: g_k = dL/d zhat_k accumulated backward.
  std::vector<Mat> g(K + 1, Mat::Zero(D, B));
  decay = 1.0;
  for (int k = 1; k <= K; ++k) {
    g[k] = (2.0 * decay / (static_cast<double>(D) * B)) * resid[k];
    decay *= gamma;
  }
  for (int k = K - 1; k >= 1; --k) g[k] += model.A.transpose() * g[k + 1];
  const Mat g0 = model.A.transpose() * g[1];

  for (int k = 0; k < K; ++k) {
    grads->A.noalias() += g[k + 1] * zhat[k].transpose();
    grads->B.noalias() += g[k + 1] * t.u[k].transpose();
  }

  if (!operators_only) {
    // Lifting gradients: predicted side only at k = 0 (rollout seed), target
    // side enters with a negative sign at k = 1..K. Only the latent rows pass
    // through the network; the state block of z is the raw data.
    for (int k = 0; k <= K; ++k) {
      Mat dz;
      if (k == 0) {
        dz = g0;
      } else {
        dz = (-2.0 * std::pow(gamma, k - 1) / (static_cast<double>(D) * B)) * resid[k];
      }
      const Mat dpsi = dz.bottomRows(d);
      model.net.backward(dpsi, ws[k], grads->net_w, grads->net_b);
    }
  }
  return loss;
}

double kstep_loss(const KoopmanModel& model,
                  const std::vector<const Window*>& batch, double gamma) {
  return kstep_loss_and_grads(model, batch, gamma, nullptr);
}

namespace {

struct AdamState {
  ModelGrads m;
  ModelGrads v;
  long step = 0;

  explicit AdamState(const KoopmanModel& model)
      : m(ModelGrads::zeros_like(model)), v(ModelGrads::zeros_like(model)) {}
};

void adam_update_array(Mat& param, const Mat& grad, Mat& m, Mat& v,
                       const TrainConfig& cfg, double lr, double bias1, double bias2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.array().square().matrix();
  const Mat mhat = m / bias1;
  const Mat vhat = v / bias2;
  param.array() -= lr * mhat.array() / (vhat.array().sqrt() + cfg.adam_eps);
}

void adam_update_vec(Vec& param, const Vec& grad, Vec& m, Vec& v,
                     const TrainConfig& cfg, double lr, double bias1, double bias2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.array().square().matrix();
  const Vec mhat = m / bias1;
  const Vec vhat = v / bias2;
  param.array() -= lr * mhat.array() / (vhat.array().sqrt() + cfg.adam_eps);
}

TrainResult run_training(KoopmanModel model, const std::vector<Window>& windows,
                         const TrainConfig& config, bool operators_only) {
  config.validate();
  model.validate();
  if (windows.empty())
    throw std::invalid_argument("train: no windows of the required length");
  for (const Window& w : windows)
    if (static_cast<int>(w.u.cols()) != config.k_steps)
      throw std::invalid_argument("train: window depth does not match config K");

  AdamState adam(model);
  Rng rng(config.seed);
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  double lr = config.learning_rate;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with the deterministic stream.
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = rng.uniform_index(i);
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const Window*> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(&windows[order[i]]);

      ModelGrads grads = ModelGrads::zeros_like(model);
      const double loss =
          kstep_loss_and_grads(model, batch, config.gamma, &grads, operators_only);
      if (!std::isfinite(loss))
        throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch));
      epoch_loss += loss;
      ++batches;

      ++adam.step;
      const double bias1 = 1.0 - std::pow(config.beta1, adam.step);
      const double bias2 = 1.0 - std::pow(config.beta2, adam.step);
      if (!operators_only) {
        for (int l = 0; l < model.net.layer_count(); ++l) {
          adam_update_array(model.net.weights[l], grads.net_w[l], adam.m.net_w[l],
                            adam.v.net_w[l], config, lr, bias1, bias2);
          adam_update_vec(model.net.biases[l], grads.net_b[l], adam.m.net_b[l],
                          adam.v.net_b[l], config, lr, bias1, bias2);
        }
      }
      adam_update_array(model.A, grads.A, adam.m.A, adam.v.A, config, lr, bias1, bias2);
      adam_update_array(model.B, grads.B, adam.m.B, adam.v.B, config, lr, bias1, bias2);
    }
    result.loss_history.push_back(batches > 0 ? epoch_loss / batches : 0.0);
    lr *= config.lr_decay;
  }
  result.model = std::move(model);
  return result;
}

}  // namespace

TrainResult train(KoopmanModel model, const std::vector<Window>& windows,
                  const TrainConfig& config) {
  return run_training(std::move(model), windows, config, false);
}

TrainResult finetune_operators(KoopmanModel model, const std::vector<Window>& windows,
                               const TrainConfig& config) {
  return run_training(std::move(model), windows, config, true);
}

KoopmanModel make_infeasibility_prone(const KoopmanModel& model, int joint_block_offset,
                                      int joint_count, double drift_scale,
                                      double authority_scale, std::uint64_t seed) {
  KoopmanModel out = model;
  Rng noise(seed);
  const int nx = model.state_dim();
  for (int r = 0; r < joint_count; ++r)
    for (int c = 0; c < model.latent_dim(); ++c)
      out.A(joint_block_offset + r, nx + c) += drift_scale * noise.normal();
  out.B *= authority_scale;
  out.validate();
  return out;
}

double one_step_error(const KoopmanModel& model, const std::vector<Window>& windows) {
  if (windows.empty()) throw std::invalid_argument("one_step_error: no windows");
  double total = 0.0;
  for (const Window& w : windows) {
    const Vec z1 = model.A * model.lift(w.x.col(0)) + model.B * w.u.col(0);
    total += (model.project(z1) - w.x.col(1)).norm();
  }
  return total / static_cast<double>(windows.size());
}

double horizon_error(const KoopmanModel& model, const std::vector<Window>& windows,
                     int horizon) {
  if (windows.empty()) throw std::invalid_argument("horizon_error: no windows");
  double total = 0.0;
  std::size_t used = 0;
  for (const Window& w : windows) {
    if (w.u.cols() < horizon) continue;
    Vec z = model.lift(w.x.col(0));
    for (int k = 0; k < horizon; ++k) z = model.A * z + model.B * w.u.col(k);
    total += (model.project(z) - w.x.col(horizon)).norm();
    ++used;
  }
  if (used == 0) throw std::invalid_argument("horizon_error: windows shorter than horizon");
  return total / static_cast<double>(used);
}

void fit_standardization(KoopmanModel& model, const std::vector<Window>& windows) {
  if (windows.empty()) throw std::invalid_argument("fit_standardization: no data");
  const int nx = model.state_dim();
  Vec mean = Vec::Zero(nx);
  Vec sq = Vec::Zero(nx);
  double count = 0.0;
  for (const Window& w : windows) {
    for (int k = 0; k < w.x.cols(); ++k) {
      mean += w.x.col(k);
      sq += w.x.col(k).cwiseProduct(w.x.col(k));
      count += 1.0;
    }
  }
  mean /= count;
  Vec var = sq / count - mean.cwiseProduct(mean);
  Vec scale = var.cwiseMax(1e-12).cwiseSqrt();
  for (int i = 0; i < nx; ++i)
    if (scale[i] < 1e-6) scale[i] = 1.0;  // constant coordinate
  model.std_mean = mean;
  model.std_scale = scale;
}

// ---------------------------------------------------------------------------
// Model file

namespace {

void write_matrix(ConfigWriter& w, const std::string& key, const Mat& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  w.entry(key + "_rows", static_cast<long>(m.rows()));
  w.entry(key + "_cols", static_cast<long>(m.cols()));
  w.entry(key, flat);
}

Mat read_matrix(const ConfigNode& node, const std::string& key) {
  const long rows = node.child(key + "_rows").as_int();
  const long cols = node.child(key + "_cols").as_int();
  const std::vector<double> flat = node.child(key).as_doubles();
  if (static_cast<long>(flat.size()) != rows * cols)
    throw std::runtime_error("model file: array size mismatch for " + key);
  Mat m(rows, cols);
  std::size_t idx = 0;
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = flat[idx++];
  return m;
}

std::vector<double> vec_to_std(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vec vec_from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void save_model(const KoopmanModel& model, const std::string& path) {
  ConfigWriter w;
  w.open_block("koopman_model");
  w.entry("version", static_cast<long>(1));
  w.entry("state_dim", static_cast<long>(model.state_dim()));
  w.entry("control_dim", static_cast<long>(model.control_dim()));
  w.entry("latent_dim", static_cast<long>(model.latent_dim()));
  w.entry("dt", model.dt);
  w.close_block();

  w.open_block("standardization");
  w.entry("mean", vec_to_std(model.std_mean));
  w.entry("scale", vec_to_std(model.std_scale));
  w.close_block();

  w.open_block("net");
  w.entry("layers", static_cast<long>(model.net.layer_count()));
  for (int l = 0; l < model.net.layer_count(); ++l) {
    w.open_block("layer");
    write_matrix(w, "w", model.net.weights[l]);
    w.entry("bias", vec_to_std(model.net.biases[l]));
    w.close_block();
  }
  w.close_block();

  w.open_block("operators");
  write_matrix(w, "a", model.A);
  write_matrix(w, "b", model.B);
  w.close_block();

  if (model.chain.has_value()) {
    const SerialChain& c = *model.chain;
    w.open_block("chain");
    w.entry("axis", c.axis_mode == AxisMode::kPlanarZ ? std::string("planar")
                                                      : std::string("alternating3d"));
    w.entry("lengths", c.link_lengths);
    w.entry("radii", c.collision_radii);
    w.entry("u_min", vec_to_std(c.u_min));
    w.entry("u_max", vec_to_std(c.u_max));
    w.close_block();
  }
  w.write_file(path);
}

KoopmanModel load_model(const std::string& path) {
  const ConfigNode root = ConfigNode::parse_file(path);
  const ConfigNode& head = root.child("koopman_model");
  if (head.child("version").as_int() != 1)
    throw std::runtime_error("model file: unsupported version");

  KoopmanModel m;
  m.dt = head.child("dt").as_double();
  const ConfigNode& std_node = root.child("standardization");
  m.std_mean = vec_from_std(std_node.child("mean").as_doubles());
  m.std_scale = vec_from_std(std_node.child("scale").as_doubles());

  const ConfigNode& net_node = root.child("net");
  for (const ConfigNode* layer : net_node.children("layer")) {
    m.net.weights.push_back(read_matrix(*layer, "w"));
    m.net.biases.push_back(vec_from_std(layer->child("bias").as_doubles()));
  }

  const ConfigNode& ops = root.child("operators");
  m.A = read_matrix(ops, "a");
  m.B = read_matrix(ops, "b");

  if (root.has("chain")) {
    const ConfigNode& c = root.child("chain");
    SerialChain chain;
    chain.axis_mode = c.child("axis").as_string() == "planar" ? AxisMode::kPlanarZ
                                                              : AxisMode::kAlternating3D;
    chain.link_lengths = c.child("lengths").as_doubles();
    chain.collision_radii = c.child("radii").as_doubles();
    chain.u_min = vec_from_std(c.child("u_min").as_doubles());
    chain.u_max = vec_from_std(c.child("u_max").as_doubles());
    chain.validate();
    m.chain = chain;
  }
  m.validate();
  return m;
}

}  // namespace ksc
