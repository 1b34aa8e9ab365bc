#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ksc/kinematics.hpp"
#include "ksc/linalg.hpp"
#include "ksc/net.hpp"

namespace ksc {

// Lifted linear surrogate: z = [x; psi(std(x))] with z' = A z + B u and
// P z = x (P selects the leading state block, exact by construction).
// The network input is standardized per coordinate; the state block of z
// is the raw state so that retrieval is exact.
struct KoopmanModel {
  LiftingNetwork net;
  Mat A;
  Mat B;
  Vec std_mean;
  Vec std_scale;
  double dt = 0.0;
  std::optional<SerialChain> chain;  // metadata for model files

  int state_dim() const { return static_cast<int>(std_mean.size()); }
  int latent_dim() const { return net.output_dim(); }
  int lifted_dim() const { return state_dim() + latent_dim(); }
  int control_dim() const { return static_cast<int>(B.cols()); }

  void validate() const;

  Vec lift(const Vec& x) const;
  Mat lift_batch(const Mat& x_cols) const;
  Vec project(const Vec& z) const;  // P z

  // z_{k+1} = A z_k + B u_k, no re-lifting between steps; returns z_1..z_H.
  std::vector<Vec> rollout(const Vec& z0, const std::vector<Vec>& controls) const;

  // Open-loop state prediction: lift, roll out, project the last step.
  Vec predict_state(const Vec& x0, const std::vector<Vec>& controls) const;

  // A = identity, B routes controls into the joint block scaled by dt, so the
  // raw model starts as the exact velocity integrator for q.
  static KoopmanModel create(int state_dim, int control_dim, int joint_block_offset,
                             const std::vector<int>& hidden, int latent,
                             double dt, std::uint64_t seed);
};

// Training windows: column k of x is the state at step k (K+1 columns), and
// column k of u the control applied between k and k+1 (K columns).
struct Window {
  Mat x;
  Mat u;
};

enum class StateMode { kPositionAndJoints, kJointsOnly };

std::vector<Window> make_windows(const Dataset& dataset, int k_steps,
                                 StateMode mode = StateMode::kPositionAndJoints);

struct TrainConfig {
  int k_steps = 5;
  double gamma = 0.9;  // decay factor on the per-step MSE terms
  double learning_rate = 1e-3;
  double lr_decay = 1.0;  // per-epoch multiplicative schedule
  int batch_size = 64;
  int epochs = 30;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct ModelGrads {
  std::vector<Mat> net_w;
  std::vector<Vec> net_b;
  Mat A;
  Mat B;

  static ModelGrads zeros_like(const KoopmanModel& model);
};

// K-step prediction loss averaged over the batch:
//   L = mean_w sum_{i=1..K} gamma^{i-1} MSE(lift(x_i), zhat_i)
// with zhat the linear rollout of lift(x_0). Gradients flow through the
// rollout and through the lifting of both predicted and target sides.
double kstep_loss_and_grads(const KoopmanModel& model,
                            const std::vector<const Window*>& batch,
                            double gamma, ModelGrads* grads,
                            bool operators_only = false);

double kstep_loss(const KoopmanModel& model,
                  const std::vector<const Window*>& batch, double gamma);

struct TrainResult {
  KoopmanModel model;
  std::vector<double> loss_history;  // mean minibatch loss per epoch
};

// End-to-end training of (net, A, B) with adaptive-moment gradient descent.
// Deterministic per config.seed. Throws on divergence (non-finite loss).
TrainResult train(KoopmanModel model, const std::vector<Window>& windows,
                  const TrainConfig& config);

// Operator-only adaptation: identical loop, but only A and B receive updates;
// network parameters are untouched.
TrainResult finetune_operators(KoopmanModel model, const std::vector<Window>& windows,
                               const TrainConfig& config);

// Constructed infeasibility-prone variant for the safety-index experiments:
// seeded random coupling added to the joint-block rows of A over the latent
// columns (amplifying the lifted drift term), and the control gain scaled
// down. The returned model is a controller-side surrogate; the plant is
// untouched.
KoopmanModel make_infeasibility_prone(const KoopmanModel& model, int joint_block_offset,
                                      int joint_count, double drift_scale,
                                      double authority_scale, std::uint64_t seed);

// Mean 1-step state prediction error ||P(A lift(x0) + B u0) - x1|| over windows.
double one_step_error(const KoopmanModel& model, const std::vector<Window>& windows);

// Mean open-loop prediction error at the given horizon (windows must span it).
double horizon_error(const KoopmanModel& model, const std::vector<Window>& windows,
                     int horizon);

// Model file: structured text, version tag, chain metadata, standardization,
// layer shapes, row-major arrays; bit-exact round trip.
void save_model(const KoopmanModel& model, const std::string& path);
KoopmanModel load_model(const std::string& path);

// Fit standardization from data and install it on the model (called once
// before train()).
void fit_standardization(KoopmanModel& model, const std::vector<Window>& windows);

}  // namespace ksc
