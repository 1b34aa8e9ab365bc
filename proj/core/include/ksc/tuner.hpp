#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ksc/koopman.hpp"
#include "ksc/safety.hpp"

namespace ksc {

// Learner-critic adversarial tuning of the safety index parameters
// Gamma = (n, beta) against the learned lifted dynamics.
struct TunerConfig {
  SafetyIndexParams gamma0{1.0, 0.1, 0.2};
  double mu = 0.01;            // regularization toward gamma0
  int n_batch = 50;            // counterexample quota per round
  int n_trials = 10;           // critic attempts per round
  int samples_per_trial = 200;  // states sampled and projected per attempt
  double critic_step = 0.05;   // boundary-projection step
  double learner_step = 0.01;
  double projection_threshold = 1e-4;
  double boundary_band = 0.02;  // |d - d_min| band for boundary membership
  int projection_iters = 200;
  int max_rounds = 100;
  std::uint64_t seed = 0;
  Vec q_lo, q_hi;  // operating region; empty means [-pi, pi]^n

  void validate() const;
};

// A boundary state where no saturated control vertex keeps every active
// link's phi-dot nonpositive. Per-link risks can carry either sign; the
// violation is joint.
struct Counterexample {
  Vec q;
  std::vector<int> active_links;
  std::vector<double> risks;  // per active link (vertex minimum)
};

// Minimum of phi_dot over the saturated control vertices (raw derivative,
// bound excluded). Positive means no admissible control keeps the index from
// growing. Rejects m > 16 controls.
double infeasibility_risk(const SafetyIndexParams& gamma, const KoopmanModel& model,
                          const SerialChain& chain, const Obstacle& obstacle,
                          const Vec& q, int link);

// Gradient descent on L_dist = sum_i max(0, d_min - d_i(q)) toward the
// geometric clearance shell. Fails when the threshold is unreachable or no
// link ends up within the boundary band.
std::optional<Vec> project_to_boundary(const SerialChain& chain,
                                       const Obstacle& obstacle, const Vec& q_init,
                                       double d_min, const TunerConfig& config);

struct CollectResult {
  std::vector<Counterexample> batch;
  bool exhausted = false;  // quota not reached within the trial budget
  int trials_used = 0;
};

CollectResult collect_counterexamples(const SafetyIndexParams& gamma,
                                      const KoopmanModel& model,
                                      const SerialChain& chain,
                                      const Obstacle& obstacle,
                                      const TunerConfig& config, Rng& rng);

// One step on mean boundary-active risk plus mu*||Gamma - Gamma0||^2, using
// the active vertex as the subgradient of each min. n is clamped to
// [0.1, 4], beta to [-2, 2].
SafetyIndexParams learner_update(const SafetyIndexParams& gamma,
                                 const std::vector<Counterexample>& batch,
                                 const KoopmanModel& model, const SerialChain& chain,
                                 const Obstacle& obstacle, const TunerConfig& config);

// Loss the learner descends (exposed for gradient checks).
double learner_loss(const SafetyIndexParams& gamma,
                    const std::vector<Counterexample>& batch,
                    const KoopmanModel& model, const SerialChain& chain,
                    const Obstacle& obstacle, const TunerConfig& config);

struct TuneRound {
  int round = 0;
  int counterexamples_found = 0;
  double mean_risk = 0.0;
  double n = 0.0;
  double beta = 0.0;
};

struct TuneResult {
  SafetyIndexParams gamma;
  std::vector<TuneRound> audit;
  bool exhausted = false;  // critic ran dry (sufficiently tuned)
};

TuneResult tune(const KoopmanModel& model, const SerialChain& chain,
                const Obstacle& obstacle, const TunerConfig& config);

void write_audit_csv(const std::vector<TuneRound>& audit, const std::string& path);

// Tuned-parameter file (plain text; round-trips exactly).
void save_gamma(const SafetyIndexParams& gamma, const std::string& path);
SafetyIndexParams load_gamma(const std::string& path);

}  // namespace ksc
