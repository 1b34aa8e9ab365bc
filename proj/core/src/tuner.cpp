#include "ksc/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ksc/configfile.hpp"
#include "ksc/csv.hpp"

namespace ksc {

void TunerConfig::validate() const {
  gamma0.validate();
  if (!(mu >= 0.0)) throw std::invalid_argument("TunerConfig: mu must be >= 0");
  if (n_batch < 1 || n_trials < 1 || samples_per_trial < 1 || max_rounds < 1)
    throw std::invalid_argument("TunerConfig: counts must be positive");
  if (!(critic_step > 0.0) || !(learner_step > 0.0))
    throw std::invalid_argument("TunerConfig: step sizes must be positive");
  if (!(projection_threshold > 0.0) || !(boundary_band > 0.0))
    throw std::invalid_argument("TunerConfig: thresholds must be positive");
}

namespace {

Vec vertex_control(const SerialChain& chain, unsigned mask) {
  const int m = chain.joint_count();
  Vec v(m);
  for (int j = 0; j < m; ++j)
    v[j] = (mask >> j) & 1u ? chain.u_max[j] : chain.u_min[j];
  return v;
}

struct RiskEval {
  double risk = 0.0;
  unsigned vertex_mask = 0;
  double s_min = 0.0;  // geometric phi-dot factor at the active vertex
  PhiDotGeometry geo;
};

RiskEval risk_detail(const SafetyIndexParams& gamma, const KoopmanModel& model,
                     const SerialChain& chain, const Obstacle& obstacle,
                     const Vec& q, int link) {
  const int m = chain.joint_count();
  if (m > 16) throw std::invalid_argument("infeasibility_risk: too many controls (m > 16)");
  RiskEval eval;
  eval.geo = phidot_geometry(model, chain, q, obstacle, link);
  const double slope = phi_param_slope(gamma, eval.geo.distance);
  const unsigned count = 1u << m;
  bool first = true;
  for (unsigned mask = 0; mask < count; ++mask) {
    const Vec v = vertex_control(chain, mask);
    const double s = (eval.geo.a_geo.dot(v) + eval.geo.c_geo) / model.dt;
    const double value = slope * s;
    if (first || value < eval.risk) {  // strict: ties keep the lowest mask
      eval.risk = value;
      eval.vertex_mask = mask;
      eval.s_min = s;
      first = false;
    }
  }
  return eval;
}

double surface_distance(const SerialChain& chain, const FkResult& fk, int sphere,
                        const Vec& p_obs) {
  return (fk.sphere_center(sphere) - p_obs).norm() - chain.sphere_radius(sphere);
}

}  // namespace

double infeasibility_risk(const SafetyIndexParams& gamma, const KoopmanModel& model,
                          const SerialChain& chain, const Obstacle& obstacle,
                          const Vec& q, int link) {
  return risk_detail(gamma, model, chain, obstacle, q, link).risk;
}

std::optional<Vec> project_to_boundary(const SerialChain& chain,
                                       const Obstacle& obstacle, const Vec& q_init,
                                       double d_min, const TunerConfig& config) {
  const int n = chain.joint_count();
  const int spheres = chain.sphere_count();
  Vec q = q_init;

  auto loss_of = [&](const Vec& qq) {
    const FkResult fk = forward_kinematics(chain, qq);
    double loss = 0.0;
    for (int s = 0; s < spheres; ++s)
      loss += std::max(0.0, d_min - surface_distance(chain, fk, s, obstacle.center));
    return loss;
  };

  double loss = loss_of(q);
  for (int iter = 0; iter < config.projection_iters && loss > config.projection_threshold;
       ++iter) {
    const FkResult fk = forward_kinematics(chain, q);
    Vec grad = Vec::Zero(n);
    for (int s = 0; s < spheres; ++s) {
      const double d = surface_distance(chain, fk, s, obstacle.center);
      if (d_min - d <= 0.0) continue;
      const Vec delta = fk.sphere_center(s) - obstacle.center;
      const double center_dist = std::max(delta.norm(), 1e-9);
      // grad of the active hinge term: -d(d_s)/dq
      grad -= sphere_jacobian(chain, q, s).transpose() * (delta / center_dist);
    }
    const double gnorm2 = grad.squaredNorm();
    if (gnorm2 < 1e-18) break;
    // Step toward the hinge zero set, capped by the configured rate: the
    // hinge is piecewise linear, so loss/|grad|^2 is the exact step to land
    // on the shell when one term dominates.
    const double step = std::min(config.critic_step, loss / gnorm2);
    q -= step * grad;
    loss = loss_of(q);
  }
  if (loss > config.projection_threshold) return std::nullopt;

  const FkResult fk = forward_kinematics(chain, q);
  for (int s = 0; s < spheres; ++s) {
    if (std::abs(surface_distance(chain, fk, s, obstacle.center) - d_min) <=
        config.boundary_band)
      return q;
  }
  return std::nullopt;
}

CollectResult collect_counterexamples(const SafetyIndexParams& gamma,
                                      const KoopmanModel& model,
                                      const SerialChain& chain,
                                      const Obstacle& obstacle,
                                      const TunerConfig& config, Rng& rng) {
  config.validate();
  const int n = chain.joint_count();
  const Vec lo = config.q_lo.size() == n ? config.q_lo : Vec::Constant(n, -M_PI);
  const Vec hi = config.q_hi.size() == n ? config.q_hi : Vec::Constant(n, M_PI);

  CollectResult result;
  for (int trial = 0; trial < config.n_trials; ++trial) {
    result.trials_used = trial + 1;
    for (int s = 0; s < config.samples_per_trial; ++s) {
      const Vec q0 = rng.uniform_vec(n, lo, hi);
      const std::optional<Vec> projected =
          project_to_boundary(chain, obstacle, q0, gamma.d_min, config);
      if (!projected.has_value()) continue;
      const Vec& q = *projected;
      const FkResult fk = forward_kinematics(chain, q);
      Counterexample ce;
      ce.q = q;
      std::vector<PhiDotCoeffs> coeffs;
      for (int link = 0; link < chain.sphere_count(); ++link) {
        const double d = surface_distance(chain, fk, link, obstacle.center);
        if (std::abs(d - gamma.d_min) > config.boundary_band) continue;
        ce.active_links.push_back(link);
        ce.risks.push_back(infeasibility_risk(gamma, model, chain, obstacle, q, link));
        coeffs.push_back(phidot_coeffs(model, gamma, chain, q, obstacle, link));
      }
      if (ce.active_links.empty()) continue;
      // Recorded when no admissible vertex keeps every boundary-active link's
      // phi-dot nonpositive: each saturated control fails some link.
      const int m = chain.joint_count();
      bool every_vertex_fails = true;
      for (unsigned mask = 0; mask < (1u << m) && every_vertex_fails; ++mask) {
        const Vec v = vertex_control(chain, mask);
        bool some_link_up = false;
        for (const PhiDotCoeffs& c : coeffs) {
          if ((c.a.dot(v) + c.c) / model.dt > 0.0) {
            some_link_up = true;
            break;
          }
        }
        if (!some_link_up) every_vertex_fails = false;
      }
      if (!every_vertex_fails) continue;
      result.batch.push_back(std::move(ce));
      if (static_cast<int>(result.batch.size()) >= config.n_batch) return result;
    }
  }
  result.exhausted = true;
  return result;
}

double learner_loss(const SafetyIndexParams& gamma,
                    const std::vector<Counterexample>& batch,
                    const KoopmanModel& model, const SerialChain& chain,
                    const Obstacle& obstacle, const TunerConfig& config) {
  if (batch.empty()) throw std::invalid_argument("learner_loss: empty batch");
  double total = 0.0;
  for (const Counterexample& ce : batch) {
    double mean_risk = 0.0;
    for (int link : ce.active_links)
      mean_risk += infeasibility_risk(gamma, model, chain, obstacle, ce.q, link);
    total += mean_risk / static_cast<double>(ce.active_links.size());
  }
  total /= static_cast<double>(batch.size());
  const double dn = gamma.n - config.gamma0.n;
  const double db = gamma.beta - config.gamma0.beta;
  return total + config.mu * (dn * dn + db * db);
}

SafetyIndexParams learner_update(const SafetyIndexParams& gamma,
                                 const std::vector<Counterexample>& batch,
                                 const KoopmanModel& model, const SerialChain& chain,
                                 const Obstacle& obstacle, const TunerConfig& config) {
  if (batch.empty()) throw std::invalid_argument("learner_update: empty batch");
  double grad_n = 0.0;
  double grad_b = 0.0;
  for (const Counterexample& ce : batch) {
    double gn = 0.0;
    double gb = 0.0;
    for (int link : ce.active_links) {
      const RiskEval eval = risk_detail(gamma, model, chain, obstacle, ce.q, link);
      // risk = slope(d) * s(v*); slope = -n d^(n-1) + beta.
      const double d = eval.geo.distance;
      const double dslope_dn = -std::pow(d, gamma.n - 1.0) * (1.0 + gamma.n * std::log(d));
      gn += dslope_dn * eval.s_min;
      gb += eval.s_min;
    }
    grad_n += gn / static_cast<double>(ce.active_links.size());
    grad_b += gb / static_cast<double>(ce.active_links.size());
  }
  grad_n /= static_cast<double>(batch.size());
  grad_b /= static_cast<double>(batch.size());
  grad_n += 2.0 * config.mu * (gamma.n - config.gamma0.n);
  grad_b += 2.0 * config.mu * (gamma.beta - config.gamma0.beta);

  SafetyIndexParams next = gamma;
  next.n = std::clamp(gamma.n - config.learner_step * grad_n, 0.1, 4.0);
  next.beta = std::clamp(gamma.beta - config.learner_step * grad_b, -2.0, 2.0);
  return next;
}

TuneResult tune(const KoopmanModel& model, const SerialChain& chain,
                const Obstacle& obstacle, const TunerConfig& config) {
  config.validate();
  TuneResult result;
  result.gamma = config.gamma0;
  Rng rng(config.seed);
  for (int round = 0; round < config.max_rounds; ++round) {
    Rng round_rng = rng.fork(static_cast<std::uint64_t>(round));
    const CollectResult collected = collect_counterexamples(
        result.gamma, model, chain, obstacle, config, round_rng);

    TuneRound log;
    log.round = round;
    log.counterexamples_found = static_cast<int>(collected.batch.size());
    if (!collected.batch.empty()) {
      double mean = 0.0;
      for (const Counterexample& ce : collected.batch) {
        double r = 0.0;
        for (double risk : ce.risks) r += risk;
        mean += r / static_cast<double>(ce.risks.size());
      }
      log.mean_risk = mean / static_cast<double>(collected.batch.size());
    }
    log.n = result.gamma.n;
    log.beta = result.gamma.beta;
    result.audit.push_back(log);

    if (collected.exhausted) {
      result.exhausted = true;
      break;
    }
    result.gamma = learner_update(result.gamma, collected.batch, model, chain,
                                  obstacle, config);
  }
  return result;
}

void write_audit_csv(const std::vector<TuneRound>& audit, const std::string& path) {
  csv::Table table;
  table.header = {"round", "counterexamples_found", "mean_risk", "n", "beta"};
  for (const TuneRound& r : audit) {
    table.rows.push_back({std::to_string(r.round),
                          std::to_string(r.counterexamples_found),
                          csv::cell(r.mean_risk), csv::cell(r.n), csv::cell(r.beta)});
  }
  csv::write_file(path, table);
}

void save_gamma(const SafetyIndexParams& gamma, const std::string& path) {
  ConfigWriter w;
  w.open_block("safety_index");
  w.entry("n", gamma.n);
  w.entry("beta", gamma.beta);
  w.entry("d_min", gamma.d_min);
  w.close_block();
  w.write_file(path);
}

SafetyIndexParams load_gamma(const std::string& path) {
  const ConfigNode root = ConfigNode::parse_file(path);
  const ConfigNode& node = root.child("safety_index");
  SafetyIndexParams gamma;
  gamma.n = node.child("n").as_double();
  gamma.beta = node.child("beta").as_double();
  gamma.d_min = node.child("d_min").as_double();
  gamma.validate();
  return gamma;
}

}  // namespace ksc
