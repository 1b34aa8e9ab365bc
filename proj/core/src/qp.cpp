#include "ksc/qp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "ksc/configfile.hpp"

namespace ksc {

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::kSolved: return "solved";
    case QpStatus::kPrimalInfeasible: return "infeasible";
    case QpStatus::kMaxIter: return "max_iter";
  }
  return "unknown";
}

void QpProblem::validate() const {
  const int v = var_count();
  if (H.cols() != v || g.size() != v || lb.size() != v || ub.size() != v)
    throw std::invalid_argument("QpProblem: inconsistent dimensions");
  if (G.rows() != h.size() || (G.rows() > 0 && G.cols() != v))
    throw std::invalid_argument("QpProblem: inequality dimensions mismatch");
  if (((H - H.transpose()).array().abs() > 1e-10).any())
    throw std::invalid_argument("QpProblem: H must be symmetric");
  for (int i = 0; i < v; ++i)
    if (!(lb[i] <= ub[i])) throw std::invalid_argument("QpProblem: lb > ub");
}

QpProblem QpProblem::box_only(const Mat& H, const Vec& g, const Vec& lb, const Vec& ub) {
  QpProblem p;
  p.H = H;
  p.g = g;
  p.G = Mat::Zero(0, H.rows());
  p.h = Vec::Zero(0);
  p.lb = lb;
  p.ub = ub;
  p.validate();
  return p;
}

namespace {

// Stacked constraint view: l <= M y <= u with M = [G; I].
struct Stacked {
  Mat M;
  Vec l;
  Vec u;
};

Stacked stack_constraints(const QpProblem& p) {
  const int v = p.var_count();
  const int r = p.row_count();
  Stacked s;
  s.M.resize(r + v, v);
  if (r > 0) s.M.topRows(r) = p.G;
  s.M.bottomRows(v) = Mat::Identity(v, v);
  s.l.resize(r + v);
  s.u.resize(r + v);
  s.l.head(r).setConstant(-kInf);
  s.u.head(r) = p.h;
  s.l.tail(v) = p.lb;
  s.u.tail(v) = p.ub;
  return s;
}

double inf_norm(const Vec& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// Certificate support: given a candidate dual direction e over the stacked
// rows, refine it by a least-squares solve on the active support and convert
// it to the one-sided form [G; I(ub); -I(lb)].
struct CertificateCheck {
  bool valid = false;
  Vec xi;  // one-sided multipliers, size r + 2v
};

CertificateCheck check_certificate(const QpProblem& p, const Stacked& s, Vec e,
                                   double tol) {
  CertificateCheck out;
  const int v = p.var_count();
  const int r = p.row_count();
  const double norm_e = inf_norm(e);
  if (norm_e < 1e-14) return out;
  e /= norm_e;

  // Rows whose bound is infinite cannot support the corresponding sign; clip
  // noise-level components, reject genuinely misdirected ones.
  for (int i = 0; i < e.size(); ++i) {
    if (e[i] > 0.0 && !std::isfinite(s.u[i])) {
      if (e[i] > tol) return out;
      e[i] = 0.0;
    }
    if (e[i] < 0.0 && !std::isfinite(s.l[i])) {
      if (e[i] < -tol) return out;
      e[i] = 0.0;
    }
  }
  if (inf_norm(e) < 1e-14) return out;

  const Vec mte = s.M.transpose() * e;
  double support = 0.0;
  for (int i = 0; i < e.size(); ++i) {
    if (e[i] > 0.0) support += s.u[i] * e[i];
    if (e[i] < 0.0) support += s.l[i] * e[i];
  }
  if (inf_norm(mte) > tol * inf_norm(e) || support > -tol) return out;

  out.valid = true;
  out.xi = Vec::Zero(r + 2 * v);
  for (int i = 0; i < r; ++i) out.xi[i] = std::max(e[i], 0.0);
  for (int i = 0; i < v; ++i) {
    out.xi[r + i] = std::max(e[r + i], 0.0);        // ub row:  y_i <= ub_i
    out.xi[r + v + i] = std::max(-e[r + i], 0.0);   // lb row: -y_i <= -lb_i
  }
  const double scale = inf_norm(out.xi);
  if (scale > 0.0) out.xi /= scale;
  return out;
}

// Least-squares sharpening of a candidate direction: keep the significant
// support, minimize ||M_S^T xi|| subject to a normalization, clip negatives.
Vec refine_direction(const Stacked& s, const Vec& e) {
  const double norm_e = inf_norm(e);
  if (norm_e < 1e-14) return e;
  std::vector<int> support;
  for (int i = 0; i < e.size(); ++i)
    if (std::abs(e[i]) > 1e-4 * norm_e) support.push_back(i);
  if (support.empty()) return e;
  const int k = static_cast<int>(support.size());

  // minimize ||M_S^T xi||^2 s.t. d^T xi = 1 with d the sign pattern of e.
  Mat kkt = Mat::Zero(k + 1, k + 1);
  Vec rhs = Vec::Zero(k + 1);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      kkt(a, b) = s.M.row(support[a]).dot(s.M.row(support[b]));
  kkt.topLeftCorner(k, k) += 1e-12 * Mat::Identity(k, k);
  for (int a = 0; a < k; ++a) {
    const double sign = e[support[a]] >= 0.0 ? 1.0 : -1.0;
    kkt(a, k) = sign;
    kkt(k, a) = sign;
  }
  rhs[k] = 1.0;
  const Vec sol = kkt.colPivHouseholderQr().solve(rhs);
  Vec refined = Vec::Zero(e.size());
  for (int a = 0; a < k; ++a) {
    // Clip components whose sign flipped; the certificate cone is one-sided.
    const double sign = e[support[a]] >= 0.0 ? 1.0 : -1.0;
    const double val = sol[a];
    refined[support[a]] = (val * sign > 0.0) ? val : 0.0;
  }
  return refined;
}

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double comp = 0.0;
};

KktResiduals kkt_residuals(const QpProblem& p, const Stacked& s, const Vec& y,
                           const Vec& lam) {
  KktResiduals res;
  const Vec my = s.M * y;
  for (int i = 0; i < my.size(); ++i) {
    double viol = 0.0;
    if (std::isfinite(s.u[i])) viol = std::max(viol, my[i] - s.u[i]);
    if (std::isfinite(s.l[i])) viol = std::max(viol, s.l[i] - my[i]);
    res.primal = std::max(res.primal, viol);
    const double slack = std::min(std::isfinite(s.u[i]) ? s.u[i] - my[i] : kInf,
                                  std::isfinite(s.l[i]) ? my[i] - s.l[i] : kInf);
    res.comp = std::max(res.comp, std::abs(lam[i]) * std::max(slack, 0.0));
  }
  res.dual = inf_norm(p.H * y + p.g + s.M.transpose() * lam);
  return res;
}

// Equality-KKT polish on the active rows detected from the converged ADMM
// iterate, with up to three passes dropping wrong-signed multipliers.
// Returns true when the polished pair satisfies the tight residuals.
bool polish_solution(const QpProblem& p, const Stacked& s, Vec& y, Vec& lam,
                     double eps_feas) {
  const int v = p.var_count();
  const Vec my = s.M * y;
  std::vector<int> active;
  std::vector<bool> is_upper;
  for (int i = 0; i < my.size(); ++i) {
    const bool upper = std::isfinite(s.u[i]) && (lam[i] > 1e-9 || my[i] > s.u[i] - 1e-7);
    const bool lower =
        std::isfinite(s.l[i]) && (lam[i] < -1e-9 || my[i] < s.l[i] + 1e-7);
    if (upper) {
      active.push_back(i);
      is_upper.push_back(true);
    } else if (lower) {
      active.push_back(i);
      is_upper.push_back(false);
    }
  }

  for (int pass = 0; pass < 3; ++pass) {
    const int k = static_cast<int>(active.size());
    Mat kkt = Mat::Zero(v + k, v + k);
    Vec rhs(v + k);
    kkt.topLeftCorner(v, v) = p.H;
    rhs.head(v) = -p.g;
    for (int a = 0; a < k; ++a) {
      kkt.block(v + a, 0, 1, v) = s.M.row(active[a]);
      kkt.block(0, v + a, v, 1) = s.M.row(active[a]).transpose();
      rhs[v + a] = is_upper[a] ? s.u[active[a]] : s.l[active[a]];
    }
    // Factor with a tiny dual regularization (keeps redundant active rows
    // solvable) but refine against the unregularized system so the
    // regularization bias does not leak into the constraint residuals.
    Mat kkt_reg = kkt;
    kkt_reg.bottomRightCorner(k, k) -= 1e-11 * Mat::Identity(k, k);
    const Eigen::ColPivHouseholderQR<Mat> qr(kkt_reg);
    Vec sol = qr.solve(rhs);
    for (int refine = 0; refine < 4; ++refine) {
      const Vec resid = rhs - kkt * sol;
      if (inf_norm(resid) < 1e-14 * (1.0 + inf_norm(rhs))) break;
      sol += qr.solve(resid);
    }

    Vec y_pol = sol.head(v);
    Vec lam_pol = Vec::Zero(my.size());
    bool signs_ok = true;
    std::vector<int> keep_active;
    std::vector<bool> keep_upper;
    for (int a = 0; a < k; ++a) {
      const double mult = sol[v + a];
      const bool ok = is_upper[a] ? mult >= -1e-8 : mult <= 1e-8;
      if (ok) {
        keep_active.push_back(active[a]);
        keep_upper.push_back(is_upper[a]);
        lam_pol[active[a]] = mult;
      } else {
        signs_ok = false;
      }
    }

    if (signs_ok) {
      const KktResiduals res = kkt_residuals(p, s, y_pol, lam_pol);
      if (res.primal <= eps_feas && res.dual <= eps_feas) {
        y = y_pol;
        lam = lam_pol;
        return true;
      }
      return false;
    }
    active = std::move(keep_active);
    is_upper = std::move(keep_upper);
  }
  return false;
}

}  // namespace

namespace {

// Modified Ruiz equilibration: diagonal scalings D (variables) and E (stacked
// rows) drive the column/row inf-norms of [H; M] toward one, plus a scalar
// cost normalization. Wide-dynamic-range objectives (slack penalties of 1e6+
// next to unit tracking weights) are unusable without this.
struct Scaling {
  Vec d;      // variable scaling
  Vec e;      // row scaling
  double c = 1.0;
  Mat hs;
  Vec gs;
  Mat ms;
  Vec ls;
  Vec us;
};

Scaling equilibrate(const QpProblem& p, const Stacked& s) {
  const int v = p.var_count();
  const int rows = static_cast<int>(s.M.rows());
  Scaling sc;
  sc.d = Vec::Ones(v);
  sc.e = Vec::Ones(rows);
  sc.hs = p.H;
  sc.gs = p.g;
  sc.ms = s.M;

  for (int pass = 0; pass < 10; ++pass) {
    Vec dd(v), de(rows);
    for (int j = 0; j < v; ++j) {
      const double col = std::max(inf_norm(sc.hs.col(j)), inf_norm(sc.ms.col(j)));
      dd[j] = 1.0 / std::sqrt(std::clamp(col, 1e-8, 1e8));
    }
    for (int i = 0; i < rows; ++i) {
      const double row = inf_norm(sc.ms.row(i).transpose());
      de[i] = 1.0 / std::sqrt(std::clamp(row, 1e-8, 1e8));
    }
    sc.hs = dd.asDiagonal() * sc.hs * dd.asDiagonal();
    sc.gs = dd.cwiseProduct(sc.gs);
    sc.ms = de.asDiagonal() * sc.ms * dd.asDiagonal();
    sc.d = sc.d.cwiseProduct(dd);
    sc.e = sc.e.cwiseProduct(de);

    double mean_col = 0.0;
    for (int j = 0; j < v; ++j) mean_col += inf_norm(sc.hs.col(j));
    mean_col /= std::max(v, 1);
    const double gamma =
        1.0 / std::clamp(std::max(mean_col, inf_norm(sc.gs)), 1e-8, 1e8);
    sc.hs *= gamma;
    sc.gs *= gamma;
    sc.c *= gamma;
  }

  sc.ls = sc.e.cwiseProduct(s.l);  // +-inf scale to themselves
  sc.us = sc.e.cwiseProduct(s.u);
  return sc;
}

}  // namespace

QpSolver::QpSolver(QpSettings settings) : settings_(settings) {}

QpOutcome QpSolver::solve(const QpProblem& problem,
                          const std::optional<Vec>& warm_start) {
  QpWarmStart warm;
  if (warm_start.has_value()) warm.y = *warm_start;
  return solve(problem, warm);
}

QpOutcome QpSolver::solve(const QpProblem& problem, const QpWarmStart& warm) {
  const auto t0 = std::chrono::steady_clock::now();
  problem.validate();
  const int v = problem.var_count();

  // Reject indefinite H: a PSD matrix stays factorizable after a tiny shift.
  {
    const double shift = 1e-9 * (1.0 + problem.H.diagonal().cwiseAbs().maxCoeff());
    Eigen::LLT<Mat> llt(problem.H + shift * Mat::Identity(v, v));
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("QpSolver: H is not positive semidefinite");
  }

  const Stacked s = stack_constraints(problem);
  const int rows = static_cast<int>(s.M.rows());
  const Scaling sc = equilibrate(problem, s);

  double rho = settings_.rho;
  Eigen::LLT<Mat> kkt;
  auto refactor = [&]() {
    Mat lhs = sc.hs + settings_.sigma * Mat::Identity(v, v) +
              rho * (sc.ms.transpose() * sc.ms);
    kkt.compute(lhs);
    if (kkt.info() != Eigen::Success)
      throw std::runtime_error("QpSolver: KKT factorization failed");
  };
  refactor();

  if (warm.y.size() != 0 && warm.y.size() != v)
    throw std::invalid_argument("QpSolver: warm start dimension mismatch");
  if (warm.rho > 0.0 && rho != warm.rho) {
    rho = std::clamp(warm.rho, 1e-6, 1e6);
    refactor();
  }

  // Scaled iterates: y = D ys, lambda = E lam_s / c.
  Vec ys = warm.y.size() == v
               ? Vec(clamp(warm.y, problem.lb, problem.ub).cwiseQuotient(sc.d))
               : Vec::Zero(v);
  Vec zs = sc.ms * ys;
  for (int i = 0; i < rows; ++i) zs[i] = std::clamp(zs[i], sc.ls[i], sc.us[i]);
  Vec lam_s = warm.dual.size() == rows
                  ? Vec(sc.c * warm.dual.cwiseQuotient(sc.e))
                  : Vec::Zero(rows);

  QpOutcome out;
  const double alpha = settings_.alpha_relax;
  Vec delta_lam_acc = Vec::Zero(rows);

  auto unscaled_y = [&]() { return Vec(sc.d.cwiseProduct(ys)); };
  auto unscaled_lam = [&]() { return Vec(sc.e.cwiseProduct(lam_s) / sc.c); };

  Vec y = unscaled_y();
  Vec lam = unscaled_lam();

  for (int iter = 1; iter <= settings_.max_iter; ++iter) {
    const Vec rhs =
        settings_.sigma * ys - sc.gs + sc.ms.transpose() * (rho * zs - lam_s);
    const Vec y_tilde = kkt.solve(rhs);
    const Vec z_tilde = sc.ms * y_tilde;

    const Vec y_next = alpha * y_tilde + (1.0 - alpha) * ys;
    Vec z_arg = alpha * z_tilde + (1.0 - alpha) * zs + lam_s / rho;
    Vec z_next(rows);
    for (int i = 0; i < rows; ++i) z_next[i] = std::clamp(z_arg[i], sc.ls[i], sc.us[i]);
    const Vec lam_next = lam_s + rho * (alpha * z_tilde + (1.0 - alpha) * zs - z_next);

    delta_lam_acc += lam_next - lam_s;
    ys = y_next;
    zs = z_next;
    lam_s = lam_next;
    out.iterations = iter;

    if (iter % settings_.check_interval == 0 || iter == settings_.max_iter) {
      // Termination on unscaled residuals.
      y = unscaled_y();
      lam = unscaled_lam();
      const Vec zv = zs.cwiseQuotient(sc.e);
      const Vec my = s.M * y;
      const double r_prim = inf_norm(my - zv);
      const double r_dual = inf_norm(problem.H * y + problem.g + s.M.transpose() * lam);
      const double eps_pri = settings_.eps_abs +
                             settings_.eps_rel * std::max(inf_norm(my), inf_norm(zv));
      const double eps_dua =
          settings_.eps_abs +
          settings_.eps_rel * std::max({inf_norm(problem.H * y), inf_norm(problem.g),
                                        inf_norm(s.M.transpose() * lam)});
      if (r_prim <= eps_pri && r_dual <= eps_dua) {
        out.status = QpStatus::kSolved;
        break;
      }

      // Primal infeasibility: the accumulated dual step settles on a Farkas
      // direction. Shallow infeasibility accumulates slowly, so the direction
      // integrates across checks and every check sharpens and verifies it;
      // the strict verification keeps false positives out.
      const Vec dir = sc.e.cwiseProduct(delta_lam_acc);
      CertificateCheck strict = check_certificate(problem, s, dir, settings_.eps_pinf);
      if (!strict.valid) {
        const Vec refined = refine_direction(s, dir);
        strict = check_certificate(problem, s, refined, settings_.eps_pinf);
      }
      if (strict.valid) {
        out.status = QpStatus::kPrimalInfeasible;
        out.certificate = strict.xi;
        break;
      }

      // Residual-balancing step-size adaptation on normalized scaled
      // residuals; plain ratios miss stalls where both residuals sit at
      // different magnitudes of their natural scales.
      const Vec msy = sc.ms * ys;
      const double rp_s = inf_norm(msy - zs) /
                          std::max({inf_norm(msy), inf_norm(zs), 1e-10});
      const double rd_s =
          inf_norm(sc.hs * ys + sc.gs + sc.ms.transpose() * lam_s) /
          std::max({inf_norm(sc.hs * ys), inf_norm(sc.ms.transpose() * lam_s),
                    inf_norm(sc.gs), 1e-10});
      const double ratio = std::sqrt((rp_s + 1e-14) / (rd_s + 1e-14));
      if (ratio > 5.0 || ratio < 0.2) {
        rho = std::clamp(rho * ratio, 1e-6, 1e6);
        refactor();
        delta_lam_acc.setZero();  // direction restarts under the new step size
      }
    }
  }

  y = unscaled_y();
  lam = unscaled_lam();

  if (out.status == QpStatus::kMaxIter) {
    // A near-converged iterate may still verify through the polish even when
    // the splitting iteration itself stalled on scaling.
    Vec y_try = y;
    Vec lam_try = lam;
    if (settings_.polish &&
        polish_solution(problem, s, y_try, lam_try, settings_.eps_feas)) {
      out.status = QpStatus::kSolved;
      y = y_try;
      lam = lam_try;
    }
  }

  if (out.status == QpStatus::kMaxIter) {
    // Distinguish slow convergence from infeasibility at 10x looser tolerance.
    const Vec dir = sc.e.cwiseProduct(delta_lam_acc);
    CertificateCheck weak = check_certificate(problem, s, dir, settings_.eps_pinf * 10.0);
    if (!weak.valid) {
      const Vec refined = refine_direction(s, dir);
      weak = check_certificate(problem, s, refined, settings_.eps_pinf * 10.0);
    }
    if (weak.valid) {
      out.weak_certificate = true;
      out.certificate = weak.xi;
    }
  } else if (out.status == QpStatus::kSolved) {
    if (settings_.polish) polish_solution(problem, s, y, lam, settings_.eps_feas);
    // Final clamp: the box is part of the constraint set.
    y = clamp(y, problem.lb, problem.ub);
    out.y = y;
    out.objective = 0.5 * y.dot(problem.H * y) + problem.g.dot(y) + problem.obj_offset;
    out.slack_values.resize(static_cast<Eigen::Index>(problem.slack_vars.size()));
    for (std::size_t i = 0; i < problem.slack_vars.size(); ++i)
      out.slack_values[static_cast<Eigen::Index>(i)] = y[problem.slack_vars[i].first];
  }

  out.dual = lam;
  out.final_rho = rho;

  const auto t1 = std::chrono::steady_clock::now();
  out.solve_time_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return out;
}

QpOutcome solve(const QpProblem& problem, const std::optional<Vec>& warm_start,
                const QpSettings& settings) {
  QpSolver solver(settings);
  return solver.solve(problem, warm_start);
}

QpOutcome solve(const QpProblem& problem, const QpWarmStart& warm,
                const QpSettings& settings) {
  QpSolver solver(settings);
  return solver.solve(problem, warm);
}

QpProblem add_slack(const QpProblem& problem, const std::vector<int>& rows,
                    double weight) {
  problem.validate();
  if (rows.empty()) return problem;
  std::vector<int> sorted = rows;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("add_slack: duplicate rows");
  for (int r : sorted)
    if (r < 0 || r >= problem.row_count())
      throw std::invalid_argument("add_slack: row index out of range");
  if (!(weight > 0.0)) throw std::invalid_argument("add_slack: weight must be positive");

  const int v = problem.var_count();
  const int k = static_cast<int>(sorted.size());
  QpProblem out;
  out.H = Mat::Zero(v + k, v + k);
  out.H.topLeftCorner(v, v) = problem.H;
  for (int i = 0; i < k; ++i) out.H(v + i, v + i) = 2.0 * weight;  // weight * s^2
  out.g = Vec::Zero(v + k);
  out.g.head(v) = problem.g;
  out.G = Mat::Zero(problem.row_count(), v + k);
  out.G.leftCols(v) = problem.G;
  for (int i = 0; i < k; ++i) out.G(sorted[i], v + i) = -1.0;  // G_i y - s_i <= h_i
  out.h = problem.h;
  out.lb = Vec::Constant(v + k, 0.0);
  out.lb.head(v) = problem.lb;
  out.ub = Vec::Constant(v + k, kInf);
  out.ub.head(v) = problem.ub;
  out.obj_offset = problem.obj_offset;
  out.slack_vars = problem.slack_vars;
  for (int i = 0; i < k; ++i) out.slack_vars.emplace_back(v + i, sorted[i]);
  out.validate();
  return out;
}

void save_problem(const QpProblem& problem, const std::string& path) {
  ConfigWriter w;
  auto write_mat = [&w](const std::string& key, const Mat& m) {
    std::vector<double> flat;
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    w.entry(key + "_rows", static_cast<long>(m.rows()));
    w.entry(key + "_cols", static_cast<long>(m.cols()));
    w.entry(key, flat);
  };
  auto write_vec = [&w](const std::string& key, const Vec& vec) {
    w.entry(key, std::vector<double>(vec.data(), vec.data() + vec.size()));
  };
  w.open_block("qp");
  w.entry("vars", static_cast<long>(problem.var_count()));
  w.entry("rows", static_cast<long>(problem.row_count()));
  w.entry("obj_offset", problem.obj_offset);
  write_mat("h_mat", problem.H);
  write_vec("g", problem.g);
  write_mat("g_mat", problem.G);
  write_vec("h_vec", problem.h);
  write_vec("lb", problem.lb);
  write_vec("ub", problem.ub);
  w.close_block();
  w.write_file(path);
}

QpProblem load_problem(const std::string& path) {
  const ConfigNode root = ConfigNode::parse_file(path);
  const ConfigNode& q = root.child("qp");
  auto read_mat = [&q](const std::string& key) {
    const long rows = q.child(key + "_rows").as_int();
    const long cols = q.child(key + "_cols").as_int();
    const std::vector<double> flat = q.child(key).as_doubles();
    Mat m(rows, cols);
    std::size_t idx = 0;
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c) m(r, c) = flat[idx++];
    return m;
  };
  auto read_vec = [&q](const std::string& key) {
    const std::vector<double> flat = q.child(key).as_doubles();
    return Eigen::Map<const Vec>(flat.data(), static_cast<Eigen::Index>(flat.size())).eval();
  };
  QpProblem p;
  p.H = read_mat("h_mat");
  p.g = read_vec("g");
  p.G = read_mat("g_mat");
  p.h = read_vec("h_vec");
  p.lb = read_vec("lb");
  p.ub = read_vec("ub");
  p.obj_offset = q.get_double("obj_offset", 0.0);
  p.validate();
  return p;
}

}  // namespace ksc
