#pragma once

#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ksc/linalg.hpp"

namespace ksc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class QpStatus { kSolved, kPrimalInfeasible, kMaxIter };

std::string to_string(QpStatus s);

// Dense convex QP:
//   minimize   1/2 y^T H y + g^T y  (+ obj_offset in reported objectives)
//   subject to G y <= h,  lb <= y <= ub
struct QpProblem {
  Mat H;
  Vec g;
  Mat G;  // may have zero rows
  Vec h;
  Vec lb;
  Vec ub;
  double obj_offset = 0.0;

  // Bookkeeping filled by add_slack: (slack variable index, relaxed row index).
  std::vector<std::pair<int, int>> slack_vars;

  int var_count() const { return static_cast<int>(H.rows()); }
  int row_count() const { return static_cast<int>(G.rows()); }

  void validate() const;  // throws std::invalid_argument

  static QpProblem box_only(const Mat& H, const Vec& g, const Vec& lb, const Vec& ub);
};

struct QpOutcome {
  QpStatus status = QpStatus::kMaxIter;
  Vec y;
  double objective = 0.0;
  Vec slack_values;  // parallel to problem.slack_vars
  int iterations = 0;
  double solve_time_ms = 0.0;

  // Converged internals for cross-solve warm starting.
  Vec dual;          // stacked-row multipliers
  double final_rho = 0.0;

  // Farkas certificate over the stacked one-sided rows [G; I (ub); -I (lb)]:
  // xi >= 0, G_stacked^T xi ~= 0, h_stacked^T xi < 0. Populated when status is
  // PrimalInfeasible; also when MaxIter found a certificate at 10x looser
  // tolerance (weak_certificate set).
  Vec certificate;
  bool weak_certificate = false;
};

struct QpSettings {
  double rho = 0.1;  // splitting step, adapted from residual ratios
  double sigma = 1e-6;
  double alpha_relax = 1.6;
  int max_iter = 4000;
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  double eps_feas = 1e-6;   // post-polish KKT tolerance
  double eps_pinf = 1e-6;   // certificate tolerance (relative)
  int check_interval = 25;
  bool polish = true;
};

// Primal/dual/step-size state carried between consecutive solves of related
// problems (receding-horizon controllers). Dual length must match the
// stacked rows (G rows + box) or it is ignored.
struct QpWarmStart {
  Vec y;
  Vec dual;
  double rho = 0.0;
};

// One solver instance per concurrent solve; the instance owns mutable
// workspace, problems stay immutable.
class QpSolver {
 public:
  explicit QpSolver(QpSettings settings = {});

  QpOutcome solve(const QpProblem& problem,
                  const std::optional<Vec>& warm_start = std::nullopt);
  QpOutcome solve(const QpProblem& problem, const QpWarmStart& warm);

 private:
  QpSettings settings_;
};

QpOutcome solve(const QpProblem& problem,
                const std::optional<Vec>& warm_start = std::nullopt,
                const QpSettings& settings = {});
QpOutcome solve(const QpProblem& problem, const QpWarmStart& warm,
                const QpSettings& settings = {});

// Returns a copy of the problem where each selected row i is relaxed to
// G_i y - s_i <= h_i with s_i >= 0 and penalty weight * s_i^2 in the
// objective. Throws on duplicate rows.
QpProblem add_slack(const QpProblem& problem, const std::vector<int>& rows,
                    double weight);

// Replay format for failed solves: plain text with dimensions and row-major
// arrays.
void save_problem(const QpProblem& problem, const std::string& path);
QpProblem load_problem(const std::string& path);

}  // namespace ksc
