#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ksc/qp.hpp"
#include "ksc/rng.hpp"
#include "oracles.hpp"

using namespace ksc;

namespace {

// Random strictly convex QP with a guaranteed-nonempty feasible set: the
// right-hand sides are anchored at a random interior point.
QpProblem random_feasible_qp(Rng& rng, int vmax, int rmax) {
  const int v = 1 + static_cast<int>(rng.uniform_index(vmax));
  const int r = static_cast<int>(rng.uniform_index(rmax + 1));
  Mat root = Mat::NullaryExpr(v, v, [&]() { return rng.normal(); });
  QpProblem p;
  p.H = root.transpose() * root + 0.1 * Mat::Identity(v, v);
  p.H = 0.5 * (p.H + p.H.transpose()).eval();
  p.g = rng.normal_vec(v);
  p.G = Mat::NullaryExpr(r, v, [&]() { return rng.normal(); });
  const Vec anchor = rng.normal_vec(v);
  p.h = p.G * anchor + rng.uniform_vec(r, 0.05, 1.5);
  p.lb = anchor.array() - 3.0;
  p.ub = anchor.array() + 3.0;
  p.validate();
  return p;
}

QpProblem infeasible_pair() {
  // u <= -1 and u >= 1
  QpProblem p;
  p.H = 2.0 * Mat::Identity(1, 1);
  p.g = Vec::Zero(1);
  p.G = Mat(2, 1);
  p.G << 1.0, -1.0;
  p.h = Vec(2);
  p.h << -1.0, -1.0;
  p.lb = Vec::Constant(1, -10.0);
  p.ub = Vec::Constant(1, 10.0);
  return p;
}

}  // namespace

TEST_CASE("1-D projection onto u >= 1") {
  QpProblem p;
  p.H = 2.0 * Mat::Identity(1, 1);
  p.g = Vec::Zero(1);
  p.G = Mat(1, 1);
  p.G << -1.0;  // -u <= -1
  p.h = Vec::Constant(1, -1.0);
  p.lb = Vec::Constant(1, -kInf);
  p.ub = Vec::Constant(1, kInf);
  const QpOutcome out = solve(p);
  REQUIRE(out.status == QpStatus::kSolved);
  CHECK(out.y[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(out.objective == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("empty feasible set yields a verified certificate") {
  const QpProblem p = infeasible_pair();
  const QpOutcome out = solve(p);
  REQUIRE(out.status == QpStatus::kPrimalInfeasible);
  CHECK(oracles::certificate_ok(p, out.certificate));
}

TEST_CASE("random strictly convex problems match the enumeration oracle") {
  Rng rng(42);
  int solved = 0;
  while (solved < 25) {
    const QpProblem p = random_feasible_qp(rng, 6, 10);
    const auto reference = oracles::enumerate_qp(p);
    REQUIRE(reference.feasible);
    const QpOutcome out = solve(p);
    REQUIRE(out.status == QpStatus::kSolved);
    CHECK(std::abs(out.objective - reference.objective) < 1e-5);
    ++solved;
  }
}

TEST_CASE("constructed infeasible problems all certify") {
  Rng rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    const int v = 2 + static_cast<int>(rng.uniform_index(4));
    Mat root = Mat::NullaryExpr(v, v, [&]() { return rng.normal(); });
    QpProblem p;
    p.H = root.transpose() * root + 0.5 * Mat::Identity(v, v);
    p.H = 0.5 * (p.H + p.H.transpose()).eval();
    p.g = rng.normal_vec(v);
    // Contradictory pair along a random direction: a^T y <= -1, -a^T y <= -1.
    Vec a = rng.normal_vec(v);
    a /= a.norm();
    p.G = Mat(2, v);
    p.G.row(0) = a.transpose();
    p.G.row(1) = -a.transpose();
    p.h = Vec::Constant(2, -1.0);
    p.lb = Vec::Constant(v, -5.0);
    p.ub = Vec::Constant(v, 5.0);
    const QpOutcome out = solve(p);
    REQUIRE(out.status == QpStatus::kPrimalInfeasible);
    CHECK(oracles::certificate_ok(p, out.certificate));
  }
}

TEST_CASE("solved outcomes satisfy tight residuals") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const QpProblem p = random_feasible_qp(rng, 8, 12);
    const QpOutcome out = solve(p);
    REQUIRE(out.status == QpStatus::kSolved);
    const Vec viol = (p.G * out.y - p.h).cwiseMax(0.0);
    CHECK((viol.size() == 0 ? 0.0 : viol.maxCoeff()) <= 1e-6);
    CHECK(((p.lb - out.y).cwiseMax(0.0)).maxCoeff() <= 1e-6);
    CHECK(((out.y - p.ub).cwiseMax(0.0)).maxCoeff() <= 1e-6);
  }
}

TEST_CASE("huge slack weight reproduces the unslacked solution") {
  Rng rng(8);
  const QpProblem p = random_feasible_qp(rng, 5, 8);
  if (p.row_count() == 0) return;
  std::vector<int> rows;
  for (int i = 0; i < p.row_count(); ++i) rows.push_back(i);
  const QpProblem slacked = add_slack(p, rows, 1e9);
  const QpOutcome base = solve(p);
  const QpOutcome relaxed = solve(slacked);
  REQUIRE(base.status == QpStatus::kSolved);
  REQUIRE(relaxed.status == QpStatus::kSolved);
  CHECK((relaxed.y.head(p.var_count()) - base.y).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("slacked infeasible pair opens the binding row by 2") {
  const QpProblem p = infeasible_pair();
  const QpProblem slacked = add_slack(p, {1}, 1e6);  // relax -u <= -1
  const QpOutcome out = solve(slacked);
  REQUIRE(out.status == QpStatus::kSolved);
  // Hand KKT solve: u -> -1, s -> 2 as the penalty weight dominates.
  CHECK(out.y[0] == doctest::Approx(-1.0).epsilon(1e-3));
  REQUIRE(out.slack_values.size() == 1);
  CHECK(out.slack_values[0] == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("add_slack with zero rows returns the problem unchanged") {
  Rng rng(9);
  const QpProblem p = random_feasible_qp(rng, 4, 6);
  const QpProblem same = add_slack(p, {}, 10.0);
  CHECK(same.var_count() == p.var_count());
  CHECK((same.H - p.H).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("add_slack rejects duplicates") {
  const QpProblem p = infeasible_pair();
  CHECK_THROWS_AS(add_slack(p, {0, 0}, 1.0), std::invalid_argument);
}

TEST_CASE("warm starting does not move the optimum") {
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const QpProblem p = random_feasible_qp(rng, 6, 8);
    const QpOutcome cold = solve(p);
    REQUIRE(cold.status == QpStatus::kSolved);
    const Vec start = cold.y + rng.normal_vec(p.var_count());
    const QpOutcome warm = solve(p, start);
    REQUIRE(warm.status == QpStatus::kSolved);
    CHECK((warm.y - cold.y).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("indefinite objective is rejected") {
  QpProblem p;
  p.H = Mat(2, 2);
  p.H << 1.0, 0.0, 0.0, -1.0;
  p.g = Vec::Zero(2);
  p.G = Mat::Zero(0, 2);
  p.h = Vec::Zero(0);
  p.lb = Vec::Constant(2, -1.0);
  p.ub = Vec::Constant(2, 1.0);
  CHECK_THROWS_AS(solve(p), std::invalid_argument);
}

TEST_CASE("problem dump round-trips") {
  Rng rng(14);
  const QpProblem p = random_feasible_qp(rng, 5, 7);
  const std::string path = "qp_dump.txt";
  save_problem(p, path);
  const QpProblem back = load_problem(path);
  CHECK((back.H - p.H).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.g - p.g).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.G - p.G).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.h - p.h).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("solver is deterministic") {
  Rng rng(15);
  const QpProblem p = random_feasible_qp(rng, 6, 9);
  const QpOutcome a = solve(p);
  const QpOutcome b = solve(p);
  REQUIRE(a.status == b.status);
  CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.iterations == b.iterations);
}
