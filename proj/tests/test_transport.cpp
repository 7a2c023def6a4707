#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "geofield/transport.hpp"
#include "test_util.hpp"

using namespace geofield;
using namespace testutil;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Marginals random_marginals(int n, int m, std::mt19937& gen) {
  return Marginals(random_matrix(n, 1, gen, 0.1, 1.0).col(0),
                   random_matrix(m, 1, gen, 0.1, 1.0).col(0));
}

double row_residual_of(const Eigen::MatrixXd& gamma, const Marginals& mg) {
  return (gamma.rowwise().sum() - mg.row).cwiseAbs().sum();
}

double col_residual_of(const Eigen::MatrixXd& gamma, const Marginals& mg) {
  return (gamma.colwise().sum().transpose() - mg.col).cwiseAbs().sum();
}

}  // namespace

TEST_SUITE("transport") {

TEST_CASE("marginals normalize to mass one and reject bad input") {
  const Marginals mg(Eigen::Vector2d(2.0, 6.0), Eigen::Vector3d(1.0, 1.0, 2.0));
  CHECK(mg.row.sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(mg.col.sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(mg.row[1] == doctest::Approx(0.75).epsilon(1e-15));

  CHECK_THROWS(Marginals(Eigen::Vector2d(-1.0, 2.0), Eigen::Vector2d(1.0, 1.0)));
  CHECK_THROWS(Marginals(Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 1.0)));
  CHECK_THROWS(Marginals(Eigen::Vector2d(kInf, 1.0), Eigen::Vector2d(1.0, 1.0)));

  const Marginals uni = Marginals::uniform(4, 2);
  CHECK(uni.row[3] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(uni.col[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("one-cell problem yields the full mass") {
  Eigen::MatrixXd cost(1, 1);
  cost << 0.7;
  const CouplingMatrix plan = sinkhorn_plan(cost, Marginals::uniform(1, 1), 0.5, 3);
  CHECK(plan.gamma(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(plan.row_residual < 1e-12);
  CHECK(plan.col_residual < 1e-12);
}

TEST_CASE("symmetric 2x2 problem matches the closed form") {
  // cost [[0,1],[1,0]], eps 1, uniform marginals: the kernel is symmetric and
  // already balanced, so gamma = K / sum(K) with K = [[1,1/e],[1/e,1]].
  Eigen::MatrixXd cost(2, 2);
  cost << 0, 1, 1, 0;
  const CouplingMatrix plan = sinkhorn_plan(cost, Marginals::uniform(2, 2), 1.0, 50);
  const double e = std::exp(1.0);
  const double diag = 0.5 * e / (1.0 + e);
  CHECK(plan.gamma(0, 0) == doctest::Approx(diag).epsilon(1e-10));
  CHECK(plan.gamma(1, 1) == doctest::Approx(diag).epsilon(1e-10));
  CHECK(plan.gamma(0, 1) == doctest::Approx(0.5 - diag).epsilon(1e-10));
  CHECK(plan.gamma(1, 0) == doctest::Approx(0.5 - diag).epsilon(1e-10));
}

TEST_CASE("marginals are met after enough iterations") {
  std::mt19937 gen(42);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd cost = random_matrix(8, 5, gen);
    const Marginals mg = random_marginals(8, 5, gen);
    const CouplingMatrix plan = sinkhorn_plan(cost, mg, 0.2, 300);
    CHECK(plan.row_residual < 1e-8);
    CHECK(plan.col_residual < 1e-8);
    CHECK(row_residual_of(plan.gamma, mg) == doctest::Approx(plan.row_residual).epsilon(1e-12));
    CHECK(col_residual_of(plan.gamma, mg) == doctest::Approx(plan.col_residual).epsilon(1e-12));
    CHECK(plan.gamma.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(plan.gamma.minCoeff() >= 0.0);
  }
}

TEST_CASE("columns end exactly on their marginal") {
  // The loop finishes with a column scaling, so columns are exact regardless
  // of convergence; rows carry the remaining defect.
  std::mt19937 gen(43);
  const Eigen::MatrixXd cost = random_matrix(6, 4, gen);
  const Marginals mg = random_marginals(6, 4, gen);
  const CouplingMatrix plan = sinkhorn_plan(cost, mg, 0.5, 1);
  CHECK(col_residual_of(plan.gamma, mg) < 1e-14);
}

TEST_CASE("infinite costs produce exact zeros off support") {
  std::mt19937 gen(44);
  Eigen::MatrixXd cost = random_matrix(5, 4, gen);
  cost(1, 2) = kInf;
  cost(3, 0) = kInf;
  cost(3, 1) = kInf;
  const CouplingMatrix plan = sinkhorn_plan(cost, Marginals::uniform(5, 4), 0.3, 200);
  CHECK(plan.gamma(1, 2) == 0.0);
  CHECK(plan.gamma(3, 0) == 0.0);
  CHECK(plan.gamma(3, 1) == 0.0);
  CHECK(plan.row_residual < 1e-8);
}

TEST_CASE("mask support is equivalent to infinite costs") {
  std::mt19937 gen(45);
  const Eigen::MatrixXd cost = random_matrix(6, 5, gen);
  MaskMatrix mask = MaskMatrix::Constant(6, 5, true);
  mask(0, 0) = false;
  mask(4, 2) = false;
  mask(5, 4) = false;

  Eigen::MatrixXd inf_cost = cost;
  inf_cost(0, 0) = kInf;
  inf_cost(4, 2) = kInf;
  inf_cost(5, 4) = kInf;

  const Marginals mg = random_marginals(6, 5, gen);
  const CouplingMatrix a = sinkhorn_plan(cost, mg, 0.4, 100, &mask);
  const CouplingMatrix b = sinkhorn_plan(inf_cost, mg, 0.4, 100);
  CHECK((a.gamma - b.gamma).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("empty support rows and columns are rejected") {
  std::mt19937 gen(46);
  Eigen::MatrixXd cost = random_matrix(4, 3, gen);
  cost.row(2).setConstant(kInf);
  CHECK_THROWS_WITH_AS(sinkhorn_plan(cost, Marginals::uniform(4, 3), 0.3, 50),
                       doctest::Contains("row"), std::invalid_argument);

  cost = random_matrix(4, 3, gen);
  cost.col(1).setConstant(kInf);
  CHECK_THROWS_WITH_AS(sinkhorn_plan(cost, Marginals::uniform(4, 3), 0.3, 50),
                       doctest::Contains("column"), std::invalid_argument);
}

TEST_CASE("vanishing eps reports an underflow hint") {
  // After the stabilizing row-max shift, column 1 is ~exp(-400000) in both
  // rows and flushes to zero at eps = 1e-2.
  Eigen::MatrixXd cost(2, 2);
  cost << 0, 4000, 1, 4001;
  CHECK_THROWS_WITH_AS(sinkhorn_plan(cost, Marginals::uniform(2, 2), 1e-2, 10),
                       doctest::Contains("increase eps"), std::invalid_argument);
}

TEST_CASE("non-finite inputs are rejected") {
  Eigen::MatrixXd cost(2, 2);
  cost << 0, 1, std::nan(""), 0;
  CHECK_THROWS(sinkhorn_plan(cost, Marginals::uniform(2, 2), 0.5, 10));
  cost << 0, 1, -kInf, 0;
  CHECK_THROWS(sinkhorn_plan(cost, Marginals::uniform(2, 2), 0.5, 10));
  cost << 0, 1, 1, 0;
  CHECK_THROWS(sinkhorn_plan(cost, Marginals::uniform(2, 2), 0.0, 10));
  CHECK_THROWS(sinkhorn_plan(cost, Marginals::uniform(2, 2), 0.5, -1));
}

TEST_CASE("sparse solver equals the dense solver on the same support") {
  std::mt19937 gen(47);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 12, m = 6;
    const Eigen::MatrixXd cost = random_matrix(n, m, gen);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    std::vector<std::vector<int>> members(m);
    std::vector<std::vector<double>> costs(m);
    Eigen::MatrixXd dense_cost = Eigen::MatrixXd::Constant(n, m, kInf);
    for (int i = 0; i < n; ++i) {
      // every row covered: one guaranteed column plus random extras
      const int forced = i % m;
      for (int j = 0; j < m; ++j) {
        if (j != forced && uni(gen) < 0.5) continue;
        members[static_cast<size_t>(j)].push_back(i);
        costs[static_cast<size_t>(j)].push_back(cost(i, j));
        dense_cost(i, j) = cost(i, j);
      }
    }

    const Marginals mg = random_marginals(n, m, gen);
    const SparseCoupling sparse = sinkhorn_plan_sparse(n, members, costs, mg, 0.3, 150);
    const CouplingMatrix dense = sinkhorn_plan(dense_cost, mg, 0.3, 150);
    CHECK((sparse.dense() - dense.gamma).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(sparse.row_residual == doctest::Approx(dense.row_residual).epsilon(1e-9));
  }
}

TEST_CASE("sparse solver demands full row coverage") {
  std::vector<std::vector<int>> members{{0, 1}};  // row 2 missing
  std::vector<std::vector<double>> costs{{0.1, 0.2}};
  CHECK_THROWS_WITH_AS(sinkhorn_plan_sparse(3, members, costs, Marginals::uniform(3, 1), 0.5, 10),
                       doctest::Contains("covered"), std::invalid_argument);
}

TEST_CASE("sh_normalize with zero iterations is a plain exponential") {
  std::mt19937 gen(48);
  const Eigen::MatrixXd sim = random_matrix(4, 6, gen, -2.0, 2.0);
  const Eigen::MatrixXd out = sh_normalize(sim, 0);
  CHECK((out - sim.array().exp().matrix()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sh_normalize ends on an exact column step") {
  std::mt19937 gen(49);
  const Eigen::MatrixXd sim = random_matrix(5, 5, gen, -1.0, 3.0);
  for (int iters : {1, 2, 5}) {
    const Eigen::MatrixXd out = sh_normalize(sim, iters);
    CHECK((out.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(out.minCoeff() > 0.0);
  }
  // row sums drift toward 1 as the rounds accumulate
  const Eigen::MatrixXd late = sh_normalize(sim, 25);
  CHECK((late.rowwise().sum().array() - 1.0).abs().maxCoeff() < 0.05);
}

TEST_CASE("sh_normalize is invariant to a constant similarity shift") {
  // exp(sim + c) scales rows and columns uniformly; the alternating
  // normalization cancels any such scaling after the first round.
  std::mt19937 gen(50);
  const Eigen::MatrixXd sim = random_matrix(4, 4, gen);
  const Eigen::MatrixXd shifted = sim.array() + 7.0;
  CHECK((sh_normalize(sim, 3) - sh_normalize(shifted, 3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("softmax rows sum to one and honor the max trick") {
  Eigen::MatrixXd logits(2, 3);
  logits << 0.0, 1.0, 2.0, 1e4, 1e4, 1e4;
  const Eigen::MatrixXd out = softmax_rows(logits);
  const double z = 1.0 + std::exp(1.0) + std::exp(2.0);
  CHECK(out(0, 0) == doctest::Approx(1.0 / z).epsilon(1e-12));
  CHECK(out(0, 2) == doctest::Approx(std::exp(2.0) / z).epsilon(1e-12));
  CHECK(out.row(1).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out(1, 0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(out.allFinite());
}

}  // TEST_SUITE
