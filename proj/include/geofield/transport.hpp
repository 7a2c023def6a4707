#pragma once

#include <Eigen/Dense>

#include <vector>

namespace geofield {

using MaskMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Target row/column sums for a transport plan. Both vectors are renormalized
/// to total mass 1 at construction; entries must be finite and >= 0.
struct Marginals {
  Eigen::VectorXd row;  // length n
  Eigen::VectorXd col;  // length m

  Marginals(Eigen::VectorXd row_masses, Eigen::VectorXd col_masses);
  static Marginals uniform(int n, int m);
};

/// Dense coupling plus the achieved L1 marginal residuals.
struct CouplingMatrix {
  Eigen::MatrixXd gamma;  // n x m, zero off support
  double row_residual = 0.0;
  double col_residual = 0.0;
};

/// Column-compressed coupling for neighborhood-sparse problems. Column j holds
/// the participating row indices and matching plan values.
struct SparseCoupling {
  int rows = 0;
  int cols = 0;
  std::vector<std::vector<int>> members;     // per column: row indices
  std::vector<std::vector<double>> values;   // per column: gamma entries
  double row_residual = 0.0;
  double col_residual = 0.0;

  bool empty() const { return cols == 0; }
  Eigen::MatrixXd dense() const;
};

// Entropic OT via alternating diagonal scaling of K = exp(-cost/eps), rows
// first, columns last. Exponentials are stabilized by per-row max subtraction
// (absorbed by the row scaling, so the plan is unchanged). Off-support entries
// (mask false, or +inf cost) stay exactly zero. Throws when a row or column of
// the support is empty, or when a column of K underflows to zero.
CouplingMatrix sinkhorn_plan(const Eigen::MatrixXd& cost, const Marginals& marginals,
                             double eps, int iters, const MaskMatrix* support = nullptr);

// Same update rule on an explicit column-compressed support. `members[j]`
// lists the row indices of column j and `costs[j]` the matching finite costs.
// Every row in [0, n_rows) must be covered by at least one column.
SparseCoupling sinkhorn_plan_sparse(int n_rows, const std::vector<std::vector<int>>& members,
                                    const std::vector<std::vector<double>>& costs,
                                    const Marginals& marginals, double eps, int iters);

// Alternating row/column normalization of exp(sim), `iters` rounds, each round
// ending on the column step. iters = 0 returns exp(sim) unchanged.
Eigen::MatrixXd sh_normalize(const Eigen::MatrixXd& sim, int iters);

// Row-wise softmax with max subtraction. Every output row sums to 1.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

}  // namespace geofield
