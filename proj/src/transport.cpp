#include "geofield/transport.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace geofield {

namespace {

constexpr double kMassFloor = 1e-300;

void check_marginal(const Eigen::VectorXd& v, const char* name) {
  if (v.size() < 1) throw std::invalid_argument(std::string(name) + " marginal is empty");
  if (!v.allFinite())
    throw std::invalid_argument(std::string(name) + " marginal has non-finite entries");
  if ((v.array() < 0.0).any())
    throw std::invalid_argument(std::string(name) + " marginal has negative entries");
  if (v.sum() <= 0.0)
    throw std::invalid_argument(std::string(name) + " marginal has zero total mass");
}

inline double safe_ratio(double num, double den, const char* what) {
  if (den > kMassFloor) return num / den;
  if (num <= kMassFloor) return 0.0;
  throw std::runtime_error(std::string("sinkhorn: ") + what +
                           " lost all mass; increase eps or widen the support");
}

}  // namespace

Marginals::Marginals(Eigen::VectorXd row_masses, Eigen::VectorXd col_masses)
    : row(std::move(row_masses)), col(std::move(col_masses)) {
  check_marginal(row, "row");
  check_marginal(col, "column");
  row /= row.sum();
  col /= col.sum();
}

Marginals Marginals::uniform(int n, int m) {
  if (n < 1 || m < 1) throw std::invalid_argument("uniform marginals need n, m >= 1");
  return Marginals(Eigen::VectorXd::Constant(n, 1.0 / n), Eigen::VectorXd::Constant(m, 1.0 / m));
}

Eigen::MatrixXd SparseCoupling::dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
  for (int j = 0; j < cols; ++j) {
    const auto& idx = members[static_cast<size_t>(j)];
    const auto& val = values[static_cast<size_t>(j)];
    for (size_t e = 0; e < idx.size(); ++e) out(idx[e], j) += val[e];
  }
  return out;
}

CouplingMatrix sinkhorn_plan(const Eigen::MatrixXd& cost, const Marginals& marginals,
                             double eps, int iters, const MaskMatrix* support) {
  const Eigen::Index n = cost.rows(), m = cost.cols();
  if (n < 1 || m < 1) throw std::invalid_argument("sinkhorn: empty cost matrix");
  if (marginals.row.size() != n || marginals.col.size() != m)
    throw std::invalid_argument("sinkhorn: marginal sizes do not match the cost matrix");
  if (!(eps > 0.0)) throw std::invalid_argument("sinkhorn: eps must be > 0");
  if (iters < 0) throw std::invalid_argument("sinkhorn: iters must be >= 0");
  if (support && (support->rows() != n || support->cols() != m))
    throw std::invalid_argument("sinkhorn: support mask shape mismatch");

  // Supported entries are those the mask keeps and whose cost is finite; +inf
  // costs act exactly like masked-out entries. NaN is rejected outright.
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd logk(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      const double c = cost(i, j);
      if (std::isnan(c)) throw std::invalid_argument("sinkhorn: NaN cost entry");
      const bool on = (!support || (*support)(i, j)) && c != inf;
      if (on && c == -inf) throw std::invalid_argument("sinkhorn: -inf cost entry");
      logk(i, j) = on ? -c / eps : -inf;
    }

  for (Eigen::Index i = 0; i < n; ++i) {
    const double row_max = logk.row(i).maxCoeff();
    if (row_max == -inf)
      throw std::invalid_argument("sinkhorn: empty support row " + std::to_string(i));
    logk.row(i).array() -= row_max;  // absorbed by the row scaling u
  }

  // std::exp, not Eigen's packet exp: the vectorized path clamps its argument
  // and hands back a subnormal for -inf, which would leak mass onto entries
  // the support excludes. Anything below the normal range flushes to an exact
  // zero so off-support entries stay zero and underflow is caught here.
  Eigen::MatrixXd kernel(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      const double e = std::exp(logk(i, j));
      kernel(i, j) = e < std::numeric_limits<double>::min() ? 0.0 : e;
    }
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!(kernel.col(j).sum() > 0.0))
      throw std::invalid_argument(kernel.col(j).maxCoeff() == 0.0 && logk.col(j).maxCoeff() == -inf
                                      ? "sinkhorn: empty support column " + std::to_string(j)
                                      : "sinkhorn: column " + std::to_string(j) +
                                            " underflowed to zero; increase eps");
  }

  Eigen::VectorXd u = Eigen::VectorXd::Ones(n), v = Eigen::VectorXd::Ones(m);
  for (int t = 0; t < iters; ++t) {
    const Eigen::VectorXd kv = kernel * v;
    for (Eigen::Index i = 0; i < n; ++i) u[i] = safe_ratio(marginals.row[i], kv[i], "a row");
    const Eigen::VectorXd ku = kernel.transpose() * u;
    for (Eigen::Index j = 0; j < m; ++j) v[j] = safe_ratio(marginals.col[j], ku[j], "a column");
  }

  CouplingMatrix out;
  out.gamma = u.asDiagonal() * kernel * v.asDiagonal();
  out.row_residual = (out.gamma.rowwise().sum() - marginals.row).lpNorm<1>();
  out.col_residual = (out.gamma.colwise().sum().transpose() - marginals.col).lpNorm<1>();
  return out;
}

SparseCoupling sinkhorn_plan_sparse(int n_rows, const std::vector<std::vector<int>>& members,
                                    const std::vector<std::vector<double>>& costs,
                                    const Marginals& marginals, double eps, int iters) {
  const int m = static_cast<int>(members.size());
  if (n_rows < 1 || m < 1) throw std::invalid_argument("sinkhorn: empty problem");
  if (costs.size() != members.size())
    throw std::invalid_argument("sinkhorn: cost/member column count mismatch");
  if (marginals.row.size() != n_rows || marginals.col.size() != m)
    throw std::invalid_argument("sinkhorn: marginal sizes do not match the support");
  if (!(eps > 0.0)) throw std::invalid_argument("sinkhorn: eps must be > 0");
  if (iters < 0) throw std::invalid_argument("sinkhorn: iters must be >= 0");

  std::vector<double> row_max(static_cast<size_t>(n_rows),
                              -std::numeric_limits<double>::infinity());
  for (int j = 0; j < m; ++j) {
    const auto& idx = members[static_cast<size_t>(j)];
    const auto& val = costs[static_cast<size_t>(j)];
    if (idx.empty())
      throw std::invalid_argument("sinkhorn: empty support column " + std::to_string(j));
    if (idx.size() != val.size())
      throw std::invalid_argument("sinkhorn: ragged cost column " + std::to_string(j));
    for (size_t e = 0; e < idx.size(); ++e) {
      const int i = idx[e];
      if (i < 0 || i >= n_rows)
        throw std::invalid_argument("sinkhorn: row index out of range in column " +
                                    std::to_string(j));
      if (!std::isfinite(val[e]))
        throw std::invalid_argument("sinkhorn: non-finite cost in column " + std::to_string(j));
      row_max[static_cast<size_t>(i)] = std::max(row_max[static_cast<size_t>(i)], -val[e] / eps);
    }
  }
  for (int i = 0; i < n_rows; ++i)
    if (row_max[static_cast<size_t>(i)] == -std::numeric_limits<double>::infinity())
      throw std::invalid_argument("sinkhorn: row " + std::to_string(i) +
                                  " is covered by no column");

  SparseCoupling plan;
  plan.rows = n_rows;
  plan.cols = m;
  plan.members = members;
  plan.values.resize(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j) {
    const auto& idx = members[static_cast<size_t>(j)];
    auto& ker = plan.values[static_cast<size_t>(j)];
    ker.resize(idx.size());
    double col_sum = 0.0;
    for (size_t e = 0; e < idx.size(); ++e) {
      const double k = std::exp(-costs[static_cast<size_t>(j)][e] / eps -
                                row_max[static_cast<size_t>(idx[e])]);
      ker[e] = k < std::numeric_limits<double>::min() ? 0.0 : k;  // match the dense flush
      col_sum += ker[e];
    }
    if (!(col_sum > 0.0))
      throw std::invalid_argument("sinkhorn: column " + std::to_string(j) +
                                  " underflowed to zero; increase eps");
  }

  Eigen::VectorXd u = Eigen::VectorXd::Ones(n_rows), v = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd kv(n_rows), ku(m);
  for (int t = 0; t < iters; ++t) {
    kv.setZero();
    for (int j = 0; j < m; ++j) {
      const auto& idx = plan.members[static_cast<size_t>(j)];
      const auto& ker = plan.values[static_cast<size_t>(j)];
      for (size_t e = 0; e < idx.size(); ++e) kv[idx[e]] += ker[e] * v[j];
    }
    for (int i = 0; i < n_rows; ++i) u[i] = safe_ratio(marginals.row[i], kv[i], "a row");
    for (int j = 0; j < m; ++j) {
      const auto& idx = plan.members[static_cast<size_t>(j)];
      const auto& ker = plan.values[static_cast<size_t>(j)];
      double s = 0.0;
      for (size_t e = 0; e < idx.size(); ++e) s += ker[e] * u[idx[e]];
      ku[j] = s;
    }
    for (int j = 0; j < m; ++j) v[j] = safe_ratio(marginals.col[j], ku[j], "a column");
  }

  Eigen::VectorXd row_sum = Eigen::VectorXd::Zero(n_rows);
  Eigen::VectorXd col_sum = Eigen::VectorXd::Zero(m);
  for (int j = 0; j < m; ++j) {
    const auto& idx = plan.members[static_cast<size_t>(j)];
    auto& val = plan.values[static_cast<size_t>(j)];
    for (size_t e = 0; e < idx.size(); ++e) {
      val[e] *= u[idx[e]] * v[j];
      row_sum[idx[e]] += val[e];
      col_sum[j] += val[e];
    }
  }
  plan.row_residual = (row_sum - marginals.row).lpNorm<1>();
  plan.col_residual = (col_sum - marginals.col).lpNorm<1>();
  return plan;
}

Eigen::MatrixXd sh_normalize(const Eigen::MatrixXd& sim, int iters) {
  if (sim.rows() < 1 || sim.cols() < 1) throw std::invalid_argument("sh_normalize: empty input");
  if (!sim.allFinite()) throw std::invalid_argument("sh_normalize: non-finite similarity");
  if (iters < 0) throw std::invalid_argument("sh_normalize: iters must be >= 0");
  if (iters == 0) return sim.array().exp();

  // The per-row shift cancels exactly in the first row normalization, so it
  // only buys overflow headroom.
  Eigen::MatrixXd k =
      (sim.colwise() - sim.rowwise().maxCoeff()).array().exp().matrix();
  for (int t = 0; t < iters; ++t) {
    k.array().colwise() /= k.rowwise().sum().array();  // rows hold an exp(0)=1, never zero
    const Eigen::RowVectorXd cs = k.colwise().sum();
    if (!(cs.minCoeff() > 0.0))
      throw std::runtime_error("sh_normalize: a column underflowed to zero");
    k.array().rowwise() /= cs.array();
  }
  return k;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  if (logits.rows() < 1 || logits.cols() < 1)
    throw std::invalid_argument("softmax_rows: empty input");
  if (!logits.allFinite()) throw std::invalid_argument("softmax_rows: non-finite input");
  Eigen::MatrixXd out =
      (logits.colwise() - logits.rowwise().maxCoeff()).array().exp().matrix();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

}  // namespace geofield
