#include "geofield/superpoints.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "geofield/parallel.hpp"

namespace geofield {

namespace {

constexpr double kMassFloor = 1e-300;
constexpr double kScaleFloor = 1e-12;

}  // namespace

int SuperpointState::covered_count() const {
  int c = 0;
  for (uint8_t f : covered) c += f;
  return c;
}

SuperpointState init_seeds(const PointCloud& cloud, const Eigen::MatrixXd& geo,
                           const FeatureField& vlm, int n_super, int fps_start) {
  cloud.validate();
  if (geo.rows() != cloud.coords.rows())
    throw std::invalid_argument("init_seeds: geometric feature count does not match the cloud");
  if (vlm.rows() != cloud.size())
    throw std::invalid_argument("init_seeds: feature field size does not match the cloud");

  SuperpointState state;
  state.seed_indices = fps_sample(cloud, n_super, fps_start);
  state.seeds_p.resize(n_super, 3);
  state.seeds_g.resize(n_super, geo.cols());
  state.seeds_f.resize(n_super, vlm.dim());
  for (int j = 0; j < n_super; ++j) {
    const int i = state.seed_indices[static_cast<size_t>(j)];
    state.seeds_p.row(j) = cloud.coords.row(i);
    state.seeds_g.row(j) = geo.row(i);
    state.seeds_f.row(j) = vlm.values.row(i);
  }
  state.mu = Eigen::VectorXd::Zero(n_super);
  state.covered.assign(static_cast<size_t>(cloud.size()), 0);
  return state;
}

void build_neighbor_lists(SuperpointState& state, const KdTree& index, int k1, int threads) {
  if (k1 < 1 || k1 > index.size())
    throw std::invalid_argument("neighbor lists: k1=" + std::to_string(k1) +
                                " out of range for N=" + std::to_string(index.size()));
  const int m = state.count();
  state.neighbor_lists.assign(static_cast<size_t>(m), {});
  parallel_for(0, m, threads, [&](int j) {
    state.neighbor_lists[static_cast<size_t>(j)] =
        index.knn(state.seeds_p.row(j).transpose(), k1, false);
  });
}

void compute_mu(SuperpointState& state, const Eigen::MatrixXd& features) {
  const int m = state.count();
  if (static_cast<int>(state.neighbor_lists.size()) != m)
    throw std::logic_error("compute_mu: neighbor lists were not built");
  state.mu.resize(m);
  for (int j = 0; j < m; ++j) {
    const auto& nbrs = state.neighbor_lists[static_cast<size_t>(j)];
    if (nbrs.empty()) throw std::logic_error("compute_mu: empty neighborhood");
    const Eigen::VectorXd fj = state.seeds_f.row(j).transpose();
    double acc = 0.0;
    for (int i : nbrs) acc += 1.0 + safe_cos(features.row(i).transpose(), fj);
    state.mu[j] = acc / (2.0 * static_cast<double>(nbrs.size()));
  }
}

ScaleConstants scale_constants(const SuperpointState& state) {
  const int m = state.count();
  if (m < 2) throw std::invalid_argument("scale_constants: need at least two seeds");

  Eigen::VectorXd near_c(m), near_g(m);
  for (int j = 0; j < m; ++j) {
    double bc = std::numeric_limits<double>::infinity();
    double bg = bc;
    for (int k = 0; k < m; ++k) {
      if (k == j) continue;
      bc = std::min(bc, (state.seeds_p.row(j) - state.seeds_p.row(k)).norm());
      bg = std::min(bg, (state.seeds_g.row(j) - state.seeds_g.row(k)).norm());
    }
    near_c[j] = bc;
    near_g[j] = bg;
  }
  return {near_c.mean(), near_g.mean()};
}

SparseCoupling ot_assign(SuperpointState& state, const PointCloud& cloud,
                         const Eigen::MatrixXd& geo, const ScaleConstants& scales,
                         double eps, int iters) {
  const int n = cloud.size();
  const int m = state.count();
  if (static_cast<int>(state.neighbor_lists.size()) != m)
    throw std::logic_error("ot_assign: neighbor lists were not built");
  if (state.mu.size() != m) throw std::logic_error("ot_assign: mu was not computed");
  if (!(state.mu.sum() > 0.0))
    throw std::runtime_error("ot_assign: all superpoint masses are zero");

  // A vanished scale (all seeds identical in that space) drops its term so the
  // remaining space still drives the assignment.
  const double wc = scales.d_c > kScaleFloor ? 1.0 / std::sqrt(scales.d_c) : 0.0;
  const double wg = scales.d_g > kScaleFloor ? 1.0 / std::sqrt(scales.d_g) : 0.0;

  state.covered.assign(static_cast<size_t>(n), 0);
  std::vector<std::vector<double>> costs(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j) {
    const auto& nbrs = state.neighbor_lists[static_cast<size_t>(j)];
    auto& cj = costs[static_cast<size_t>(j)];
    cj.resize(nbrs.size());
    for (size_t e = 0; e < nbrs.size(); ++e) {
      const int i = nbrs[e];
      state.covered[static_cast<size_t>(i)] = 1;
      cj[e] = wc * (cloud.coords.row(i) - state.seeds_p.row(j)).norm() +
              wg * (geo.row(i) - state.seeds_g.row(j)).norm();
    }
  }

  // Points outside every neighborhood are excluded from the solve; the row
  // marginal is uniform over the covered points only.
  const int n_cov = state.covered_count();
  std::vector<int> compact(static_cast<size_t>(n), -1);
  int next = 0;
  for (int i = 0; i < n; ++i)
    if (state.covered[static_cast<size_t>(i)]) compact[static_cast<size_t>(i)] = next++;

  std::vector<std::vector<int>> members(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j) {
    const auto& nbrs = state.neighbor_lists[static_cast<size_t>(j)];
    auto& mj = members[static_cast<size_t>(j)];
    mj.resize(nbrs.size());
    for (size_t e = 0; e < nbrs.size(); ++e) mj[e] = compact[static_cast<size_t>(nbrs[e])];
  }

  const Marginals marg(Eigen::VectorXd::Constant(n_cov, 1.0 / n_cov), state.mu);
  SparseCoupling plan = sinkhorn_plan_sparse(n_cov, members, costs, marg, eps, iters);

  // Back to original point indices.
  plan.rows = n;
  plan.members = state.neighbor_lists;
  return plan;
}

int update_seeds(SuperpointState& state, const PointCloud& cloud, const Eigen::MatrixXd& geo,
                 const Eigen::MatrixXd& features, const SparseCoupling& plan) {
  const int m = state.count();
  if (plan.cols != m) throw std::invalid_argument("update_seeds: plan column count mismatch");

  int stuck = 0;
  for (int j = 0; j < m; ++j) {
    const auto& idx = plan.members[static_cast<size_t>(j)];
    const auto& val = plan.values[static_cast<size_t>(j)];
    double mass = 0.0;
    for (double g : val) mass += g;
    if (mass <= kMassFloor) {
      ++stuck;  // keep the seed where it is
      continue;
    }
    Eigen::RowVector3d p = Eigen::RowVector3d::Zero();
    Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(geo.cols());
    Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(features.cols());
    for (size_t e = 0; e < idx.size(); ++e) {
      p += val[e] * cloud.coords.row(idx[e]);
      g += val[e] * geo.row(idx[e]);
      f += val[e] * features.row(idx[e]);
    }
    state.seeds_p.row(j) = p / mass;
    state.seeds_g.row(j) = g / mass;
    f /= mass;
    const double fn = f.norm();
    if (fn >= kNormFloor) state.seeds_f.row(j) = f / fn;
  }
  return stuck;
}

SuperpointState refine(SuperpointState state, const PointCloud& cloud,
                       const Eigen::MatrixXd& geo, const FeatureField& vlm,
                       const PipelineConfig& config) {
  config.validate();
  if (config.gamma_iters == 0) return state;

  const KdTree index(cloud.coords);
  for (int t = 0; t < config.gamma_iters; ++t) {
    build_neighbor_lists(state, index, config.k1, config.threads);
    compute_mu(state, vlm.values);
    if (config.recompute_scales || t == 0)
      state.scales = state.count() >= 2 ? scale_constants(state) : ScaleConstants{1.0, 1.0};
    state.plan = ot_assign(state, cloud, geo, state.scales, config.ot_eps, config.ot_iters);
    update_seeds(state, cloud, geo, vlm.values, state.plan);
  }
  return state;
}

}  // namespace geofield
