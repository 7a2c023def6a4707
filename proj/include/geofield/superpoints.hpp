#pragma once

#include <Eigen/Dense>

#include <vector>

#include "geofield/cloud.hpp"
#include "geofield/config.hpp"
#include "geofield/feature_field.hpp"
#include "geofield/transport.hpp"

namespace geofield {

/// Mean coordinate / geometric-feature distance from each seed to its nearest
/// other seed. Both scale the transport cost.
struct ScaleConstants {
  double d_c = 1.0;
  double d_g = 1.0;
};

/// Seeds plus their current soft assignment. `plan` and `neighbor_lists`
/// always describe the most recent transport solve (the seed positions the
/// plan was computed against).
struct SuperpointState {
  Eigen::MatrixXd seeds_p;  // N̄ x 3
  Eigen::MatrixXd seeds_g;  // N̄ x d
  Eigen::MatrixXd seeds_f;  // N̄ x b, unit rows
  Eigen::VectorXd mu;       // N̄ relevance masses
  std::vector<std::vector<int>> neighbor_lists;  // per seed: k1 point indices
  SparseCoupling plan;
  std::vector<int> seed_indices;  // FPS picks that initialized the seeds
  std::vector<uint8_t> covered;   // per point: appears in some neighborhood
  ScaleConstants scales;

  int count() const { return static_cast<int>(seeds_p.rows()); }
  int covered_count() const;
};

// Seeds from farthest point sampling; seed features copy the sampled rows.
SuperpointState init_seeds(const PointCloud& cloud, const Eigen::MatrixXd& geo,
                           const FeatureField& vlm, int n_super, int fps_start);

// Rebuilds the per-seed k1-nearest-point lists against current seed positions.
void build_neighbor_lists(SuperpointState& state, const KdTree& index, int k1,
                          int threads = 1);

// Seed relevance: mean of (1 + cos(point feature, seed feature)) / 2 over the
// seed's neighborhood. Zero-norm features contribute similarity 0.
void compute_mu(SuperpointState& state, const Eigen::MatrixXd& features);

// Nearest-other-seed distances averaged over seeds, in both spaces. Needs at
// least two seeds.
ScaleConstants scale_constants(const SuperpointState& state);

// Solves the neighborhood-sparse transport problem: cost is the scale-divided
// sum of coordinate and geometric distances, row marginal uniform over covered
// points, column marginal proportional to mu. Marks coverage in the state.
SparseCoupling ot_assign(SuperpointState& state, const PointCloud& cloud,
                         const Eigen::MatrixXd& geo, const ScaleConstants& scales,
                         double eps, int iters);

// Plan-weighted averages over each seed's neighborhood; seedVLM rows are
// re-normalized. Seeds with (near) zero plan mass keep their previous value;
// the return value counts such seeds.
int update_seeds(SuperpointState& state, const PointCloud& cloud,
                 const Eigen::MatrixXd& geo, const Eigen::MatrixXd& features,
                 const SparseCoupling& plan);

// gamma_iters rounds of neighborhoods -> mu -> scales -> transport -> seed
// update. The returned state keeps the last solved plan and the neighborhoods
// it was computed on. gamma_iters = 0 leaves the state untouched.
SuperpointState refine(SuperpointState state, const PointCloud& cloud,
                       const Eigen::MatrixXd& geo, const FeatureField& vlm,
                       const PipelineConfig& config);

}  // namespace geofield
