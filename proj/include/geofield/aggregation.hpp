#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "geofield/anchors.hpp"
#include "geofield/cloud.hpp"
#include "geofield/config.hpp"
#include "geofield/feature_field.hpp"
#include "geofield/superpoints.hpp"

namespace geofield {

/// Accumulates the worst row-sum deviation across every mixing matrix built
/// during a run. Stages accept a null pointer when nobody is watching.
struct MixingDiag {
  double max_row_sum_dev = 0.0;
  void note(const Eigen::MatrixXd& w);
};

/// Run summary; serialized as JSON by the CLI.
struct PipelineReport {
  int n_points = 0;
  int n_super = 0;
  int anchor_count = 0;
  int covered = 0;
  int uncovered = 0;
  double plan_row_residual = 0.0;
  double plan_col_residual = 0.0;
  int meanshift_iterations = 0;
  double meanshift_final_shift = 0.0;
  double bandwidth_visual = 0.0;
  double bandwidth_geometric = 0.0;
  double d_c = 0.0;
  double d_g = 0.0;
  double mixing_row_sum_max_dev = 0.0;
  double output_min_row_norm = 0.0;
  double output_max_row_norm = 0.0;
  std::vector<std::pair<std::string, double>> timings_ms;
};

struct PipelineResult {
  FeatureField features;
  SuperpointState state;
  AnchorSet anchors;
  PipelineReport report;
};

// Patch-wise attention smoothing: for every seed, the k2 nearest points form a
// patch whose features are mixed by softmax(SH(G G^T / sqrt(d)) ⊙
// SH(F F^T / sqrt(b))) and averaged half-and-half with the input. Points in
// several patches get the mean of their patch results; untouched points pass
// through unchanged. Output rows re-normalized.
FeatureField local_aggregate(const SuperpointState& state, const PointCloud& cloud,
                             const KdTree& index, const Eigen::MatrixXd& geo,
                             const FeatureField& features, int k2, int sh_iters,
                             int threads = 1, MixingDiag* diag = nullptr);

// Plan-weighted pooling of refined point features onto the seeds. Zero-mass
// seeds keep their previous feature row. Rows re-normalized.
Eigen::MatrixXd pool_to_superpoints(const SuperpointState& state, const FeatureField& refined);

// Seed-level smoothing with a locality mask: entries of the blended similarity
// product are zeroed where seeds sit >= d_c apart, then row-softmaxed. Note the
// mask zeroes the logit rather than removing it, so masked seeds still carry
// exp(0) weight; the trace tests pin that behavior.
Eigen::MatrixXd global_aggregate(const Eigen::MatrixXd& seeds_f, const Eigen::MatrixXd& seeds_g,
                                 const Eigen::MatrixXd& seeds_p, double d_c, int sh_iters,
                                 MixingDiag* diag = nullptr);

// Broadcast seed features back to points: coordinate kernel tanh(d_c - dist)
// (or a row softmax of d_c - dist when kernel = Softmax) crossed with visual
// similarity, then the usual SH ⊙ SH -> softmax mix. Valid rows blend
// half-and-half with the input; invalid rows take the seed mix directly.
FeatureField superpoint_to_point(const PointCloud& cloud, const FeatureField& features,
                                 const Eigen::MatrixXd& seeds_p, const Eigen::MatrixXd& seeds_f,
                                 double d_c, int sh_iters,
                                 CoordKernel kernel = CoordKernel::Tanh,
                                 MixingDiag* diag = nullptr);

// Snaps every point to its best anchor (argmax of the product of visual and
// geometric dot products) and blends: out = normalize((1-blend) f + blend c_v).
FeatureField anchor_project(const FeatureField& features, const Eigen::MatrixXd& geo,
                            const AnchorSet& anchors, double blend);

// The anchor stage on its own: superpoint refinement, bandwidth estimation,
// mean shift seeded at the superpoints, then NMS.
AnchorSet compute_anchors(const PointCloud& cloud, const FeatureField& vlm,
                          const Eigen::MatrixXd& geo, const PipelineConfig& config);

// Full refinement: superpoints -> anchors (unless supplied) -> agg_passes x
// [local -> pool -> global] -> superpoint-to-point -> anchor projection.
PipelineResult run_pipeline(const PointCloud& cloud, const FeatureField& vlm,
                            const Eigen::MatrixXd& geo, const PipelineConfig& config,
                            const AnchorSet* external_anchors = nullptr);

}  // namespace geofield
