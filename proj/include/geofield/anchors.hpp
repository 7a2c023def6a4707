#pragma once

#include <Eigen/Dense>

#include <vector>

namespace geofield {

/// Kernel widths for the visual and geometric similarity spaces.
struct Bandwidths {
  double visual = 1.0;
  double geometric = 1.0;
};

/// Paired visual/geometric anchor rows with their mode densities.
struct AnchorSet {
  Eigen::MatrixXd visual;     // L x b, unit rows
  Eigen::MatrixXd geometric;  // L x d, unit rows
  Eigen::VectorXd density;    // length L, nonnegative

  int count() const { return static_cast<int>(visual.rows()); }
};

struct MeanShiftResult {
  Eigen::MatrixXd visual;
  Eigen::MatrixXd geometric;
  Eigen::VectorXd density;  // kernel mass per centroid at the final iteration
  int iterations = 0;       // update rounds actually run
  double final_shift = 0.0; // largest centroid movement in the last round
};

// Mean cosine similarity of each row to its `neighbor_rank`-th most similar
// other row, clamped to [1e-4, 1]. Requires more rows than the rank.
double estimate_bandwidth(const Eigen::MatrixXd& rows, int neighbor_rank = 16);

// Joint-kernel mean shift over unit feature rows: each centroid moves to the
// kernel-weighted mean of the points, weight exp(cos_v/dv^2) * exp(cos_g/dg^2),
// then re-normalizes, in both spaces at once. Stops after `iters` rounds or
// when the largest movement drops below 1e-6. iters = 0 keeps the initializers
// and only evaluates densities.
MeanShiftResult meanshift(const Eigen::MatrixXd& points_v, const Eigen::MatrixXd& points_g,
                          const Eigen::MatrixXd& init_v, const Eigen::MatrixXd& init_g,
                          const Bandwidths& bw, int iters = 40, int threads = 1);

// Greedy density-descending non-maximum suppression. A candidate is dropped
// when its similarity to an already kept anchor exceeds bandwidth/2 in both
// spaces (or either space when both_spaces = false). Density ties keep the
// smaller index. Rows come back in selection order.
AnchorSet nms_centroids(const Eigen::MatrixXd& centroids_v, const Eigen::MatrixXd& centroids_g,
                        const Eigen::VectorXd& density, const Bandwidths& bw,
                        bool both_spaces = true);

// Hard assignment: argmax over anchors of the product of visual and geometric
// dot products; ties take the lowest anchor index.
std::vector<int> assign_points(const AnchorSet& anchors, const Eigen::MatrixXd& features_v,
                               const Eigen::MatrixXd& features_g);

// Concatenates several anchor sets and de-duplicates them with one more NMS
// pass, bandwidths re-estimated over the merged anchor rows.
AnchorSet build_anchor_bank(const std::vector<AnchorSet>& sets, bool both_spaces = true,
                            int neighbor_rank = 16);

}  // namespace geofield
