#pragma once

#include <Eigen/Dense>

#include <vector>

#include "geofield/cloud.hpp"
#include "geofield/config.hpp"

namespace geofield {

constexpr int kFpfhBins = 11;
constexpr int kFpfhDim = 3 * kFpfhBins;

// Simplified point feature histogram of one point against its neighbors:
// three Darboux angles per pair, 11 uniform bins each over [-1,1], [-1,1] and
// [-pi,pi], concatenated and normalized to total mass 1 (1/3 per angle).
// Pairs with coincident points or an undefined frame are skipped; if every
// pair is skipped the histogram is undefined and an exception is thrown.
Eigen::VectorXd compute_spfh(int point, const std::vector<int>& neighbors,
                             const PointCloud& cloud, const Eigen::MatrixXd& normals);

// Per-point 33-bin descriptor via the reference subsampling scheme: m_ref
// farthest-point references, reference normals from up to k3 in-radius(r1)
// reference neighbors, reference histograms from up to k4 in-radius(r2)
// reference neighbors, inverse-distance weighted sum, then every original
// point inherits its nearest reference row. Rows are L2-normalized. Throws
// when any reference has fewer than 3 in-radius neighbors.
Eigen::MatrixXd compute_fpfh(const PointCloud& cloud, const FpfhParams& params,
                             int threads = 1);

}  // namespace geofield
