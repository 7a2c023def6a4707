#include "geofield/fpfh.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "geofield/feature_field.hpp"
#include "geofield/parallel.hpp"

namespace geofield {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegenerate = 1e-12;
constexpr double kWeightFloor = 1e-8;

inline int bin_of(double x, double lo, double hi) {
  int b = static_cast<int>(std::floor((x - lo) / (hi - lo) * kFpfhBins));
  if (b < 0) b = 0;
  if (b >= kFpfhBins) b = kFpfhBins - 1;  // closed upper edge
  return b;
}

// Radius hits truncated to the k nearest (hits come back distance-sorted).
std::vector<int> in_radius_knn(const KdTree& tree, const Eigen::Vector3d& q, int k, double r) {
  std::vector<int> hits = tree.radius_search(q, r);
  if (static_cast<int>(hits.size()) > k) hits.resize(static_cast<size_t>(k));
  return hits;
}

}  // namespace

Eigen::VectorXd compute_spfh(int point, const std::vector<int>& neighbors,
                             const PointCloud& cloud, const Eigen::MatrixXd& normals) {
  if (neighbors.empty()) throw std::invalid_argument("spfh: neighbor list is empty");
  if (point < 0 || point >= cloud.size())
    throw std::invalid_argument("spfh: point index out of range");
  if (normals.rows() != cloud.coords.rows() || normals.cols() != 3)
    throw std::invalid_argument("spfh: normals do not match the cloud");

  const Eigen::Vector3d ps = cloud.coords.row(point).transpose();
  const Eigen::Vector3d ns = normals.row(point).transpose();

  Eigen::VectorXd hist = Eigen::VectorXd::Zero(kFpfhDim);
  int pairs = 0;
  for (int t : neighbors) {
    if (t < 0 || t >= cloud.size())
      throw std::invalid_argument("spfh: neighbor index out of range");
    const Eigen::Vector3d d = cloud.coords.row(t).transpose() - ps;
    const double dn = d.norm();
    if (dn < kDegenerate) continue;  // coincident pair, no frame
    const Eigen::Vector3d dhat = d / dn;

    // The frame must not depend on the sign choices made during normal
    // estimation, or the histogram would change under rigid motion. The source
    // normal is flipped to face along the displacement; the flip is a strict
    // comparison, so exactly perpendicular pairs (coplanar data) keep ns as
    // given, where every angle is zero and the choice cannot matter. The
    // target normal is then flipped against the source normal, whose margin is
    // the angle between neighboring normals - stable on smooth surfaces, where
    // flipping against the displacement would sit on a knife edge.
    Eigen::Vector3d u = ns;
    if (u.dot(dhat) < 0.0) u = -u;
    Eigen::Vector3d nt = normals.row(t).transpose();
    if (nt.dot(u) < 0.0) nt = -nt;

    const Eigen::Vector3d cross = d.cross(u);
    const double cn = cross.norm();
    if (cn < kDegenerate) continue;  // displacement parallel to the normal
    const Eigen::Vector3d v = cross / cn;
    const Eigen::Vector3d w = u.cross(v);

    const double alpha = v.dot(nt);
    const double phi = u.dot(dhat);
    const double theta = std::atan2(w.dot(nt), u.dot(nt));

    hist[bin_of(alpha, -1.0, 1.0)] += 1.0;
    hist[kFpfhBins + bin_of(phi, -1.0, 1.0)] += 1.0;
    hist[2 * kFpfhBins + bin_of(theta, -kPi, kPi)] += 1.0;
    ++pairs;
  }
  if (pairs == 0)
    throw std::runtime_error("spfh: every pair at point " + std::to_string(point) +
                             " is degenerate");
  hist /= 3.0 * pairs;  // total mass 1, one third per angle
  return hist;
}

Eigen::MatrixXd compute_fpfh(const PointCloud& cloud, const FpfhParams& params, int threads) {
  cloud.validate();
  params.validate();
  const int n = cloud.size();
  if (params.m_ref > n)
    throw std::invalid_argument("fpfh: m_ref=" + std::to_string(params.m_ref) +
                                " exceeds the point count " + std::to_string(n));

  const std::vector<int> refs = fps_sample(cloud, params.m_ref, 0);
  const int m = static_cast<int>(refs.size());
  Eigen::MatrixXd ref_pts(m, 3);
  for (int j = 0; j < m; ++j) ref_pts.row(j) = cloud.coords.row(refs[static_cast<size_t>(j)]);
  PointCloud ref_cloud{ref_pts, std::nullopt};
  const KdTree ref_tree(ref_pts);

  auto require = [&](const std::vector<int>& list, int j, double r) {
    if (static_cast<int>(list.size()) < 3)
      throw std::runtime_error("fpfh: reference point " + std::to_string(j) +
                               " has fewer than 3 neighbors within radius " + std::to_string(r));
  };

  Eigen::MatrixXd ref_normals(m, 3);
  parallel_for(0, m, threads, [&](int j) {
    const std::vector<int> list =
        in_radius_knn(ref_tree, ref_pts.row(j).transpose(), params.k3, params.r1);
    require(list, j, params.r1);
    ref_normals.row(j) = normal_from_members(ref_pts, list, j).transpose();
  });

  std::vector<std::vector<int>> hist_nbrs(static_cast<size_t>(m));
  Eigen::MatrixXd spfh(m, kFpfhDim);
  parallel_for(0, m, threads, [&](int j) {
    std::vector<int> list =
        in_radius_knn(ref_tree, ref_pts.row(j).transpose(), params.k4, params.r2);
    require(list, j, params.r2);
    std::erase(list, j);  // pairs need a second point
    spfh.row(j) = compute_spfh(j, list, ref_cloud, ref_normals).transpose();
    hist_nbrs[static_cast<size_t>(j)] = std::move(list);
  });

  // Inverse-distance weighted mix over each reference's own histogram
  // neighborhood, then every original point inherits its nearest reference.
  Eigen::MatrixXd ref_feat(m, kFpfhDim);
  parallel_for(0, m, threads, [&](int j) {
    const auto& nbrs = hist_nbrs[static_cast<size_t>(j)];
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(kFpfhDim);
    for (int k : nbrs) {
      const double w = std::max((ref_pts.row(j) - ref_pts.row(k)).norm(), kWeightFloor);
      acc += spfh.row(k).transpose() / w;
    }
    ref_feat.row(j) =
        spfh.row(j) + acc.transpose() / static_cast<double>(nbrs.size());
  });

  Eigen::MatrixXd out(n, kFpfhDim);
  parallel_for(0, n, threads, [&](int i) {
    const int nearest = ref_tree.knn(cloud.coords.row(i).transpose(), 1, false)[0];
    out.row(i) = ref_feat.row(nearest);
  });
  normalize_rows(out);
  return out;
}

}  // namespace geofield
