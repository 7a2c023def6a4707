#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace geofield {

/// N x 3 point set with optional per-point integer labels.
struct PointCloud {
  Eigen::MatrixXd coords;                 // N x 3
  std::optional<Eigen::VectorXi> labels;  // length N when present

  int size() const { return static_cast<int>(coords.rows()); }
  void validate() const;
};

// Exact nearest-neighbor / radius index over a fixed point set. Query results
// always equal a brute-force scan, including the tie rule: equal distances are
// ordered by ascending point index. Approximate shortcuts are deliberately
// absent; downstream assignments must be reproducible bit for bit.
class KdTree {
 public:
  explicit KdTree(const Eigen::MatrixXd& points);  // N x 3, N >= 1

  int size() const { return static_cast<int>(pts_.rows()); }

  // k nearest points to `query`, nearest first. With exclude_self, points at
  // exactly the query location are skipped. Throws if fewer than k candidates
  // remain.
  std::vector<int> knn(const Eigen::Vector3d& query, int k, bool exclude_self = false) const;

  // All points with distance <= radius, nearest first. radius must be > 0.
  std::vector<int> radius_search(const Eigen::Vector3d& query, double radius) const;

 private:
  struct Node {
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    int begin = 0, end = 0;  // leaf range into order_
    int left = -1, right = -1;
  };

  int build(int begin, int end);

  template <typename Visitor>
  void scan_leaf(const Node& node, const Eigen::Vector3d& q, Visitor&& visit) const;

  Eigen::MatrixXd pts_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;

  static constexpr int kLeafSize = 16;
};

// Farthest point sampling: greedily picks the point maximizing the minimum
// distance to everything selected so far, starting from `start`. Distance ties
// resolve to the smallest point index. Returns `count` indices in pick order.
std::vector<int> fps_sample(const PointCloud& cloud, int count, int start = 0);

// Per-point unit normals from the covariance of the k-nearest neighborhood
// (self inclusive), smallest-eigenvalue eigenvector. Sign is fixed so the
// component with the largest absolute value is positive. k >= 3. Throws when a
// neighborhood is degenerate (all member points identical).
Eigen::MatrixXd estimate_normals(const PointCloud& cloud, const KdTree& index, int k);

// Normal of one explicit member set, same eigenvector and sign convention as
// estimate_normals. context_index only labels the error message.
Eigen::Vector3d normal_from_members(const Eigen::MatrixXd& points,
                                    const std::vector<int>& members, int context_index);

}  // namespace geofield
