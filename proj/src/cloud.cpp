#include "geofield/cloud.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>

namespace geofield {

void PointCloud::validate() const {
  if (coords.rows() < 1) throw std::invalid_argument("point cloud is empty");
  if (coords.cols() != 3) throw std::invalid_argument("point cloud coords must be N x 3");
  if (!coords.allFinite()) throw std::invalid_argument("point cloud has non-finite coordinates");
  if (labels && labels->size() != coords.rows())
    throw std::invalid_argument("label count does not match point count");
}

namespace {

struct Cand {
  double d2;
  int idx;
};

// Strict "a is a better candidate than b" order: smaller distance wins, equal
// distances fall back to the smaller point index. Using it as the heap
// comparator keeps the worst candidate on top.
inline bool better(const Cand& a, const Cand& b) {
  return a.d2 < b.d2 || (a.d2 == b.d2 && a.idx < b.idx);
}

struct BetterCmp {
  bool operator()(const Cand& a, const Cand& b) const { return better(a, b); }
};

}  // namespace

KdTree::KdTree(const Eigen::MatrixXd& points) : pts_(points) {
  if (pts_.rows() < 1) throw std::invalid_argument("cannot index an empty point set");
  if (pts_.cols() != 3) throw std::invalid_argument("index expects N x 3 points");
  if (!pts_.allFinite()) throw std::invalid_argument("index input has non-finite coordinates");
  order_.resize(static_cast<size_t>(pts_.rows()));
  for (int i = 0; i < size(); ++i) order_[static_cast<size_t>(i)] = i;
  nodes_.reserve(static_cast<size_t>(2 * size() / kLeafSize + 8));
  root_ = build(0, size());
}

int KdTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= kLeafSize) {
    nodes_[static_cast<size_t>(id)].begin = begin;
    nodes_[static_cast<size_t>(id)].end = end;
    return id;
  }

  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (int e = begin; e < end; ++e) {
    const auto p = pts_.row(order_[static_cast<size_t>(e)]);
    lo = lo.cwiseMin(p.transpose());
    hi = hi.cwiseMax(p.transpose());
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);

  const int mid = begin + (end - begin) / 2;
  // Lexicographic (coordinate, index) comparison keeps the split fence valid
  // with duplicate coordinates: left side <= split, right side >= split.
  auto cmp = [&](int a, int b) {
    const double ca = pts_(a, axis), cb = pts_(b, axis);
    return ca < cb || (ca == cb && a < b);
  };
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, cmp);

  Node node;
  node.axis = axis;
  node.split = pts_(order_[static_cast<size_t>(mid)], axis);
  node.left = build(begin, mid);
  node.right = build(mid, end);
  nodes_[static_cast<size_t>(id)] = node;
  return id;
}

std::vector<int> KdTree::knn(const Eigen::Vector3d& query, int k, bool exclude_self) const {
  if (k < 1) throw std::invalid_argument("knn: k must be >= 1, got " + std::to_string(k));
  if (!query.allFinite()) throw std::invalid_argument("knn: non-finite query");

  std::priority_queue<Cand, std::vector<Cand>, BetterCmp> heap;
  // Recursive traversal, nearer child first. A subtree is pruned only when its
  // best possible distance strictly exceeds the current worst kept distance;
  // on equality we still descend so index ties resolve exactly as a full scan.
  auto walk = [&](auto&& self, int node_id) -> void {
    const Node& node = nodes_[static_cast<size_t>(node_id)];
    if (node.axis < 0) {
      for (int e = node.begin; e < node.end; ++e) {
        const int i = order_[static_cast<size_t>(e)];
        const double d2 = (pts_.row(i).transpose() - query).squaredNorm();
        if (exclude_self && d2 == 0.0) continue;
        if (static_cast<int>(heap.size()) < k) {
          heap.push({d2, i});
        } else if (better({d2, i}, heap.top())) {
          heap.pop();
          heap.push({d2, i});
        }
      }
      return;
    }
    const double gap = query[node.axis] - node.split;
    const int near = gap <= 0.0 ? node.left : node.right;
    const int far = gap <= 0.0 ? node.right : node.left;
    self(self, near);
    if (static_cast<int>(heap.size()) < k || gap * gap <= heap.top().d2) self(self, far);
  };
  walk(walk, root_);

  if (static_cast<int>(heap.size()) < k)
    throw std::invalid_argument("knn: k=" + std::to_string(k) + " exceeds the " +
                                std::to_string(heap.size()) + " available points (N=" +
                                std::to_string(size()) + ")");

  std::vector<Cand> found;
  found.reserve(static_cast<size_t>(k));
  while (!heap.empty()) {
    found.push_back(heap.top());
    heap.pop();
  }
  std::sort(found.begin(), found.end(), better);
  std::vector<int> out(found.size());
  for (size_t i = 0; i < found.size(); ++i) out[i] = found[i].idx;
  return out;
}

std::vector<int> KdTree::radius_search(const Eigen::Vector3d& query, double radius) const {
  if (!(radius > 0.0)) throw std::invalid_argument("radius_search: radius must be > 0");
  if (!query.allFinite()) throw std::invalid_argument("radius_search: non-finite query");

  const double r2 = radius * radius;
  std::vector<Cand> found;
  auto walk = [&](auto&& self, int node_id) -> void {
    const Node& node = nodes_[static_cast<size_t>(node_id)];
    if (node.axis < 0) {
      for (int e = node.begin; e < node.end; ++e) {
        const int i = order_[static_cast<size_t>(e)];
        const double d2 = (pts_.row(i).transpose() - query).squaredNorm();
        if (d2 <= r2) found.push_back({d2, i});
      }
      return;
    }
    const double gap = query[node.axis] - node.split;
    const int near = gap <= 0.0 ? node.left : node.right;
    const int far = gap <= 0.0 ? node.right : node.left;
    self(self, near);
    if (gap * gap <= r2) self(self, far);
  };
  walk(walk, root_);

  std::sort(found.begin(), found.end(), better);
  std::vector<int> out(found.size());
  for (size_t i = 0; i < found.size(); ++i) out[i] = found[i].idx;
  return out;
}

std::vector<int> fps_sample(const PointCloud& cloud, int count, int start) {
  cloud.validate();
  const int n = cloud.size();
  if (count < 1 || count > n)
    throw std::invalid_argument("fps_sample: count=" + std::to_string(count) +
                                " out of range for N=" + std::to_string(n));
  if (start < 0 || start >= n)
    throw std::invalid_argument("fps_sample: start=" + std::to_string(start) +
                                " out of range for N=" + std::to_string(n));

  std::vector<int> picks;
  picks.reserve(static_cast<size_t>(count));
  picks.push_back(start);
  std::vector<char> taken(static_cast<size_t>(n), 0);
  taken[static_cast<size_t>(start)] = 1;

  // Squared distances keep the argmax and its ties identical to the metric
  // version while avoiding N*count square roots.
  Eigen::VectorXd d2 =
      (cloud.coords.rowwise() - cloud.coords.row(start)).rowwise().squaredNorm();

  while (static_cast<int>(picks.size()) < count) {
    int best = -1;
    double best_d2 = -1.0;
    for (int i = 0; i < n; ++i) {
      if (taken[static_cast<size_t>(i)]) continue;
      if (d2[i] > best_d2) {  // strict: ties keep the smallest index
        best_d2 = d2[i];
        best = i;
      }
    }
    picks.push_back(best);
    taken[static_cast<size_t>(best)] = 1;
    const Eigen::VectorXd dn =
        (cloud.coords.rowwise() - cloud.coords.row(best)).rowwise().squaredNorm();
    d2 = d2.cwiseMin(dn);
  }
  return picks;
}

// Covariance smallest-eigenvalue direction with the deterministic sign rule:
// the component with the largest absolute value (first on ties) is positive.
Eigen::Vector3d normal_from_members(const Eigen::MatrixXd& pts, const std::vector<int>& members,
                                    int who) {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (int i : members) mean += pts.row(i).transpose();
  mean /= static_cast<double>(members.size());

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int i : members) {
    const Eigen::Vector3d d = pts.row(i).transpose() - mean;
    cov += d * d.transpose();
  }
  if (cov.isZero(0.0))
    throw std::runtime_error("estimate_normals: degenerate neighborhood at point " +
                             std::to_string(who) + " (all member points identical)");

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Eigen::Vector3d normal = eig.eigenvectors().col(0);  // ascending eigenvalues
  int mi = 0;
  for (int c = 1; c < 3; ++c)
    if (std::abs(normal[c]) > std::abs(normal[mi])) mi = c;
  if (normal[mi] < 0.0) normal = -normal;
  return normal.normalized();
}

Eigen::MatrixXd estimate_normals(const PointCloud& cloud, const KdTree& index, int k) {
  cloud.validate();
  if (k < 3) throw std::invalid_argument("estimate_normals: k must be >= 3");
  const int n = cloud.size();
  Eigen::MatrixXd normals(n, 3);
  for (int i = 0; i < n; ++i) {
    const std::vector<int> nbrs = index.knn(cloud.coords.row(i).transpose(), k, false);
    normals.row(i) = normal_from_members(cloud.coords, nbrs, i).transpose();
  }
  return normals;
}

}  // namespace geofield
