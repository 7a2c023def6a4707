#include "geofield/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace geofield {

TextFeatureMatrix::TextFeatureMatrix(Eigen::MatrixXd raw, std::vector<std::string> names)
    : values(std::move(raw)), class_names(std::move(names)) {
  if (values.rows() < 2) throw std::invalid_argument("text matrix: need at least 2 classes");
  if (values.cols() < 1) throw std::invalid_argument("text matrix: empty embedding");
  if (!values.allFinite()) throw std::invalid_argument("text matrix: non-finite entries");
  normalize_rows(values);
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    if (values.row(i).norm() < kNormFloor)
      throw std::invalid_argument("text matrix: row " + std::to_string(i) + " has zero norm");
  if (class_names.empty()) {
    class_names.resize(static_cast<size_t>(values.rows()));
    for (size_t i = 0; i < class_names.size(); ++i) class_names[i] = std::to_string(i);
  }
  if (class_names.size() != static_cast<size_t>(values.rows()))
    throw std::invalid_argument("text matrix: name count does not match class count");
}

FeatureField fuse_views(const std::vector<ViewProjection>& views, int n_points) {
  if (n_points < 1) throw std::invalid_argument("fuse_views: n_points must be >= 1");
  int dim = -1;
  for (const auto& v : views) {
    const int r = static_cast<int>(v.features.rows());
    if (static_cast<int>(v.point_indices.size()) != r || v.weights.size() != r)
      throw std::invalid_argument("fuse_views: view rows/indices/weights disagree");
    if (!v.features.allFinite() || !v.weights.allFinite())
      throw std::invalid_argument("fuse_views: non-finite view data");
    if ((v.weights.array() < 0.0).any())
      throw std::invalid_argument("fuse_views: negative view weight");
    if (dim < 0 && r > 0) dim = static_cast<int>(v.features.cols());
    if (r > 0 && v.features.cols() != dim)
      throw std::invalid_argument("fuse_views: feature widths differ between views");
    for (int i : v.point_indices)
      if (i < 0 || i >= n_points)
        throw std::invalid_argument("fuse_views: point index " + std::to_string(i) +
                                    " out of range for N=" + std::to_string(n_points));
  }
  if (dim < 0) throw std::invalid_argument("fuse_views: no view rows at all");

  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n_points, dim);
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(n_points);
  for (const auto& v : views)
    for (int r = 0; r < static_cast<int>(v.point_indices.size()); ++r) {
      acc.row(v.point_indices[static_cast<size_t>(r)]) += v.weights[r] * v.features.row(r);
      mass[v.point_indices[static_cast<size_t>(r)]] += v.weights[r];
    }

  FeatureField out;
  out.values.setZero(n_points, dim);
  out.valid.assign(static_cast<size_t>(n_points), 0);
  for (int i = 0; i < n_points; ++i) {
    if (mass[i] <= 0.0) continue;  // unseen point, stays an invalid zero row
    Eigen::RowVectorXd row = acc.row(i) / mass[i];
    const double norm = row.norm();
    if (norm >= kNormFloor) {
      out.values.row(i) = row / norm;
      out.valid[static_cast<size_t>(i)] = 1;
    }
  }
  return out;
}

ClassifyResult classify(const FeatureField& features, const TextFeatureMatrix& text,
                        const std::vector<Eigen::VectorXd>& aux_global) {
  const int n = features.rows();
  const int b = features.dim();
  if (text.values.cols() != b)
    throw std::invalid_argument("classify: text embedding width mismatch");

  bool any = false;
  Eigen::RowVectorXd global(b);
  for (int i = 0; i < n; ++i) {
    if (!features.valid[static_cast<size_t>(i)]) continue;
    if (!any) {
      global = features.values.row(i);
      any = true;
    } else {
      global = global.cwiseMax(features.values.row(i));
    }
  }
  if (!any) throw std::runtime_error("classify: no valid feature rows");

  double norm = global.norm();
  if (norm >= kNormFloor) global /= norm;

  if (!aux_global.empty()) {
    Eigen::RowVectorXd mean = global;
    for (const auto& g : aux_global) {
      if (g.size() != b) throw std::invalid_argument("classify: auxiliary vector width mismatch");
      if (!g.allFinite()) throw std::invalid_argument("classify: non-finite auxiliary vector");
      mean += g.transpose();
    }
    mean /= static_cast<double>(aux_global.size() + 1);
    norm = mean.norm();
    if (norm < kNormFloor) throw std::runtime_error("classify: pooled descriptor has zero norm");
    global = mean / norm;
  }

  ClassifyResult res;
  res.scores = text.values * global.transpose();
  res.label = 0;
  for (int c = 1; c < text.classes(); ++c)
    if (res.scores[c] > res.scores[res.label]) res.label = c;  // ties keep the lowest class
  return res;
}

std::vector<int> segment(const FeatureField& features, const TextFeatureMatrix& text) {
  const int n = features.rows();
  if (text.values.cols() != features.dim())
    throw std::invalid_argument("segment: text embedding width mismatch");

  const int unlabeled = text.classes();
  const Eigen::MatrixXd scores = features.values * text.values.transpose();
  std::vector<int> out(static_cast<size_t>(n), unlabeled);
  for (int i = 0; i < n; ++i) {
    if (!features.valid[static_cast<size_t>(i)]) continue;
    int best = 0;
    for (int c = 1; c < text.classes(); ++c)
      if (scores(i, c) > scores(i, best)) best = c;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

SegmentationResult miou(const std::vector<int>& pred, const std::vector<int>& gt, int n_classes) {
  if (n_classes < 1) throw std::invalid_argument("miou: n_classes must be >= 1");
  if (pred.size() != gt.size() || pred.empty())
    throw std::invalid_argument("miou: prediction and ground truth sizes differ or are empty");
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] > n_classes)
      throw std::invalid_argument("miou: prediction label out of range at entry " +
                                  std::to_string(i));
    if (gt[i] < 0 || gt[i] > n_classes)
      throw std::invalid_argument("miou: ground truth label out of range at entry " +
                                  std::to_string(i));
  }

  std::vector<long> inter(static_cast<size_t>(n_classes), 0);
  std::vector<long> in_pred(static_cast<size_t>(n_classes), 0);
  std::vector<long> in_gt(static_cast<size_t>(n_classes), 0);
  for (size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] == n_classes) continue;  // unlabeled ground truth is skipped entirely
    in_gt[static_cast<size_t>(gt[i])]++;
    if (pred[i] < n_classes) in_pred[static_cast<size_t>(pred[i])]++;
    if (pred[i] == gt[i]) inter[static_cast<size_t>(gt[i])]++;
  }

  SegmentationResult res;
  res.pred = pred;
  res.per_class_iou = Eigen::VectorXd::Constant(n_classes, -1.0);
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < n_classes; ++c) {
    const long uni = in_pred[static_cast<size_t>(c)] + in_gt[static_cast<size_t>(c)] -
                     inter[static_cast<size_t>(c)];
    if (uni == 0) continue;  // class absent from both sides
    res.per_class_iou[c] = static_cast<double>(inter[static_cast<size_t>(c)]) / uni;
    sum += res.per_class_iou[c];
    ++present;
  }
  res.mean_iou = present > 0 ? sum / present : 0.0;
  return res;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("accuracy: prediction and ground truth sizes differ");
  if (pred.empty()) throw std::invalid_argument("accuracy: empty inputs");
  size_t hit = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == gt[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace geofield
