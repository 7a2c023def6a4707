#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "geofield/feature_field.hpp"

namespace geofield {

/// One embedding row per class, unit-normalized on construction.
struct TextFeatureMatrix {
  Eigen::MatrixXd values;  // C x b
  std::vector<std::string> class_names;  // length C (generated when absent)

  explicit TextFeatureMatrix(Eigen::MatrixXd raw, std::vector<std::string> names = {});
  int classes() const { return static_cast<int>(values.rows()); }
};

/// Per-view feature rows addressed to point indices, with fusion weights.
struct ViewProjection {
  std::vector<int> point_indices;  // length R, values in [0, N)
  Eigen::MatrixXd features;        // R x b
  Eigen::VectorXd weights;         // length R, finite and >= 0
};

// Weighted average of all view rows hitting each point, L2-normalized. Points
// no view touches (or with zero total weight) come back as invalid zero rows.
FeatureField fuse_views(const std::vector<ViewProjection>& views, int n_points);

struct ClassifyResult {
  int label = -1;
  Eigen::VectorXd scores;  // length C
};

// Global descriptor = elementwise max over valid rows, normalized, optionally
// averaged with auxiliary global vectors, then scored against every class row.
// Ties take the lowest class index. Throws when no row is valid.
ClassifyResult classify(const FeatureField& features, const TextFeatureMatrix& text,
                        const std::vector<Eigen::VectorXd>& aux_global = {});

// Per-point argmax class; invalid rows get the unlabeled marker C.
std::vector<int> segment(const FeatureField& features, const TextFeatureMatrix& text);

struct SegmentationResult {
  std::vector<int> pred;
  Eigen::VectorXd per_class_iou;  // length C, -1 marks a class absent from both
  double mean_iou = 0.0;
};

// Intersection over union averaged across the classes present in ground truth
// or prediction. Entries with unlabeled ground truth (== n_classes) are
// excluded entirely. Labels must lie in [0, n_classes].
SegmentationResult miou(const std::vector<int>& pred, const std::vector<int>& gt,
                        int n_classes);

// Fraction of exactly matching labels. Lengths must agree and be nonzero.
double accuracy(const std::vector<int>& pred, const std::vector<int>& gt);

}  // namespace geofield
