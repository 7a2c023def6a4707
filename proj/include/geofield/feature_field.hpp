#pragma once

#include <Eigen/Dense>

#include <vector>

namespace geofield {

constexpr double kNormFloor = 1e-12;

// Cosine between two rows/vectors; zero-norm inputs count as similarity 0.
inline double safe_cos(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na < kNormFloor || nb < kNormFloor) return 0.0;
  return a.dot(b) / (na * nb);
}

// Scales every row to unit length; rows below the norm floor are zeroed.
void normalize_rows(Eigen::MatrixXd& m);

/// Per-point feature matrix with unit (or zero) rows. All-zero rows stand for
/// unobserved points and are tracked in `valid`.
struct FeatureField {
  Eigen::MatrixXd values;      // N x b, rows unit-norm or zero
  std::vector<uint8_t> valid;  // length N, 1 where the row is usable

  int rows() const { return static_cast<int>(values.rows()); }
  int dim() const { return static_cast<int>(values.cols()); }

  // Ingest raw features: rows are L2-normalized, near-zero rows become
  // all-zero and invalid. Throws on non-finite input.
  static FeatureField normalized(Eigen::MatrixXd raw);
};

}  // namespace geofield
