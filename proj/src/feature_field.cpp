#include "geofield/feature_field.hpp"

#include <stdexcept>

namespace geofield {

void normalize_rows(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (norm < kNormFloor) {
      m.row(i).setZero();
    } else {
      m.row(i) /= norm;
    }
  }
}

FeatureField FeatureField::normalized(Eigen::MatrixXd raw) {
  if (raw.rows() < 1 || raw.cols() < 1)
    throw std::invalid_argument("feature field must be non-empty");
  if (!raw.allFinite()) throw std::invalid_argument("feature field has non-finite entries");

  FeatureField out;
  out.values = std::move(raw);
  normalize_rows(out.values);
  out.valid.resize(static_cast<size_t>(out.values.rows()));
  for (Eigen::Index i = 0; i < out.values.rows(); ++i)
    out.valid[static_cast<size_t>(i)] = out.values.row(i).norm() >= kNormFloor ? 1 : 0;
  return out;
}

}  // namespace geofield
