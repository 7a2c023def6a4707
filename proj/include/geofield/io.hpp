#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "geofield/anchors.hpp"
#include "geofield/cloud.hpp"
#include "geofield/config.hpp"

namespace geofield {

// Binary tensor container: magic "GZTN", version byte 1, dtype byte
// (1 = little-endian float32), ndim byte, ndim little-endian uint64 dims,
// then the row-major payload.
struct Tensor {
  std::vector<uint64_t> dims;
  std::vector<float> data;  // row-major

  uint64_t element_count() const;
  static Tensor from_matrix(const Eigen::MatrixXd& m);
  static Tensor from_vector(const Eigen::VectorXd& v);
  Eigen::MatrixXd to_matrix() const;  // requires 2 dims
  Eigen::VectorXd to_vector() const;  // requires 1 dim
};

class TensorIoError : public std::runtime_error {
 public:
  enum class Code { BadMagic, BadVersion, BadDtype, BadHeader, Truncated, TrailingData, Io };

  TensorIoError(Code code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

Tensor read_tensor(const std::string& path);
void write_tensor(const std::string& path, const Tensor& tensor);

// Stream variants; the format is self-delimiting so records can be stacked in
// one file (used by anchor banks).
Tensor read_tensor_record(std::istream& in, const std::string& context);
void write_tensor_record(std::ostream& out, const Tensor& tensor);

// Anchor bank file: three consecutive tensor records (visual L x b,
// geometric L x d, density L).
void write_anchor_bank(const std::string& path, const AnchorSet& anchors);
AnchorSet read_anchor_bank(const std::string& path);

// PLY subset reader: ascii or binary_little_endian 1.0, a vertex element with
// float x/y/z, optionally an integer "label" property. Other scalar vertex
// properties are skipped; anything else (big endian, double coords, list
// properties before the vertices) raises an unsupported-feature error.
PointCloud read_ply(const std::string& path);
void write_ply(const std::string& path, const PointCloud& cloud, bool binary = true);

// Prediction/label text files: one integer per line.
std::vector<int> read_labels(const std::string& path);
void write_labels(const std::string& path, const std::vector<int>& labels);

/// Parsed key=value run configuration.
struct RunConfig {
  PipelineConfig pipeline;
  FpfhParams fpfh;
  std::string preset;  // empty when no preset line was given
};

// Parses a key=value file (# comments and blank lines ignored). A preset line
// is applied before the explicit keys regardless of position; unknown keys are
// an error.
RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text, const std::string& context);

}  // namespace geofield
