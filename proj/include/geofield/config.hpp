#pragma once

#include <string>
#include <vector>

namespace geofield {

/// Geometric descriptor parameters (reference subsampling scheme).
struct FpfhParams {
  int m_ref = 512;   // reference points kept by farthest point sampling
  int k3 = 32;       // neighbor cap for reference normals
  int k4 = 100;      // neighbor cap for the histogram stage
  double r1 = 0.04;  // normal estimation radius
  double r2 = 0.08;  // histogram radius

  void validate() const;
};

enum class CoordKernel { Tanh, Softmax };

/// Scalar knobs of the refinement pipeline.
struct PipelineConfig {
  int gamma_iters = 16;        // superpoint refinement rounds
  int n_super = 256;           // number of superpoints
  int k1 = 32;                 // superpoint neighborhood size
  int k2 = 24;                 // local aggregation patch size
  int sh_iters = 5;            // alternating-normalization rounds in SH
  double ot_eps = 1.0;         // entropic regularization
  int ot_iters = 5;            // Sinkhorn scaling rounds per assignment
  int ms_iters = 40;           // mean-shift iteration cap
  int bandwidth_rank = 16;     // neighbor rank for bandwidth estimation
  int agg_passes = 1;          // local/global cascade repetitions
  double blend = 1.0;          // anchor projection blend in [0, 1]
  int fps_start = 0;           // first index taken by farthest point sampling
  bool recompute_scales = true;   // refresh D_c/D_g every refinement round
  bool nms_both_spaces = true;    // suppression requires both similarity spaces
  CoordKernel coord_kernel = CoordKernel::Tanh;  // superpoint-to-point distance kernel
  int threads = 1;             // worker count, 0 = hardware concurrency

  void validate() const;
  // Checks counts that depend on the cloud size (n_super, k1, k2, fps_start).
  void validate_for_cloud(int n_points) const;
};

// Fills both structures from a named dataset preset. Known names:
// modelnet40, objectscannn, shapenetpart, scannet, nuscenes.
void apply_preset(const std::string& name, PipelineConfig& pipeline, FpfhParams& fpfh);

const std::vector<std::string>& preset_names();

}  // namespace geofield
