#include "geofield/config.hpp"

#include <stdexcept>
#include <string>

namespace geofield {

void FpfhParams::validate() const {
  if (m_ref < 3) throw std::invalid_argument("fpfh: m_ref must be >= 3");
  if (k3 < 3) throw std::invalid_argument("fpfh: k3 must be >= 3");
  if (k4 < 3) throw std::invalid_argument("fpfh: k4 must be >= 3");
  if (m_ref < k3) throw std::invalid_argument("fpfh: m_ref must be >= k3");
  if (!(r1 > 0.0)) throw std::invalid_argument("fpfh: r1 must be > 0");
  if (!(r2 >= r1)) throw std::invalid_argument("fpfh: r2 must be >= r1");
}

void PipelineConfig::validate() const {
  if (gamma_iters < 0) throw std::invalid_argument("config: gamma_iters must be >= 0");
  if (n_super < 1) throw std::invalid_argument("config: n_super must be >= 1");
  if (k1 < 1) throw std::invalid_argument("config: k1 must be >= 1");
  if (k2 < 1) throw std::invalid_argument("config: k2 must be >= 1");
  if (sh_iters < 0) throw std::invalid_argument("config: sh_iters must be >= 0");
  if (!(ot_eps > 0.0)) throw std::invalid_argument("config: ot_eps must be > 0");
  if (ot_iters < 0) throw std::invalid_argument("config: ot_iters must be >= 0");
  if (ms_iters < 0) throw std::invalid_argument("config: ms_iters must be >= 0");
  if (bandwidth_rank < 1) throw std::invalid_argument("config: bandwidth_rank must be >= 1");
  if (agg_passes < 0) throw std::invalid_argument("config: agg_passes must be >= 0");
  if (!(blend >= 0.0 && blend <= 1.0))
    throw std::invalid_argument("config: blend must lie in [0, 1]");
  if (fps_start < 0) throw std::invalid_argument("config: fps_start must be >= 0");
  if (threads < 0) throw std::invalid_argument("config: threads must be >= 0");
}

void PipelineConfig::validate_for_cloud(int n_points) const {
  validate();
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("config: " + what + " for a cloud of " +
                                std::to_string(n_points) + " points");
  };
  if (n_super > n_points) fail("n_super=" + std::to_string(n_super) + " is too large");
  if (k1 > n_points) fail("k1=" + std::to_string(k1) + " is too large");
  if (k2 > n_points) fail("k2=" + std::to_string(k2) + " is too large");
  if (fps_start >= n_points) fail("fps_start=" + std::to_string(fps_start) + " is out of range");
}

namespace {

const std::vector<std::string> kPresets = {"modelnet40", "objectscannn", "shapenetpart",
                                           "scannet", "nuscenes"};

}  // namespace

void apply_preset(const std::string& name, PipelineConfig& pipeline, FpfhParams& fpfh) {
  if (name == "modelnet40" || name == "objectscannn" || name == "shapenetpart") {
    pipeline.gamma_iters = 16;
    pipeline.n_super = 256;
    pipeline.k1 = 32;
    pipeline.k2 = 24;
    fpfh = {512, 32, 100, 0.04, 0.08};
  } else if (name == "scannet") {
    pipeline.gamma_iters = 8;
    pipeline.n_super = 3000;
    pipeline.k1 = 48;
    pipeline.k2 = 32;
    fpfh = {4800, 32, 100, 0.05, 0.10};
  } else if (name == "nuscenes") {
    pipeline.gamma_iters = 8;
    pipeline.n_super = 2400;
    pipeline.k1 = 48;
    pipeline.k2 = 32;
    fpfh = {5200, 32, 100, 0.05, 0.10};
  } else {
    std::string known;
    for (const auto& p : kPresets) known += (known.empty() ? "" : ", ") + p;
    throw std::invalid_argument("unknown preset '" + name + "' (known: " + known + ")");
  }
}

const std::vector<std::string>& preset_names() { return kPresets; }

}  // namespace geofield
