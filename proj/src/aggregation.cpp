#include "geofield/aggregation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "geofield/parallel.hpp"
#include "geofield/transport.hpp"

namespace geofield {

void MixingDiag::note(const Eigen::MatrixXd& w) {
  const double dev = (w.rowwise().sum().array() - 1.0).abs().maxCoeff();
  if (dev > max_row_sum_dev) max_row_sum_dev = dev;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// softmax(SH(a) ⊙ SH(b)) — the shared mixing-matrix recipe.
Eigen::MatrixXd mixing_matrix(const Eigen::MatrixXd& sim_a, const Eigen::MatrixXd& sim_b,
                              int sh_iters, MixingDiag* diag) {
  const Eigen::MatrixXd w =
      softmax_rows(sh_normalize(sim_a, sh_iters).cwiseProduct(sh_normalize(sim_b, sh_iters)));
  if (diag) diag->note(w);
  return w;
}

}  // namespace

FeatureField local_aggregate(const SuperpointState& state, const PointCloud& cloud,
                             const KdTree& index, const Eigen::MatrixXd& geo,
                             const FeatureField& features, int k2, int sh_iters, int threads,
                             MixingDiag* diag) {
  const int n = cloud.size();
  const int m = state.count();
  const int b = features.dim();
  if (features.rows() != n) throw std::invalid_argument("local_aggregate: field size mismatch");
  if (geo.rows() != n) throw std::invalid_argument("local_aggregate: geo size mismatch");
  if (k2 < 1 || k2 > n)
    throw std::invalid_argument("local_aggregate: k2=" + std::to_string(k2) +
                                " out of range for N=" + std::to_string(n));

  const double sg = std::sqrt(static_cast<double>(geo.cols()));
  const double sb = std::sqrt(static_cast<double>(b));

  std::vector<std::vector<int>> patch(static_cast<size_t>(m));
  std::vector<Eigen::MatrixXd> mixed(static_cast<size_t>(m));
  std::vector<MixingDiag> local_diag(static_cast<size_t>(m));
  parallel_for(0, m, threads, [&](int j) {
    const std::vector<int> ids = index.knn(state.seeds_p.row(j).transpose(), k2, false);
    Eigen::MatrixXd fj(k2, b), gj(k2, geo.cols());
    for (int r = 0; r < k2; ++r) {
      fj.row(r) = features.values.row(ids[static_cast<size_t>(r)]);
      gj.row(r) = geo.row(ids[static_cast<size_t>(r)]);
    }
    const Eigen::MatrixXd w = mixing_matrix(gj * gj.transpose() / sg, fj * fj.transpose() / sb,
                                            sh_iters, &local_diag[static_cast<size_t>(j)]);
    mixed[static_cast<size_t>(j)] = 0.5 * (fj + w * fj);
    patch[static_cast<size_t>(j)] = ids;
  });
  if (diag)
    for (const auto& d : local_diag) diag->max_row_sum_dev =
        std::max(diag->max_row_sum_dev, d.max_row_sum_dev);

  // Serial scatter keeps the accumulation order fixed for any thread count.
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, b);
  Eigen::VectorXd hits = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < m; ++j) {
    const auto& ids = patch[static_cast<size_t>(j)];
    for (int r = 0; r < k2; ++r) {
      acc.row(ids[static_cast<size_t>(r)]) += mixed[static_cast<size_t>(j)].row(r);
      hits[ids[static_cast<size_t>(r)]] += 1.0;
    }
  }

  FeatureField out;
  out.values.resize(n, b);
  out.valid.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (hits[i] > 0.0) {
      Eigen::RowVectorXd row = acc.row(i) / hits[i];
      const double norm = row.norm();
      if (norm >= kNormFloor) {
        out.values.row(i) = row / norm;
        out.valid[static_cast<size_t>(i)] = 1;
      } else {
        out.values.row(i).setZero();
        out.valid[static_cast<size_t>(i)] = 0;
      }
    } else {  // no patch touched this point
      out.values.row(i) = features.values.row(i);
      out.valid[static_cast<size_t>(i)] = features.valid[static_cast<size_t>(i)];
    }
  }
  return out;
}

Eigen::MatrixXd pool_to_superpoints(const SuperpointState& state, const FeatureField& refined) {
  const int m = state.count();
  if (state.plan.empty()) throw std::logic_error("pool_to_superpoints: no transport plan");
  if (state.plan.cols != m) throw std::logic_error("pool_to_superpoints: plan/seed mismatch");
  if (refined.rows() != state.plan.rows)
    throw std::invalid_argument("pool_to_superpoints: field does not match the plan");

  Eigen::MatrixXd out(m, refined.dim());
  for (int j = 0; j < m; ++j) {
    const auto& idx = state.plan.members[static_cast<size_t>(j)];
    const auto& val = state.plan.values[static_cast<size_t>(j)];
    double mass = 0.0;
    Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(refined.dim());
    for (size_t e = 0; e < idx.size(); ++e) {
      mass += val[e];
      f += val[e] * refined.values.row(idx[e]);
    }
    if (mass <= 0.0) {
      out.row(j) = state.seeds_f.row(j);
      continue;
    }
    f /= mass;
    const double norm = f.norm();
    out.row(j) = norm >= kNormFloor ? Eigen::RowVectorXd(f / norm) : state.seeds_f.row(j).eval();
  }
  return out;
}

Eigen::MatrixXd global_aggregate(const Eigen::MatrixXd& seeds_f, const Eigen::MatrixXd& seeds_g,
                                 const Eigen::MatrixXd& seeds_p, double d_c, int sh_iters,
                                 MixingDiag* diag) {
  const int m = static_cast<int>(seeds_f.rows());
  if (m < 1) throw std::invalid_argument("global_aggregate: no seeds");
  if (seeds_g.rows() != m || seeds_p.rows() != m)
    throw std::invalid_argument("global_aggregate: seed row count mismatch");

  const double sg = std::sqrt(static_cast<double>(seeds_g.cols()));
  const double sb = std::sqrt(static_cast<double>(seeds_f.cols()));
  const Eigen::MatrixXd sim_g = seeds_g * seeds_g.transpose() / sg;
  const Eigen::MatrixXd sim_v = seeds_f * seeds_f.transpose() / sb;

  // The locality mask zeroes the blended similarity where seeds are at least
  // d_c apart. Zeroed entries still pass through the softmax as exp(0), which
  // is intentional and covered by the trace tests.
  Eigen::MatrixXd blended =
      sh_normalize(sim_g, sh_iters).cwiseProduct(sh_normalize(sim_v, sh_iters));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if ((seeds_p.row(i) - seeds_p.row(j)).norm() >= d_c) blended(i, j) = 0.0;

  const Eigen::MatrixXd w = softmax_rows(blended);
  if (diag) diag->note(w);
  Eigen::MatrixXd out = 0.5 * (seeds_f + w * seeds_f);
  normalize_rows(out);
  return out;
}

FeatureField superpoint_to_point(const PointCloud& cloud, const FeatureField& features,
                                 const Eigen::MatrixXd& seeds_p, const Eigen::MatrixXd& seeds_f,
                                 double d_c, int sh_iters, CoordKernel kernel, MixingDiag* diag) {
  const int n = cloud.size();
  const int m = static_cast<int>(seeds_p.rows());
  if (features.rows() != n)
    throw std::invalid_argument("superpoint_to_point: field size mismatch");
  if (seeds_f.rows() != m)
    throw std::invalid_argument("superpoint_to_point: seed row count mismatch");
  if (seeds_f.cols() != features.dim())
    throw std::invalid_argument("superpoint_to_point: feature width mismatch");

  Eigen::MatrixXd closeness(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      closeness(i, j) = d_c - (cloud.coords.row(i) - seeds_p.row(j)).norm();
  const Eigen::MatrixXd sim_c =
      kernel == CoordKernel::Tanh ? closeness.array().tanh().matrix() : softmax_rows(closeness);

  const double sb = std::sqrt(static_cast<double>(features.dim()));
  const Eigen::MatrixXd sim_v = features.values * seeds_f.transpose() / sb;
  const Eigen::MatrixXd w = mixing_matrix(sim_c, sim_v, sh_iters, diag);
  const Eigen::MatrixXd pulled = w * seeds_f;

  FeatureField out;
  out.values.resize(n, features.dim());
  out.valid.assign(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    // Unobserved rows have nothing to blend with and take the seed mix as is.
    Eigen::RowVectorXd row = features.valid[static_cast<size_t>(i)]
                                 ? Eigen::RowVectorXd(0.5 * (features.values.row(i) + pulled.row(i)))
                                 : Eigen::RowVectorXd(pulled.row(i));
    const double norm = row.norm();
    if (norm >= kNormFloor) {
      out.values.row(i) = row / norm;
      out.valid[static_cast<size_t>(i)] = 1;
    } else {
      out.values.row(i).setZero();
    }
  }
  return out;
}

FeatureField anchor_project(const FeatureField& features, const Eigen::MatrixXd& geo,
                            const AnchorSet& anchors, double blend) {
  const int n = features.rows();
  if (geo.rows() != n) throw std::invalid_argument("anchor_project: geo size mismatch");
  if (!(blend >= 0.0 && blend <= 1.0))
    throw std::invalid_argument("anchor_project: blend must lie in [0, 1]");
  if (anchors.count() < 1) throw std::invalid_argument("anchor_project: empty anchor set");
  if (anchors.visual.cols() != features.dim())
    throw std::invalid_argument("anchor_project: anchor width mismatch");

  const std::vector<int> pick = assign_points(anchors, features.values, geo);
  FeatureField out;
  out.values.resize(n, features.dim());
  out.valid.assign(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    Eigen::RowVectorXd row = (1.0 - blend) * features.values.row(i) +
                             blend * anchors.visual.row(pick[static_cast<size_t>(i)]);
    const double norm = row.norm();
    if (norm >= kNormFloor) {
      out.values.row(i) = row / norm;
      out.valid[static_cast<size_t>(i)] = 1;
    } else {
      out.values.row(i).setZero();
    }
  }
  return out;
}

namespace {

// Bandwidth estimation that shrinks the rank instead of failing on small
// inputs; a single row falls back to the widest kernel.
double bandwidth_for(const Eigen::MatrixXd& rows, int rank) {
  const int n = static_cast<int>(rows.rows());
  if (n < 2) return 1.0;
  return estimate_bandwidth(rows, std::min(rank, n - 1));
}

struct AnchorStage {
  AnchorSet anchors;
  Bandwidths point_bw;
  MeanShiftResult ms;
};

AnchorStage anchor_stage(const SuperpointState& state, const FeatureField& vlm,
                         const Eigen::MatrixXd& geo, const PipelineConfig& config) {
  AnchorStage out;
  out.point_bw = Bandwidths{bandwidth_for(vlm.values, config.bandwidth_rank),
                            bandwidth_for(geo, config.bandwidth_rank)};
  out.ms = meanshift(vlm.values, geo, state.seeds_f, state.seeds_g, out.point_bw,
                     config.ms_iters, config.threads);
  const Bandwidths nms_bw{bandwidth_for(out.ms.visual, config.bandwidth_rank),
                          bandwidth_for(out.ms.geometric, config.bandwidth_rank)};
  out.anchors = nms_centroids(out.ms.visual, out.ms.geometric, out.ms.density, nms_bw,
                              config.nms_both_spaces);
  return out;
}

// Makes sure the state carries a usable plan even when gamma_iters = 0: one
// assignment-only pass, seeds untouched.
void ensure_plan(SuperpointState& state, const PointCloud& cloud, const Eigen::MatrixXd& geo,
                 const FeatureField& vlm, const KdTree& index, const PipelineConfig& config) {
  if (!state.plan.empty()) return;
  build_neighbor_lists(state, index, config.k1, config.threads);
  compute_mu(state, vlm.values);
  state.scales = state.count() >= 2 ? scale_constants(state) : ScaleConstants{1.0, 1.0};
  state.plan = ot_assign(state, cloud, geo, state.scales, config.ot_eps, config.ot_iters);
}

}  // namespace

AnchorSet compute_anchors(const PointCloud& cloud, const FeatureField& vlm,
                          const Eigen::MatrixXd& geo, const PipelineConfig& config) {
  config.validate_for_cloud(cloud.size());
  if (vlm.rows() != cloud.size() || geo.rows() != cloud.coords.rows())
    throw std::invalid_argument("compute_anchors: input sizes do not match the cloud");
  SuperpointState state =
      refine(init_seeds(cloud, geo, vlm, config.n_super, config.fps_start), cloud, geo, vlm,
             config);
  return anchor_stage(state, vlm, geo, config).anchors;
}

PipelineResult run_pipeline(const PointCloud& cloud, const FeatureField& vlm,
                            const Eigen::MatrixXd& geo, const PipelineConfig& config,
                            const AnchorSet* external_anchors) {
  config.validate_for_cloud(cloud.size());
  cloud.validate();
  const int n = cloud.size();
  if (vlm.rows() != n)
    throw std::invalid_argument("pipeline: feature field has " + std::to_string(vlm.rows()) +
                                " rows for " + std::to_string(n) + " points");
  if (geo.rows() != n)
    throw std::invalid_argument("pipeline: geometric field has " + std::to_string(geo.rows()) +
                                " rows for " + std::to_string(n) + " points");
  if (!geo.allFinite()) throw std::invalid_argument("pipeline: non-finite geometric features");

  PipelineResult res;
  MixingDiag diag;
  const KdTree index(cloud.coords);
  const auto total0 = Clock::now();

  auto t0 = Clock::now();
  res.state = refine(init_seeds(cloud, geo, vlm, config.n_super, config.fps_start), cloud, geo,
                     vlm, config);
  ensure_plan(res.state, cloud, geo, vlm, index, config);
  if (config.recompute_scales)
    res.state.scales =
        res.state.count() >= 2 ? scale_constants(res.state) : ScaleConstants{1.0, 1.0};
  res.report.timings_ms.emplace_back("refine", ms_since(t0));

  t0 = Clock::now();
  if (external_anchors) {
    if (external_anchors->count() < 1)
      throw std::invalid_argument("pipeline: external anchor set is empty");
    if (external_anchors->visual.cols() != vlm.dim() ||
        external_anchors->geometric.cols() != geo.cols())
      throw std::invalid_argument("pipeline: external anchor width mismatch");
    res.anchors = *external_anchors;
  } else {
    AnchorStage stage = anchor_stage(res.state, vlm, geo, config);
    res.anchors = std::move(stage.anchors);
    res.report.meanshift_iterations = stage.ms.iterations;
    res.report.meanshift_final_shift = stage.ms.final_shift;
    res.report.bandwidth_visual = stage.point_bw.visual;
    res.report.bandwidth_geometric = stage.point_bw.geometric;
  }
  res.report.timings_ms.emplace_back("anchors", ms_since(t0));

  FeatureField field = vlm;
  const double d_c = res.state.scales.d_c;
  for (int pass = 0; pass < config.agg_passes; ++pass) {
    t0 = Clock::now();
    field = local_aggregate(res.state, cloud, index, geo, field, config.k2, config.sh_iters,
                            config.threads, &diag);
    res.report.timings_ms.emplace_back("local_pass_" + std::to_string(pass), ms_since(t0));

    t0 = Clock::now();
    res.state.seeds_f = pool_to_superpoints(res.state, field);
    res.state.seeds_f = global_aggregate(res.state.seeds_f, res.state.seeds_g,
                                         res.state.seeds_p, d_c, config.sh_iters, &diag);
    res.report.timings_ms.emplace_back("global_pass_" + std::to_string(pass), ms_since(t0));
  }

  t0 = Clock::now();
  field = superpoint_to_point(cloud, field, res.state.seeds_p, res.state.seeds_f, d_c,
                              config.sh_iters, config.coord_kernel, &diag);
  res.report.timings_ms.emplace_back("superpoint_to_point", ms_since(t0));

  t0 = Clock::now();
  field = anchor_project(field, geo, res.anchors, config.blend);
  res.report.timings_ms.emplace_back("anchor_project", ms_since(t0));
  res.report.timings_ms.emplace_back("total", ms_since(total0));

  res.report.n_points = n;
  res.report.n_super = res.state.count();
  res.report.anchor_count = res.anchors.count();
  res.report.covered = res.state.covered_count();
  res.report.uncovered = n - res.report.covered;
  res.report.plan_row_residual = res.state.plan.row_residual;
  res.report.plan_col_residual = res.state.plan.col_residual;
  res.report.d_c = res.state.scales.d_c;
  res.report.d_g = res.state.scales.d_g;
  res.report.mixing_row_sum_max_dev = diag.max_row_sum_dev;

  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (int i = 0; i < n; ++i) {
    const double norm = field.values.row(i).norm();
    lo = std::min(lo, norm);
    hi = std::max(hi, norm);
  }
  res.report.output_min_row_norm = lo;
  res.report.output_max_row_norm = hi;

  res.features = std::move(field);
  return res;
}

}  // namespace geofield
