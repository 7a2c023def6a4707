// Release gate: one self-contained check per shipping criterion, each printing
// a single PASS/FAIL line. The process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geofield/aggregation.hpp"
#include "geofield/anchors.hpp"
#include "geofield/cli.hpp"
#include "geofield/cloud.hpp"
#include "geofield/config.hpp"
#include "geofield/fpfh.hpp"
#include "geofield/io.hpp"
#include "geofield/superpoints.hpp"
#include "geofield/tasks.hpp"
#include "geofield/transport.hpp"
#include "test_util.hpp"

using namespace geofield;
using namespace testutil;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;
int g_index = 0;

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

struct Gate {
  bool ok = true;
  std::string detail;

  void note(const std::string& text) {
    if (!detail.empty()) detail += ", ";
    detail += text;
  }
  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += ", ";
      detail += "VIOLATED: " + what;
    }
  }
};

template <typename Body>
void criterion(const char* name, Body&& body) {
  ++g_index;
  Gate gate;
  const auto t0 = Clock::now();
  try {
    body(gate);
  } catch (const std::exception& e) {
    gate.ok = false;
    gate.note(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!gate.ok) ++g_failures;
  std::printf("[%d/8] %s %-22s (%5.2fs) %s\n", g_index, gate.ok ? "PASS" : "FAIL", name, secs,
              gate.detail.c_str());
  std::fflush(stdout);
}

double max_row_norm_dev(const Eigen::MatrixXd& m) {
  double worst = 0.0;
  for (int i = 0; i < m.rows(); ++i) worst = std::max(worst, std::abs(m.row(i).norm() - 1.0));
  return worst;
}

// ---------------------------------------------------------------------------

void sinkhorn_contract(Gate& g) {
  const auto t0 = Clock::now();
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> mass(0.2, 1.2);
  const int n = 20, m = 10;

  double worst_row = 0.0, worst_col = 0.0, worst_gap = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd cost = random_matrix(n, m, gen, 0.0, 2.0);
    Eigen::VectorXd rm(n), cm(m);
    for (int i = 0; i < n; ++i) rm[i] = mass(gen);
    for (int j = 0; j < m; ++j) cm[j] = mass(gen);
    const Marginals marg(rm, cm);

    const CouplingMatrix plan = sinkhorn_plan(cost, marg, 0.2, 500);
    const double row_res = (plan.gamma.rowwise().sum() - marg.row).cwiseAbs().sum();
    const double col_res = (plan.gamma.colwise().sum().transpose() - marg.col).cwiseAbs().sum();
    worst_row = std::max(worst_row, std::max(row_res, plan.row_residual));
    worst_col = std::max(worst_col, std::max(col_res, plan.col_residual));

    // sparse support vs the +inf-cost dense formulation
    std::vector<std::vector<int>> members(m);
    std::vector<std::vector<double>> costs(m);
    Eigen::MatrixXd fenced =
        Eigen::MatrixXd::Constant(n, m, std::numeric_limits<double>::infinity());
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        if (j == i % m || coin(gen) < 0.3) fenced(i, j) = cost(i, j);
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < n; ++i)
        if (std::isfinite(fenced(i, j))) {
          members[static_cast<size_t>(j)].push_back(i);
          costs[static_cast<size_t>(j)].push_back(fenced(i, j));
        }
    const CouplingMatrix dense = sinkhorn_plan(fenced, marg, 0.25, 300);
    const SparseCoupling sparse = sinkhorn_plan_sparse(n, members, costs, marg, 0.25, 300);
    worst_gap = std::max(worst_gap, (sparse.dense() - dense.gamma).cwiseAbs().maxCoeff());
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

  g.require(worst_row <= 1e-6, "row residual " + num(worst_row) + " > 1e-6");
  g.require(worst_col <= 1e-6, "column residual " + num(worst_col) + " > 1e-6");
  g.require(worst_gap <= 1e-8, "sparse/dense gap " + num(worst_gap) + " > 1e-8");
  g.require(secs < 5.0, "runtime " + num(secs) + "s >= 5s");
  g.note("residuals<=" + num(std::max(worst_row, worst_col)) + " gap<=" + num(worst_gap));
}

void fpfh_rigid_invariance(Gate& g) {
  const auto t0 = Clock::now();
  const Scene scene = make_scene(250, 250, 8, 0.3, 21);
  const FpfhParams params = scene_fpfh_params(500);
  const Eigen::MatrixXd base = compute_fpfh(scene.cloud, params, 1);

  std::mt19937 gen(22);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> shift(-2.0, 2.0);

  double drift = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Vector3d axis;
    do {
      axis << gauss(gen), gauss(gen), gauss(gen);
    } while (axis.norm() < 1e-6);
    axis.normalize();
    const Eigen::Matrix3d rot = Eigen::AngleAxisd(angle(gen), axis).toRotationMatrix();
    const Eigen::RowVector3d t(shift(gen), shift(gen), shift(gen));

    PointCloud moved = scene.cloud;
    moved.coords = scene.cloud.coords * rot.transpose();
    moved.coords.rowwise() += t;

    const Eigen::MatrixXd desc = compute_fpfh(moved, params, 1);
    drift = std::max(drift, (desc - base).cwiseAbs().maxCoeff());
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

  g.require(drift <= 1e-3, "descriptor drift " + num(drift) + " > 1e-3");
  g.require(secs < 10.0, "runtime " + num(secs) + "s >= 10s");
  g.note("drift<=" + num(drift));
}

void oracle_equivalence(Gate& g) {
  std::mt19937 gen(31);
  const PointCloud cloud = random_cloud(200, gen);
  const KdTree tree(cloud.coords);

  bool knn_ok = true, radius_ok = true;
  for (int q = 0; q < 40 && (knn_ok || radius_ok); ++q) {
    Eigen::Vector3d query;
    if (q % 2 == 0) query = cloud.coords.row((q * 5) % 200).transpose();
    else query = random_matrix(1, 3, gen).row(0).transpose();
    for (int k : {1, 7, 33})
      if (tree.knn(query, k) != knn_brute(cloud.coords, query, k, false)) knn_ok = false;
    for (double r : {0.05, 0.15, 0.4})
      if (tree.radius_search(query, r) != radius_brute(cloud.coords, query, r))
        radius_ok = false;
  }
  g.require(knn_ok, "knn disagrees with the brute-force oracle");
  g.require(radius_ok, "radius search disagrees with the brute-force oracle");

  bool fps_ok = true;
  for (int count : {1, 17, 200})
    for (int start : {0, 13})
      if (fps_sample(cloud, count, start) != fps_brute(cloud.coords, count, start))
        fps_ok = false;
  g.require(fps_ok, "farthest point sampling disagrees with the oracle");

  // seed relevance values against the direct formula
  const Eigen::MatrixXd geo = random_unit_rows(200, 6, gen);
  const FeatureField vlm = FeatureField::normalized(random_unit_rows(200, 9, gen));
  SuperpointState state = init_seeds(cloud, geo, vlm, 12, 0);
  build_neighbor_lists(state, tree, 9);
  compute_mu(state, vlm.values);
  double mu_gap = 0.0;
  for (int j = 0; j < state.count(); ++j) {
    double acc = 0.0;
    for (int i : state.neighbor_lists[static_cast<size_t>(j)])
      acc += 0.5 * (1.0 + vlm.values.row(i).dot(state.seeds_f.row(j)));
    acc /= static_cast<double>(state.neighbor_lists[static_cast<size_t>(j)].size());
    mu_gap = std::max(mu_gap, std::abs(acc - state.mu[j]));
  }
  g.require(mu_gap <= 1e-10, "seed relevance gap " + num(mu_gap) + " > 1e-10");

  AnchorSet anchors;
  anchors.visual = random_unit_rows(5, 9, gen);
  anchors.geometric = random_unit_rows(5, 6, gen);
  anchors.density = Eigen::VectorXd::Ones(5);
  const Eigen::MatrixXd fv = random_unit_rows(150, 9, gen);
  const Eigen::MatrixXd fg = random_unit_rows(150, 6, gen);
  const std::vector<int> got = assign_points(anchors, fv, fg);
  bool assign_ok = true;
  for (int i = 0; i < 150; ++i) {
    int best = 0;
    double best_val = fv.row(i).dot(anchors.visual.row(0)) * fg.row(i).dot(anchors.geometric.row(0));
    for (int a = 1; a < 5; ++a) {
      const double val =
          fv.row(i).dot(anchors.visual.row(a)) * fg.row(i).dot(anchors.geometric.row(a));
      if (val > best_val) {
        best_val = val;
        best = a;
      }
    }
    if (got[static_cast<size_t>(i)] != best) assign_ok = false;
  }
  g.require(assign_ok, "anchor assignment disagrees with the argmax oracle");

  double miou_gap = 0.0;
  std::uniform_int_distribution<int> lab(0, 4);
  for (int trial = 0; trial < 8; ++trial) {
    std::vector<int> pred(180), gt(180);
    for (int i = 0; i < 180; ++i) {
      pred[static_cast<size_t>(i)] = lab(gen);
      gt[static_cast<size_t>(i)] = lab(gen);
    }
    miou_gap = std::max(
        miou_gap, std::abs(miou(pred, gt, 4).mean_iou - miou_brute(pred, gt, 4)));
  }
  g.require(miou_gap <= 1e-10, "miou gap " + num(miou_gap) + " > 1e-10");
  g.note("all oracles matched");
}

void fixed_point_suite(Gate& g) {
  const int n = 150, dim = 9;
  std::mt19937 gen(44);
  const PointCloud cloud = random_cloud(n, gen);
  const Eigen::MatrixXd geo = random_unit_rows(n, 6, gen);

  Eigen::RowVectorXd v = Eigen::RowVectorXd::LinSpaced(dim, 0.5, 1.5);
  v /= v.norm();
  Eigen::MatrixXd raw(n, dim);
  for (int i = 0; i < n; ++i) raw.row(i) = v;
  const FeatureField field = FeatureField::normalized(std::move(raw));

  PipelineConfig config;
  config.gamma_iters = 2;
  config.n_super = 14;
  config.k1 = 12;
  config.k2 = 10;
  config.sh_iters = 3;
  config.ms_iters = 15;
  config.bandwidth_rank = 4;
  config.ot_iters = 30;

  const KdTree tree(cloud.coords);
  SuperpointState state =
      refine(init_seeds(cloud, geo, field, config.n_super, 0), cloud, geo, field, config);

  auto worst_cos = [&](const Eigen::MatrixXd& rows) {
    double worst = 1.0;
    for (int i = 0; i < rows.rows(); ++i)
      worst = std::min(worst, rows.row(i).dot(v) / rows.row(i).norm());
    return worst;
  };

  const FeatureField local = local_aggregate(state, cloud, tree, geo, field, config.k2, 3);
  g.require(worst_cos(local.values) >= 1.0 - 1e-6,
            "local stage moved a constant field, cos " + num(worst_cos(local.values)));

  const Eigen::MatrixXd pooled = pool_to_superpoints(state, local);
  const Eigen::MatrixXd global_out =
      global_aggregate(pooled, state.seeds_g, state.seeds_p, state.scales.d_c, 3);
  g.require(worst_cos(global_out) >= 1.0 - 1e-6,
            "global stage moved a constant field, cos " + num(worst_cos(global_out)));

  const FeatureField sp = superpoint_to_point(cloud, local, state.seeds_p, global_out,
                                              state.scales.d_c, 3, CoordKernel::Tanh);
  g.require(worst_cos(sp.values) >= 1.0 - 1e-6,
            "broadcast stage moved a constant field, cos " + num(worst_cos(sp.values)));

  AnchorSet anchors;
  anchors.visual = v;
  anchors.geometric = geo.row(0);
  anchors.density = Eigen::VectorXd::Ones(1);
  const FeatureField projected = anchor_project(sp, geo, anchors, 0.7);
  g.require(worst_cos(projected.values) >= 1.0 - 1e-6,
            "anchor projection moved a constant field, cos " + num(worst_cos(projected.values)));

  const PipelineResult result = run_pipeline(cloud, field, geo, config);
  g.require(worst_cos(result.features.values) >= 1.0 - 1e-6,
            "full pipeline moved a constant field, cos " + num(worst_cos(result.features.values)));
  g.note("cos=1 within 1e-6 at every stage");
}

void stochasticity_and_norms(Gate& g) {
  double worst_dev = 0.0;
  double worst_norm = 0.0;
  bool all_valid = true;

  for (int run = 0; run < 20; ++run) {
    std::mt19937 gen(600 + run);
    const int n = 512;
    const PointCloud cloud = random_cloud(n, gen);
    const FeatureField vlm = FeatureField::normalized(random_unit_rows(n, 12, gen));
    const Eigen::MatrixXd geo = random_unit_rows(n, 8, gen);

    PipelineConfig config;
    config.gamma_iters = 2;
    config.n_super = 32;
    config.k1 = 16;
    config.k2 = 12;
    config.sh_iters = 3;
    config.ms_iters = 15;
    config.bandwidth_rank = 8;

    const PipelineResult result = run_pipeline(cloud, vlm, geo, config);
    worst_dev = std::max(worst_dev, result.report.mixing_row_sum_max_dev);
    worst_norm = std::max(worst_norm, std::abs(result.report.output_min_row_norm - 1.0));
    worst_norm = std::max(worst_norm, std::abs(result.report.output_max_row_norm - 1.0));

    // per-stage re-run with a fresh diagnostic accumulator
    MixingDiag diag;
    const KdTree tree(cloud.coords);
    const FeatureField local =
        local_aggregate(result.state, cloud, tree, geo, vlm, config.k2, config.sh_iters, 1, &diag);
    const Eigen::MatrixXd pooled = pool_to_superpoints(result.state, local);
    const Eigen::MatrixXd global_out =
        global_aggregate(pooled, result.state.seeds_g, result.state.seeds_p,
                         result.report.d_c, config.sh_iters, &diag);
    const FeatureField sp =
        superpoint_to_point(cloud, local, result.state.seeds_p, global_out, result.report.d_c,
                            config.sh_iters, CoordKernel::Tanh, &diag);
    const FeatureField projected = anchor_project(sp, geo, result.anchors, 1.0);

    worst_dev = std::max(worst_dev, diag.max_row_sum_dev);
    for (const auto* stage : {&local.values, &sp.values, &projected.values})
      worst_norm = std::max(worst_norm, max_row_norm_dev(*stage));
    worst_norm = std::max(worst_norm, max_row_norm_dev(pooled));
    worst_norm = std::max(worst_norm, max_row_norm_dev(global_out));
    for (uint8_t flag : local.valid) all_valid = all_valid && flag;
    for (uint8_t flag : sp.valid) all_valid = all_valid && flag;
    for (uint8_t flag : projected.valid) all_valid = all_valid && flag;
  }

  g.require(worst_dev <= 1e-9, "mixing row sum deviation " + num(worst_dev) + " > 1e-9");
  g.require(worst_norm <= 1e-5, "output row norm deviation " + num(worst_norm) + " > 1e-5");
  g.require(all_valid, "a stage produced an invalid row on random input");
  g.note("row sums 1+-" + num(worst_dev) + " norms 1+-" + num(worst_norm));
}

// Regression floors frozen from the first green run of the synthetic scene
// (accuracy 0.9902 -> 0.9932, cosine 0.6459 -> 0.8375); the floors sit below
// the observed gains by enough to absorb platform rounding, and the strict
// pre/post inequalities remain the primary check.
constexpr double kAccuracyGainFloor = 0.0015;
constexpr double kCosineGainFloor = 0.15;

void synthetic_denoising(Gate& g) {
  const auto t0 = Clock::now();
  const Scene scene = make_scene(512, 512, 16, 0.3, 4242);
  const Eigen::MatrixXd geo = compute_fpfh(scene.cloud, scene_fpfh_params(1024), 0);
  const FeatureField field = FeatureField::normalized(scene.vlm);
  const TextFeatureMatrix text(scene.prototypes);

  auto mean_cos = [&](const Eigen::MatrixXd& rows) {
    double acc = 0.0;
    for (int i = 0; i < rows.rows(); ++i)
      acc += rows.row(i).dot(scene.prototypes.row(scene.gt[static_cast<size_t>(i)])) /
             rows.row(i).norm();
    return acc / static_cast<double>(rows.rows());
  };

  const double pre_acc = accuracy(segment(field, text), scene.gt);
  const double pre_cos = mean_cos(field.values);

  PipelineConfig config;
  config.gamma_iters = 4;
  config.n_super = 64;
  config.k1 = 24;
  config.k2 = 16;
  config.sh_iters = 3;
  config.ms_iters = 20;
  config.bandwidth_rank = 8;
  // Heavy feature noise (sigma 0.3 on 16 dims) leaves the two class modes
  // similar enough that suppression keeps a single anchor; a partial blend
  // denoises without letting that lone anchor flatten the class structure.
  config.blend = 0.25;

  const PipelineResult result = run_pipeline(scene.cloud, field, geo, config);
  const double post_acc = accuracy(segment(result.features, text), scene.gt);
  const double post_cos = mean_cos(result.features.values);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

  g.require(post_acc > pre_acc, "accuracy did not improve: " + num(pre_acc) + " -> " +
                                    num(post_acc));
  g.require(post_cos > pre_cos, "prototype cosine did not improve: " + num(pre_cos) + " -> " +
                                    num(post_cos));
  g.require(post_acc - pre_acc >= kAccuracyGainFloor,
            "accuracy gain " + num(post_acc - pre_acc) + " fell under the frozen floor " +
                num(kAccuracyGainFloor));
  g.require(post_cos - pre_cos >= kCosineGainFloor,
            "cosine gain " + num(post_cos - pre_cos) + " fell under the frozen floor " +
                num(kCosineGainFloor));
  g.require(secs < 30.0, "runtime " + num(secs) + "s >= 30s");
  g.note("accuracy " + num(pre_acc) + "->" + num(post_acc) + " cosine " + num(pre_cos) + "->" +
         num(post_cos));
}

void preset_fidelity(Gate& g) {
  struct Row {
    const char* name;
    int gamma, n_super, k1, k2, m_ref, k3, k4;
    double r1, r2;
  };
  const Row rows[] = {
      {"modelnet40", 16, 256, 32, 24, 512, 32, 100, 0.04, 0.08},
      {"objectscannn", 16, 256, 32, 24, 512, 32, 100, 0.04, 0.08},
      {"shapenetpart", 16, 256, 32, 24, 512, 32, 100, 0.04, 0.08},
      {"scannet", 8, 3000, 48, 32, 4800, 32, 100, 0.05, 0.10},
      {"nuscenes", 8, 2400, 48, 32, 5200, 32, 100, 0.05, 0.10},
  };
  for (const Row& row : rows) {
    PipelineConfig pipeline;
    FpfhParams fpfh;
    apply_preset(row.name, pipeline, fpfh);
    const bool match = pipeline.gamma_iters == row.gamma && pipeline.n_super == row.n_super &&
                       pipeline.k1 == row.k1 && pipeline.k2 == row.k2 &&
                       fpfh.m_ref == row.m_ref && fpfh.k3 == row.k3 && fpfh.k4 == row.k4 &&
                       fpfh.r1 == row.r1 && fpfh.r2 == row.r2;
    g.require(match, std::string("preset ") + row.name + " drifted from its published numbers");
  }
  g.note("5 presets verified");
}

void thread_determinism(Gate& g) {
  TempDir dir("accept_threads");
  std::mt19937 gen(88);
  const int n = 192;
  const Scene scene = make_scene(n / 2, n / 2, 10, 0.3, 88);
  const std::string ply = dir.file("cloud.ply");
  write_ply(ply, scene.cloud);
  const std::string vlm = dir.file("vlm.gztn");
  write_tensor(vlm, Tensor::from_matrix(scene.vlm));
  const std::string geo = dir.file("geo.gztn");
  write_tensor(geo, Tensor::from_matrix(random_unit_rows(n, 6, gen)));

  const std::string cfg = dir.file("run.cfg");
  {
    std::ofstream out(cfg);
    out << "gamma_iters=3\nn_super=16\nk1=14\nk2=10\nsh_iters=3\nms_iters=12\n"
        << "bandwidth_rank=4\n";
  }

  auto slurp = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };

  std::vector<std::string> outputs;
  for (const char* threads : {"1", "2", "0"}) {
    const std::string out_path = dir.file(std::string("out_") + threads + ".gztn");
    const std::vector<std::string> args = {"geofield", "aggregate", "--cloud", ply,
                                           "--vlm",    vlm,         "--geo",   geo,
                                           "--config", cfg,         "--out",   out_path,
                                           "--threads", threads};
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    const int code = cli_dispatch(static_cast<int>(argv.size()), argv.data());
    g.require(code == 0, std::string("aggregate --threads ") + threads + " exited with " +
                             std::to_string(code));
    outputs.push_back(slurp(out_path));
    g.require(!outputs.back().empty(), "empty output tensor");
  }
  g.require(outputs[0] == outputs[1], "outputs differ between 1 and 2 threads");
  g.require(outputs[0] == outputs[2], "outputs differ between 1 thread and all cores");
  g.note("byte-identical across 1/2/all workers");
}

}  // namespace

int main() {
  std::printf("release acceptance gate\n");
  criterion("sinkhorn-contract", sinkhorn_contract);
  criterion("fpfh-rigidity", fpfh_rigid_invariance);
  criterion("oracle-equivalence", oracle_equivalence);
  criterion("fixed-points", fixed_point_suite);
  criterion("mixing-and-norms", stochasticity_and_norms);
  criterion("scene-denoising", synthetic_denoising);
  criterion("preset-fidelity", preset_fidelity);
  criterion("thread-determinism", thread_determinism);
  std::printf("%s (%d/8 passed)\n", g_failures == 0 ? "ALL CRITERIA PASSED" : "GATE FAILED",
              8 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
