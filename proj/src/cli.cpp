#include "geofield/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "geofield/aggregation.hpp"
#include "geofield/config.hpp"
#include "geofield/fpfh.hpp"
#include "geofield/io.hpp"
#include "geofield/tasks.hpp"

namespace geofield {

namespace {

std::string one_line(const char* msg) {
  std::string s(msg);
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

bool ends_with_ply(const std::string& path) {
  if (path.size() < 4) return false;
  std::string tail = path.substr(path.size() - 4);
  std::transform(tail.begin(), tail.end(), tail.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return tail == ".ply";
}

FeatureField load_field(const std::string& path, const char* what) {
  Eigen::MatrixXd raw = read_tensor(path).to_matrix();
  try {
    return FeatureField::normalized(std::move(raw));
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(what) + " " + path + ": " + e.what());
  }
}

std::vector<int> load_label_file(const std::string& path) {
  if (ends_with_ply(path)) {
    const PointCloud cloud = read_ply(path);
    if (!cloud.labels) throw std::runtime_error(path + ": cloud has no label property");
    return std::vector<int>(cloud.labels->data(), cloud.labels->data() + cloud.labels->size());
  }
  return read_labels(path);
}

void write_report(const std::string& path, const PipelineReport& report) {
  nlohmann::json j;
  j["n_points"] = report.n_points;
  j["n_super"] = report.n_super;
  j["anchor_count"] = report.anchor_count;
  j["covered"] = report.covered;
  j["uncovered"] = report.uncovered;
  j["plan_row_residual"] = report.plan_row_residual;
  j["plan_col_residual"] = report.plan_col_residual;
  j["meanshift_iterations"] = report.meanshift_iterations;
  j["meanshift_final_shift"] = report.meanshift_final_shift;
  j["bandwidth_visual"] = report.bandwidth_visual;
  j["bandwidth_geometric"] = report.bandwidth_geometric;
  j["d_c"] = report.d_c;
  j["d_g"] = report.d_g;
  j["mixing_row_sum_max_dev"] = report.mixing_row_sum_max_dev;
  j["output_min_row_norm"] = report.output_min_row_norm;
  j["output_max_row_norm"] = report.output_max_row_norm;
  nlohmann::json timings = nlohmann::json::object();
  for (const auto& [stage, ms] : report.timings_ms) timings[stage] = ms;
  j["timings_ms"] = timings;

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error(path + ": write failed");
}

// --- subcommand option bags -------------------------------------------------

struct FpfhArgs {
  std::string input, out, preset;
  FpfhParams params;
  int threads = 1;
  CLI::Option *o_mref = nullptr, *o_k3 = nullptr, *o_k4 = nullptr, *o_r1 = nullptr,
              *o_r2 = nullptr;
};

struct FuseArgs {
  int points = 0;
  std::vector<std::string> indices, features, weights;
  std::string out;
};

struct AggregateArgs {
  std::string cloud, vlm, geo, config, anchors, out, report;
  int threads = 1;
  CLI::Option* o_threads = nullptr;
};

struct ClassifyArgs {
  std::string features, text, out;
  std::vector<std::string> aux;
};

struct SegmentArgs {
  std::string features, text, out;
};

struct EvalArgs {
  std::string pred, gt, metric;
  int classes = 0;
  CLI::Option* o_classes = nullptr;
};

struct AnchorsArgs {
  bool save = false;
  std::vector<std::string> merge;
  std::string cloud, vlm, geo, config, out;
  int rank = 16;
  bool both_spaces = true;
};

int run_fpfh(const FpfhArgs& a) {
  FpfhParams params;
  if (!a.preset.empty()) {
    PipelineConfig scratch;
    apply_preset(a.preset, scratch, params);
  }
  if (a.o_mref->count()) params.m_ref = a.params.m_ref;
  if (a.o_k3->count()) params.k3 = a.params.k3;
  if (a.o_k4->count()) params.k4 = a.params.k4;
  if (a.o_r1->count()) params.r1 = a.params.r1;
  if (a.o_r2->count()) params.r2 = a.params.r2;
  params.validate();

  const PointCloud cloud = read_ply(a.input);
  const Eigen::MatrixXd descriptors = compute_fpfh(cloud, params, a.threads);
  write_tensor(a.out, Tensor::from_matrix(descriptors));
  return 0;
}

int run_fuse(const FuseArgs& a) {
  if (a.indices.size() != a.features.size())
    throw std::runtime_error("fuse-views: --indices and --features must be given once per view");
  if (!a.weights.empty() && a.weights.size() != a.indices.size())
    throw std::runtime_error("fuse-views: --weights, when present, must be given once per view");
  if (a.indices.empty()) throw std::runtime_error("fuse-views: at least one view is required");

  std::vector<ViewProjection> views;
  for (size_t v = 0; v < a.indices.size(); ++v) {
    ViewProjection view;
    const Eigen::VectorXd idx = read_tensor(a.indices[v]).to_vector();
    view.point_indices.resize(idx.size());
    for (Eigen::Index i = 0; i < idx.size(); ++i) {
      const double x = idx[i];
      if (x != std::floor(x))
        throw std::runtime_error(a.indices[v] + ": index " + std::to_string(x) +
                                 " is not an integer");
      view.point_indices[static_cast<size_t>(i)] = static_cast<int>(x);
    }
    view.features = read_tensor(a.features[v]).to_matrix();
    if (a.weights.empty())
      view.weights = Eigen::VectorXd::Ones(idx.size());
    else
      view.weights = read_tensor(a.weights[v]).to_vector();
    views.push_back(std::move(view));
  }
  const FeatureField fused = fuse_views(views, a.points);
  write_tensor(a.out, Tensor::from_matrix(fused.values));
  return 0;
}

int run_aggregate(const AggregateArgs& a) {
  RunConfig cfg;
  if (!a.config.empty()) cfg = parse_run_config(a.config);
  if (a.o_threads->count()) cfg.pipeline.threads = a.threads;
  cfg.pipeline.validate();

  const PointCloud cloud = read_ply(a.cloud);
  const FeatureField vlm = load_field(a.vlm, "vlm features");
  const FeatureField geo = load_field(a.geo, "geometric features");

  AnchorSet bank;
  const AnchorSet* external = nullptr;
  if (!a.anchors.empty()) {
    bank = read_anchor_bank(a.anchors);
    external = &bank;
  }

  const PipelineResult result = run_pipeline(cloud, vlm, geo.values, cfg.pipeline, external);
  write_tensor(a.out, Tensor::from_matrix(result.features.values));
  if (!a.report.empty()) write_report(a.report, result.report);
  return 0;
}

int run_classify(const ClassifyArgs& a) {
  const FeatureField features = load_field(a.features, "features");
  const TextFeatureMatrix text(read_tensor(a.text).to_matrix());
  std::vector<Eigen::VectorXd> aux;
  for (const std::string& path : a.aux) aux.push_back(read_tensor(path).to_vector());
  const ClassifyResult result = classify(features, text, aux);
  write_labels(a.out, {result.label});
  return 0;
}

int run_segment(const SegmentArgs& a) {
  const FeatureField features = load_field(a.features, "features");
  const TextFeatureMatrix text(read_tensor(a.text).to_matrix());
  write_labels(a.out, segment(features, text));
  return 0;
}

int run_eval(const EvalArgs& a) {
  const std::vector<int> pred = load_label_file(a.pred);
  const std::vector<int> gt = load_label_file(a.gt);

  double value = 0.0;
  if (a.metric == "miou") {
    int classes = a.classes;
    if (!a.o_classes->count()) {
      int max_label = -1;
      for (int v : gt) max_label = std::max(max_label, v);
      if (max_label < 0) throw std::runtime_error("eval: ground truth has no usable labels");
      classes = max_label + 1;
    }
    value = miou(pred, gt, classes).mean_iou;
  } else if (a.metric == "accuracy") {
    value = accuracy(pred, gt);
  } else {
    throw std::runtime_error("eval: metric must be miou or accuracy, got '" + a.metric + "'");
  }

  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s %.6f", a.metric.c_str(), value);
  std::cout << buf << "\n";
  return 0;
}

int run_anchors(const AnchorsArgs& a) {
  if (a.save == !a.merge.empty())
    throw std::runtime_error("anchors: choose exactly one of --save or --merge");

  if (a.save) {
    if (a.cloud.empty() || a.vlm.empty() || a.geo.empty())
      throw std::runtime_error("anchors --save needs --cloud, --vlm and --geo");
    RunConfig cfg;
    if (!a.config.empty()) cfg = parse_run_config(a.config);
    const PointCloud cloud = read_ply(a.cloud);
    const FeatureField vlm = load_field(a.vlm, "vlm features");
    const FeatureField geo = load_field(a.geo, "geometric features");
    write_anchor_bank(a.out, compute_anchors(cloud, vlm, geo.values, cfg.pipeline));
    return 0;
  }

  std::vector<AnchorSet> sets;
  for (const std::string& path : a.merge) sets.push_back(read_anchor_bank(path));
  write_anchor_bank(a.out, build_anchor_bank(sets, a.both_spaces, a.rank));
  return 0;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
  CLI::App app{"point-cloud feature field refinement toolkit"};
  app.require_subcommand(1);

  FpfhArgs fa;
  CLI::App* cmd_fpfh = app.add_subcommand("fpfh", "compute 33-d geometric descriptors");
  cmd_fpfh->add_option("--input", fa.input, "input cloud (.ply)")->required();
  cmd_fpfh->add_option("--out", fa.out, "output descriptor tensor")->required();
  cmd_fpfh->add_option("--preset", fa.preset, "dataset preset name");
  fa.o_mref = cmd_fpfh->add_option("--mref", fa.params.m_ref, "reference point count");
  fa.o_k3 = cmd_fpfh->add_option("--k3", fa.params.k3, "normal-estimation neighbors");
  fa.o_k4 = cmd_fpfh->add_option("--k4", fa.params.k4, "histogram neighbors");
  fa.o_r1 = cmd_fpfh->add_option("--r1", fa.params.r1, "normal-estimation radius");
  fa.o_r2 = cmd_fpfh->add_option("--r2", fa.params.r2, "histogram radius");
  cmd_fpfh->add_option("--threads", fa.threads, "worker threads (0 = all cores)");

  FuseArgs fu;
  CLI::App* cmd_fuse = app.add_subcommand("fuse-views", "fuse per-view features onto points");
  cmd_fuse->add_option("--points", fu.points, "total point count")->required();
  cmd_fuse->add_option("--indices", fu.indices, "per-view point-index tensor")->required();
  cmd_fuse->add_option("--features", fu.features, "per-view feature tensor")->required();
  cmd_fuse->add_option("--weights", fu.weights, "per-view weight tensor");
  cmd_fuse->add_option("--out", fu.out, "output fused tensor")->required();

  AggregateArgs ag;
  CLI::App* cmd_agg = app.add_subcommand("aggregate", "run the feature refinement pipeline");
  cmd_agg->add_option("--cloud", ag.cloud, "input cloud (.ply)")->required();
  cmd_agg->add_option("--vlm", ag.vlm, "per-point vlm feature tensor")->required();
  cmd_agg->add_option("--geo", ag.geo, "per-point geometric feature tensor")->required();
  cmd_agg->add_option("--config", ag.config, "key=value run configuration");
  cmd_agg->add_option("--anchors", ag.anchors, "anchor bank to project onto");
  cmd_agg->add_option("--out", ag.out, "output refined tensor")->required();
  cmd_agg->add_option("--report", ag.report, "write a JSON run report here");
  ag.o_threads = cmd_agg->add_option("--threads", ag.threads, "override configured threads");

  ClassifyArgs cl;
  CLI::App* cmd_classify = app.add_subcommand("classify", "predict one label for a whole cloud");
  cmd_classify->add_option("--features", cl.features, "refined feature tensor")->required();
  cmd_classify->add_option("--text", cl.text, "class prototype tensor")->required();
  cmd_classify->add_option("--aux", cl.aux, "auxiliary global feature vectors");
  cmd_classify->add_option("--out", cl.out, "output label file")->required();

  SegmentArgs se;
  CLI::App* cmd_segment = app.add_subcommand("segment", "predict a label per point");
  cmd_segment->add_option("--features", se.features, "refined feature tensor")->required();
  cmd_segment->add_option("--text", se.text, "class prototype tensor")->required();
  cmd_segment->add_option("--out", se.out, "output label file")->required();

  EvalArgs ev;
  CLI::App* cmd_eval = app.add_subcommand("eval", "score predictions against ground truth");
  cmd_eval->add_option("--pred", ev.pred, "predicted labels (.txt or .ply)")->required();
  cmd_eval->add_option("--gt", ev.gt, "ground-truth labels (.txt or .ply)")->required();
  cmd_eval->add_option("--metric", ev.metric, "miou or accuracy")->required();
  ev.o_classes = cmd_eval->add_option("--classes", ev.classes, "class count for miou");

  AnchorsArgs an;
  CLI::App* cmd_anchors = app.add_subcommand("anchors", "build or merge anchor banks");
  cmd_anchors->add_flag("--save", an.save, "compute a bank from one cloud");
  cmd_anchors->add_option("--merge", an.merge, "banks to merge");
  cmd_anchors->add_option("--cloud", an.cloud, "input cloud (.ply)");
  cmd_anchors->add_option("--vlm", an.vlm, "per-point vlm feature tensor");
  cmd_anchors->add_option("--geo", an.geo, "per-point geometric feature tensor");
  cmd_anchors->add_option("--config", an.config, "key=value run configuration");
  cmd_anchors->add_option("--out", an.out, "output bank path")->required();
  cmd_anchors->add_option("--rank", an.rank, "bandwidth neighbor rank for merges");
  cmd_anchors->add_option("--nms-both", an.both_spaces,
                          "suppress only when close in both spaces (default true)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (cmd_fpfh->parsed()) return run_fpfh(fa);
    if (cmd_fuse->parsed()) return run_fuse(fu);
    if (cmd_agg->parsed()) return run_aggregate(ag);
    if (cmd_classify->parsed()) return run_classify(cl);
    if (cmd_segment->parsed()) return run_segment(se);
    if (cmd_eval->parsed()) return run_eval(ev);
    if (cmd_anchors->parsed()) return run_anchors(an);
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand given\n";
  return 2;
}

}  // namespace geofield
