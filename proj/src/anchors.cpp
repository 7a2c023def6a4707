#include "geofield/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "geofield/feature_field.hpp"
#include "geofield/parallel.hpp"

namespace geofield {

namespace {

constexpr double kBandwidthMin = 1e-4;
constexpr double kBandwidthMax = 1.0;
constexpr double kConvergedShift = 1e-6;
// exp() overflows near 709; staying under this bound leaves room for the sums.
constexpr double kMaxExponent = 600.0;

Eigen::MatrixXd unit_rows(Eigen::MatrixXd m) {
  normalize_rows(m);
  return m;
}

}  // namespace

double estimate_bandwidth(const Eigen::MatrixXd& rows, int neighbor_rank) {
  const int n = static_cast<int>(rows.rows());
  if (neighbor_rank < 1) throw std::invalid_argument("bandwidth: neighbor_rank must be >= 1");
  if (n <= neighbor_rank)
    throw std::invalid_argument("bandwidth: need more than " + std::to_string(neighbor_rank) +
                                " rows, got " + std::to_string(n));
  if (!rows.allFinite()) throw std::invalid_argument("bandwidth: non-finite feature rows");

  const Eigen::MatrixXd u = unit_rows(rows);
  double acc = 0.0;
  std::vector<double> sims(static_cast<size_t>(n - 1));
  for (int i = 0; i < n; ++i) {
    size_t w = 0;
    for (int j = 0; j < n; ++j)
      if (j != i) sims[w++] = u.row(i).dot(u.row(j));
    // neighbor_rank-th most similar other row, descending
    std::nth_element(sims.begin(), sims.begin() + (neighbor_rank - 1), sims.end(),
                     std::greater<double>());
    acc += sims[static_cast<size_t>(neighbor_rank - 1)];
  }
  return std::clamp(acc / n, kBandwidthMin, kBandwidthMax);
}

MeanShiftResult meanshift(const Eigen::MatrixXd& points_v, const Eigen::MatrixXd& points_g,
                          const Eigen::MatrixXd& init_v, const Eigen::MatrixXd& init_g,
                          const Bandwidths& bw, int iters, int threads) {
  const int n = static_cast<int>(points_v.rows());
  const int l = static_cast<int>(init_v.rows());
  if (n < 1 || l < 1) throw std::invalid_argument("meanshift: empty input");
  if (points_g.rows() != n) throw std::invalid_argument("meanshift: point row count mismatch");
  if (init_g.rows() != l) throw std::invalid_argument("meanshift: centroid row count mismatch");
  if (init_v.cols() != points_v.cols() || init_g.cols() != points_g.cols())
    throw std::invalid_argument("meanshift: feature width mismatch");
  if (!(bw.visual > 0.0) || !(bw.geometric > 0.0))
    throw std::invalid_argument("meanshift: bandwidths must be > 0");
  if (iters < 0) throw std::invalid_argument("meanshift: iters must be >= 0");

  const double iv = 1.0 / (bw.visual * bw.visual);
  const double ig = 1.0 / (bw.geometric * bw.geometric);
  // One global shift keeps exponentials finite for tiny bandwidths without
  // disturbing the weighted means or the relative density ordering.
  const double shift = std::max(0.0, iv + ig - kMaxExponent);

  const Eigen::MatrixXd pv = unit_rows(points_v);
  const Eigen::MatrixXd pg = unit_rows(points_g);

  MeanShiftResult res;
  res.visual = unit_rows(init_v);
  res.geometric = unit_rows(init_g);
  res.density = Eigen::VectorXd::Zero(l);

  Eigen::MatrixXd next_v(l, pv.cols()), next_g(l, pg.cols());
  Eigen::VectorXd shifts(l);
  auto round = [&](bool move) {
    parallel_for(0, l, threads, [&](int j) {
      const Eigen::VectorXd w =
          ((pv * res.visual.row(j).transpose() * iv + pg * res.geometric.row(j).transpose() * ig)
               .array() - shift)
              .exp()
              .matrix();
      const double mass = w.sum();
      res.density[j] = mass;
      if (!move) return;
      if (mass <= 0.0) {  // everything underflowed; the mode stays put
        next_v.row(j) = res.visual.row(j);
        next_g.row(j) = res.geometric.row(j);
        shifts[j] = 0.0;
        return;
      }
      Eigen::RowVectorXd cv = (w.transpose() * pv) / mass;
      Eigen::RowVectorXd cg = (w.transpose() * pg) / mass;
      const double nv = cv.norm(), ng = cg.norm();
      cv = nv >= kNormFloor ? Eigen::RowVectorXd(cv / nv) : res.visual.row(j).eval();
      cg = ng >= kNormFloor ? Eigen::RowVectorXd(cg / ng) : res.geometric.row(j).eval();
      shifts[j] = std::max((cv - res.visual.row(j)).norm(), (cg - res.geometric.row(j)).norm());
      next_v.row(j) = cv;
      next_g.row(j) = cg;
    });
  };

  if (iters == 0) {
    round(false);  // densities still reflect the (unchanged) initializers
    return res;
  }
  for (int t = 0; t < iters; ++t) {
    round(true);
    res.visual = next_v;
    res.geometric = next_g;
    res.iterations = t + 1;
    res.final_shift = shifts.maxCoeff();
    if (res.final_shift < kConvergedShift) break;
  }
  return res;
}

AnchorSet nms_centroids(const Eigen::MatrixXd& centroids_v, const Eigen::MatrixXd& centroids_g,
                        const Eigen::VectorXd& density, const Bandwidths& bw,
                        bool both_spaces) {
  const int l = static_cast<int>(centroids_v.rows());
  if (l < 1) throw std::invalid_argument("nms: no centroids");
  if (centroids_g.rows() != l || density.size() != l)
    throw std::invalid_argument("nms: centroid/density row count mismatch");
  if (!density.allFinite() || (density.array() < 0.0).any())
    throw std::invalid_argument("nms: densities must be finite and >= 0");

  const double tv = bw.visual / 2.0;
  const double tg = bw.geometric / 2.0;
  const Eigen::MatrixXd cv = unit_rows(centroids_v);
  const Eigen::MatrixXd cg = unit_rows(centroids_g);

  std::vector<char> alive(static_cast<size_t>(l), 1);
  std::vector<int> keep;
  for (int remaining = l; remaining > 0;) {
    int best = -1;
    for (int i = 0; i < l; ++i)
      if (alive[static_cast<size_t>(i)] && (best < 0 || density[i] > density[best])) best = i;
    keep.push_back(best);
    alive[static_cast<size_t>(best)] = 0;
    --remaining;
    for (int i = 0; i < l; ++i) {
      if (!alive[static_cast<size_t>(i)]) continue;
      const double sv = cv.row(i).dot(cv.row(best));
      const double sg = cg.row(i).dot(cg.row(best));
      const bool drop = both_spaces ? (sv > tv && sg > tg) : (sv > tv || sg > tg);
      if (drop) {
        alive[static_cast<size_t>(i)] = 0;
        --remaining;
      }
    }
  }

  AnchorSet out;
  const int kept = static_cast<int>(keep.size());
  out.visual.resize(kept, cv.cols());
  out.geometric.resize(kept, cg.cols());
  out.density.resize(kept);
  for (int r = 0; r < kept; ++r) {
    out.visual.row(r) = cv.row(keep[static_cast<size_t>(r)]);
    out.geometric.row(r) = cg.row(keep[static_cast<size_t>(r)]);
    out.density[r] = density[keep[static_cast<size_t>(r)]];
  }
  return out;
}

std::vector<int> assign_points(const AnchorSet& anchors, const Eigen::MatrixXd& features_v,
                               const Eigen::MatrixXd& features_g) {
  const int n = static_cast<int>(features_v.rows());
  const int l = anchors.count();
  if (l < 1) throw std::invalid_argument("assign_points: empty anchor set");
  if (features_g.rows() != n)
    throw std::invalid_argument("assign_points: feature row count mismatch");
  if (features_v.cols() != anchors.visual.cols() || features_g.cols() != anchors.geometric.cols())
    throw std::invalid_argument("assign_points: feature width mismatch");

  const Eigen::MatrixXd sv = features_v * anchors.visual.transpose();
  const Eigen::MatrixXd sg = features_g * anchors.geometric.transpose();
  std::vector<int> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_score = sv(i, 0) * sg(i, 0);
    for (int j = 1; j < l; ++j) {
      const double s = sv(i, j) * sg(i, j);
      if (s > best_score) {  // ties keep the lowest anchor index
        best_score = s;
        best = j;
      }
    }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

AnchorSet build_anchor_bank(const std::vector<AnchorSet>& sets, bool both_spaces,
                            int neighbor_rank) {
  if (sets.empty()) throw std::invalid_argument("anchor bank: no sets given");
  int total = 0;
  for (const auto& s : sets) {
    if (s.count() < 1) throw std::invalid_argument("anchor bank: an input set is empty");
    if (s.visual.cols() != sets[0].visual.cols() ||
        s.geometric.cols() != sets[0].geometric.cols())
      throw std::invalid_argument("anchor bank: feature widths differ between sets");
    total += s.count();
  }

  Eigen::MatrixXd cv(total, sets[0].visual.cols());
  Eigen::MatrixXd cg(total, sets[0].geometric.cols());
  Eigen::VectorXd density(total);
  int at = 0;
  for (const auto& s : sets) {
    cv.middleRows(at, s.count()) = s.visual;
    cg.middleRows(at, s.count()) = s.geometric;
    density.segment(at, s.count()) = s.density;
    at += s.count();
  }
  if (total == 1) return sets[0];

  // Small merged banks cannot honor the full rank; shrink it instead of
  // refusing the merge.
  const int rank = std::min(neighbor_rank, total - 1);
  const Bandwidths bw{estimate_bandwidth(cv, rank), estimate_bandwidth(cg, rank)};
  return nms_centroids(cv, cg, density, bw, both_spaces);
}

}  // namespace geofield
