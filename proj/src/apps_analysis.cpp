#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <ostream>

#include <json.hpp>

#include "msrf/apps.hpp"
#include "msrf/error.hpp"
#include "msrf/flowio.hpp"
#include "msrf/imagecore.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace msrf {

SeriesStats flag_over_one_std(std::span<const double> series) {
  SeriesStats s;
  if (series.empty()) return s;
  double sum = 0.0;
  for (double v : series) sum += v;
  s.mean = sum / static_cast<double>(series.size());
  double ss = 0.0;
  for (double v : series) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(series.size()));
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i] > s.mean + s.std) s.flagged.push_back(i);
  }
  return s;
}

std::string AnomalyReport::to_json() const {
  ojson j;
  j["epe"] = epe;
  j["mean"] = mean;
  j["std"] = std;
  j["flagged"] = flagged;
  ojson base = ojson::array();
  for (const auto& b : baseline_epe) base.push_back(b ? ojson(*b) : ojson(nullptr));
  j["baseline_epe"] = base;
  j["baseline_flagged"] = baseline_flagged;
  return j.dump(2);
}

namespace {

std::pair<int, int> capped_size(int w, int h, int max_dimension) {
  const int m = std::max(w, h);
  if (max_dimension <= 0 || m <= max_dimension) return {w, h};
  const double s = static_cast<double>(max_dimension) / m;
  return {std::max(1, static_cast<int>(std::lround(w * s))), std::max(1, static_cast<int>(std::lround(h * s)))};
}

void save_heatmap(const Plane& err, const EdgeMask& mask, const std::string& path) {
  const double peak = std::max(err.maxCoeff(), 1e-12);
  ImageBuffer img(static_cast<int>(err.cols()), static_cast<int>(err.rows()), 3, 0.0);
  for (int y = 0; y < err.rows(); ++y) {
    for (int x = 0; x < err.cols(); ++x) {
      const double v = mask(x, y) ? err(y, x) / peak : 0.0;
      img.channels[0](y, x) = v;
      img.channels[1](y, x) = v * v;
      img.channels[2](y, x) = 0.0;
    }
  }
  save_image(img, path);
}

}  // namespace

AnomalyReport detect_unexpected(const StructuredForest& forest, const CorpusManifest& frames,
                                const DetectOptions& options, std::ostream* log) {
  if (forest.config.label_dims() != 2) throw UsageError("unexpected-event detection needs a flow (D=2) model");
  if (frames.entries.size() < 2) throw DataError("unexpected-event detection needs at least 2 frames");
  if (options.heatmap_dir) fs::create_directories(*options.heatmap_dir);

  AnomalyReport report;
  std::optional<FlowField> previous;
  std::vector<double> baseline_values;
  std::vector<std::size_t> baseline_index;
  const CannyParams canny = forest.config.sampling.canny;

  for (std::size_t i = 0; i < frames.entries.size(); ++i) {
    const ManifestEntry& e = frames.entries[i];
    ImageBuffer img = load_image(frames.resolve(e.frame_path));
    FlowField measured = read_flo(frames.resolve(e.flow_path));
    if (img.width() != measured.width() || img.height() != measured.height()) {
      throw DataError("flow '" + e.flow_path + "' does not match frame '" + e.frame_path + "'");
    }
    const auto [w, h] = capped_size(img.width(), img.height(), options.max_dimension);
    if (w != img.width() || h != img.height()) {
      img = resize_image(img, w, h);
      measured = resize_flow(measured, w, h);
    }
    const DensePrediction pred = predict_flow_image(forest, img, canny);
    const FlowField predicted = to_flow_field(pred.field);
    const EdgeMask edges = canny_edges(img, canny);
    const bool any = edges.count() > 0;
    report.epe.push_back(any ? epe_at_mask(predicted, measured, edges) : 0.0);

    if (previous && previous->width() == w && previous->height() == h) {
      const double b = any ? epe_at_mask(*previous, measured, edges) : 0.0;
      report.baseline_epe.emplace_back(b);
      baseline_values.push_back(b);
      baseline_index.push_back(i);
    } else {
      report.baseline_epe.emplace_back(std::nullopt);
    }
    if (options.heatmap_dir) {
      char name[32];
      std::snprintf(name, sizeof name, "heatmap_%04zu.png", i);
      save_heatmap(epe_map(predicted, measured), edges, (fs::path(*options.heatmap_dir) / name).string());
    }
    if (log) *log << e.frame_path << "\tepe=" << report.epe.back() << '\n';
    previous = std::move(measured);
  }

  const SeriesStats stats = flag_over_one_std(report.epe);
  report.mean = stats.mean;
  report.std = stats.std;
  report.flagged = stats.flagged;
  for (std::size_t k : flag_over_one_std(baseline_values).flagged) report.baseline_flagged.push_back(baseline_index[k]);
  return report;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> PoolAssignment::histogram() const {
  std::vector<std::size_t> h(static_cast<std::size_t>(n_pools), 0);
  for (int p : pool) ++h[static_cast<std::size_t>(p)];
  return h;
}

PoolAssignment assign_flow_pools(const FlowField& flow, std::span<const GridLocation> locations, double tau0,
                                 std::optional<double> band_split) {
  PoolAssignment out;
  out.locations.assign(locations.begin(), locations.end());
  std::vector<double> mags;
  mags.reserve(locations.size());
  for (const GridLocation& l : locations) {
    if (l.x < 0 || l.y < 0 || l.x >= flow.width() || l.y >= flow.height()) {
      throw UsageError("pool location outside the flow field");
    }
    mags.push_back(std::hypot(flow.u(l.y, l.x), flow.v(l.y, l.x)));
  }
  if (band_split) {
    out.band_split = *band_split;
  } else {
    std::vector<double> moving;
    for (double m : mags) {
      if (m >= tau0) moving.push_back(m);
    }
    if (!moving.empty()) {
      std::sort(moving.begin(), moving.end());
      const std::size_t n = moving.size();
      out.band_split = n % 2 ? moving[n / 2] : 0.5 * (moving[n / 2 - 1] + moving[n / 2]);
    }
  }
  out.pool.reserve(locations.size());
  for (std::size_t i = 0; i < locations.size(); ++i) {
    if (mags[i] < tau0) {
      out.pool.push_back(0);
      continue;
    }
    const GridLocation& l = locations[i];
    double a = std::atan2(flow.v(l.y, l.x), flow.u(l.y, l.x));
    if (a < 0) a += 2 * std::numbers::pi;
    const int quadrant = std::min(3, static_cast<int>(a / (std::numbers::pi / 2)));
    const int band = mags[i] >= out.band_split ? 1 : 0;
    out.pool.push_back(1 + 2 * quadrant + band);
  }
  return out;
}

std::vector<GridLocation> dense_grid(int width, int height, int patch_size, int stride) {
  if (patch_size < 1 || patch_size % 2 == 0) throw UsageError("patch size must be odd and positive");
  if (stride < 1) throw UsageError("grid stride must be positive");
  const int half = patch_size / 2;
  std::vector<GridLocation> out;
  for (int y = half; y + half < height; y += stride) {
    for (int x = half; x + half < width; x += stride) out.push_back({x, y});
  }
  return out;
}

std::string PooledDescriptors::to_json() const {
  auto rows = [](const Eigen::MatrixXd& m) {
    ojson arr = ojson::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(m.cols());
      for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
      arr.push_back(row);
    }
    return arr;
  };
  ojson j;
  j["n_pools"] = assignment.n_pools;
  j["band_split"] = assignment.band_split;
  j["counts"] = counts;
  j["hog"] = rows(hog);
  j["hof"] = rows(hof);
  j["mbh"] = rows(mbh);
  return j.dump(2);
}

PooledDescriptors pool_descriptors(const ImageBuffer& img, const FlowField& predicted, int patch_size,
                                   int grid_stride, double tau0) {
  if (img.width() != predicted.width() || img.height() != predicted.height()) {
    throw DataError("image and flow sizes differ");
  }
  const auto grid = dense_grid(img.width(), img.height(), patch_size, grid_stride);
  PooledDescriptors out;
  out.assignment = assign_flow_pools(predicted, grid, tau0);
  out.counts = out.assignment.histogram();
  out.hog = Eigen::MatrixXd::Zero(kFlowPools, kDescriptorDims);
  out.hof = Eigen::MatrixXd::Zero(kFlowPools, kHofBins);
  out.mbh = Eigen::MatrixXd::Zero(kFlowPools, kMbhBins);
  const ImageBuffer opp = to_opponent(img);
  const FlowDerivativeField deriv = flow_derivatives(predicted);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const PatchGeometry g{grid[i].x, grid[i].y, patch_size};
    const int p = out.assignment.pool[i];
    out.hog.row(p) += extract_hog(opp, g).transpose();
    out.hof.row(p) += extract_hof(predicted, g.region(), tau0).transpose();
    out.mbh.row(p) += extract_mbh(deriv, g.region()).transpose();
  }
  for (int p = 0; p < kFlowPools; ++p) {
    if (out.counts[p] == 0) continue;
    const double inv = 1.0 / static_cast<double>(out.counts[p]);
    out.hog.row(p) *= inv;
    out.hof.row(p) *= inv;
    out.mbh.row(p) *= inv;
  }
  return out;
}

ImageBuffer pool_visualization(const ImageBuffer& img, const PoolAssignment& assignment, int grid_stride) {
  static constexpr std::array<std::array<double, 3>, kFlowPools> palette{{{0.5, 0.5, 0.5},
                                                                         {1.0, 0.6, 0.6},
                                                                         {0.8, 0.0, 0.0},
                                                                         {0.6, 1.0, 0.6},
                                                                         {0.0, 0.7, 0.0},
                                                                         {0.6, 0.6, 1.0},
                                                                         {0.0, 0.0, 0.8},
                                                                         {1.0, 1.0, 0.5},
                                                                         {0.8, 0.7, 0.0}}};
  ImageBuffer out = to_rgb(img);
  for (Plane& c : out.channels) c *= 0.4;
  const int lo = -(grid_stride / 2), hi = lo + grid_stride;
  for (std::size_t i = 0; i < assignment.locations.size(); ++i) {
    const auto& color = palette[static_cast<std::size_t>(assignment.pool[i])];
    const GridLocation l = assignment.locations[i];
    for (int dy = lo; dy < hi; ++dy) {
      for (int dx = lo; dx < hi; ++dx) {
        const int x = l.x + dx, y = l.y + dy;
        if (x < 0 || y < 0 || x >= out.width() || y >= out.height()) continue;
        for (int c = 0; c < 3; ++c) out.channels[c](y, x) = 0.5 * out.channels[c](y, x) + 0.6 * color[c];
      }
    }
  }
  return out;
}

}  // namespace msrf
