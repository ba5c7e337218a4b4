#include "msrf/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <iterator>
#include <tuple>

#include "msrf/error.hpp"
#include "msrf/flowio.hpp"
#include "msrf/random.hpp"

namespace msrf {

int default_patch_size(int width, int height) {
  int size = static_cast<int>(std::lround(std::max(width, height) / 5.0));
  if (size % 2 == 0) ++size;
  return std::max(size, 3);
}

std::vector<PatchGeometry> sample_patch_centers(const EdgeMask& edges, int size, int stride,
                                                std::size_t max_samples, std::uint64_t seed) {
  if (size <= 0 || size % 2 == 0) throw UsageError("patch size must be odd and positive");
  if (stride < 1) throw UsageError("stride must be >= 1");
  const int w = edges.width(), h = edges.height();
  if (size > w || size > h) throw DataError("patch size larger than image");

  const int half = size / 2;
  std::vector<PatchGeometry> centers;
  for (int y = half; y + half < h; y += stride) {
    for (int x = half; x + half < w; x += stride) {
      if (edges(x, y)) centers.push_back({x, y, size});
    }
  }
  if (max_samples > 0 && centers.size() > max_samples) {
    Rng rng(seed);
    for (std::size_t i = 0; i < max_samples; ++i) {
      const std::size_t j = i + uniform_index(rng, centers.size() - i);
      std::swap(centers[i], centers[j]);
    }
    centers.resize(max_samples);
    std::sort(centers.begin(), centers.end(), [](const PatchGeometry& a, const PatchGeometry& b) {
      return std::tie(a.center_y, a.center_x) < std::tie(b.center_y, b.center_x);
    });
  }
  return centers;
}

AppearanceDescriptor extract_hog(const ImageBuffer& img, const PatchGeometry& g) {
  if (img.channel_count() != kHogChannels) throw DataError("extract_hog expects a 3-channel opponent image");
  const int w = img.width(), h = img.height();
  if (!g.inside(w, h)) throw DataError("patch geometry outside image or even-sized");

  AppearanceDescriptor desc = AppearanceDescriptor::Zero();
  const double bin_width = std::numbers::pi / kHogOrientations;
  const int x0 = g.center_x - g.half(), y0 = g.center_y - g.half();
  for (int c = 0; c < kHogChannels; ++c) {
    const Plane& ch = img.channels[c];
    auto block = desc.segment<kDescriptorDims / kHogChannels>(c * (kDescriptorDims / kHogChannels));
    for (int py = 0; py < g.size; ++py) {
      const int y = y0 + py;
      const int cell_y = py * kHogCellsPerSide / g.size;
      for (int px = 0; px < g.size; ++px) {
        const int x = x0 + px;
        const double gx = ch(y, std::min(x + 1, w - 1)) - ch(y, std::max(x - 1, 0));
        const double gy = ch(std::min(y + 1, h - 1), x) - ch(std::max(y - 1, 0), x);
        const double mag = std::sqrt(gx * gx + gy * gy);
        if (mag == 0.0) continue;
        double theta = std::atan2(gy, gx);
        if (theta < 0.0) theta += std::numbers::pi;
        // Bin k is centred at (k + 0.5) * 20 degrees.
        const double pos = theta / bin_width - 0.5;
        const double lower = std::floor(pos);
        const double frac = pos - lower;
        const int b0 = (static_cast<int>(lower) + kHogOrientations) % kHogOrientations;
        const int b1 = (b0 + 1) % kHogOrientations;
        const int cell = cell_y * kHogCellsPerSide + px * kHogCellsPerSide / g.size;
        block(cell * kHogOrientations + b0) += mag * (1.0 - frac);
        block(cell * kHogOrientations + b1) += mag * frac;
      }
    }
    block /= std::sqrt(block.squaredNorm() + kHogEpsilon * kHogEpsilon);
  }
  return desc;
}

MotionPatch extract_motion_patch(const LabelField& labels, const PatchGeometry& g) {
  if (labels.dims() == 0 || !g.inside(labels.width(), labels.height())) {
    throw DataError("patch geometry outside label field");
  }
  MotionPatch patch(g.pixels(), labels.dims());
  const int x0 = g.center_x - g.half(), y0 = g.center_y - g.half();
  for (int d = 0; d < labels.dims(); ++d) {
    const auto window = labels.planes[d].block(y0, x0, g.size, g.size);
    for (int py = 0; py < g.size; ++py)
      for (int px = 0; px < g.size; ++px) patch(py * g.size + px, d) = window(py, px);
  }
  return patch;
}

void embed_motion_patch(LabelField& labels, const PatchGeometry& g, const MotionPatch& patch) {
  if (!g.inside(labels.width(), labels.height()) || patch.rows() != g.pixels() ||
      patch.cols() != labels.dims()) {
    throw DataError("motion patch does not fit label field");
  }
  const int x0 = g.center_x - g.half(), y0 = g.center_y - g.half();
  for (int d = 0; d < labels.dims(); ++d)
    for (int py = 0; py < g.size; ++py)
      for (int px = 0; px < g.size; ++px) labels.planes[d](y0 + py, x0 + px) = patch(py * g.size + px, d);
}

namespace {

void check_region(const Region& r, int width, int height) {
  if (r.width <= 0 || r.height <= 0) throw DataError("empty region");
  if (r.x0 < 0 || r.y0 < 0 || r.x0 + r.width > width || r.y0 + r.height > height) {
    throw DataError("region outside field");
  }
}

// Hard-binned unsigned orientation histogram of one gradient pair, L2-normalized.
Eigen::Matrix<double, kHogOrientations, 1> orientation_histogram(const Plane& gx, const Plane& gy,
                                                                const Region& r) {
  Eigen::Matrix<double, kHogOrientations, 1> hist = Eigen::Matrix<double, kHogOrientations, 1>::Zero();
  const double bin_width = std::numbers::pi / kHogOrientations;
  for (int y = r.y0; y < r.y0 + r.height; ++y) {
    for (int x = r.x0; x < r.x0 + r.width; ++x) {
      const double mag = std::hypot(gx(y, x), gy(y, x));
      if (mag == 0.0) continue;
      double theta = std::atan2(gy(y, x), gx(y, x));
      if (theta < 0.0) theta += std::numbers::pi;
      const int bin = static_cast<int>(std::floor(theta / bin_width)) % kHogOrientations;
      hist(bin) += mag;
    }
  }
  const double norm = hist.norm();
  if (norm > 0.0) hist /= norm;
  return hist;
}

}  // namespace

HofHistogram extract_hof(const FlowField& flow, const Region& region, double tau) {
  check_region(region, flow.width(), flow.height());
  HofHistogram hist = HofHistogram::Zero();
  const double sector = std::numbers::pi / 4.0;
  for (int y = region.y0; y < region.y0 + region.height; ++y) {
    for (int x = region.x0; x < region.x0 + region.width; ++x) {
      const double u = flow.u(y, x), v = flow.v(y, x);
      const double mag = std::hypot(u, v);
      if (mag < tau) {
        hist(8) += tau;
        continue;
      }
      const int bin = static_cast<int>(std::floor((std::atan2(v, u) + sector / 2.0) / sector));
      hist((bin + 8) % 8) += mag;
    }
  }
  const double total = hist.sum();
  if (total > 0.0) {
    hist /= total;
  } else {
    hist(8) = 1.0;
  }
  return hist;
}

MbhHistogram extract_mbh(const FlowDerivativeField& d, const Region& region) {
  check_region(region, d.width(), d.height());
  MbhHistogram out;
  out.head<kHogOrientations>() = orientation_histogram(d.du_dx, d.du_dy, region);
  out.tail<kHogOrientations>() = orientation_histogram(d.dv_dx, d.dv_dy, region);
  return out;
}

MbhHistogram extract_mbh(const FlowField& flow, const Region& region) {
  check_region(region, flow.width(), flow.height());
  return extract_mbh(flow_derivatives(flow), region);
}

int resolve_patch_size(const SamplingConfig& config, std::span<const FramePair> pairs) {
  if (config.patch_size > 0) {
    if (config.patch_size % 2 == 0) throw UsageError("patch size must be odd");
    return config.patch_size;
  }
  if (pairs.empty()) throw DataError("no frame pairs");
  return default_patch_size(pairs.front().image.width(), pairs.front().image.height());
}

LabelField make_labels(const FlowField& flow, int label_dims) {
  if (label_dims == 2) return to_label_field(flow);
  if (label_dims == 4) return to_label_field(flow_derivatives(flow));
  throw UsageError("label dims must be 2 or 4");
}

std::vector<TrainingSample> extract_samples(const FramePair& pair, int patch_size,
                                            const SamplingConfig& config) {
  if (pair.image.width() != pair.flow.width() || pair.image.height() != pair.flow.height()) {
    throw DataError("frame and flow dimensions differ for '" + pair.source_id + "'");
  }
  const ImageBuffer rgb = to_rgb(pair.image);
  const ImageBuffer opponent = to_opponent(rgb);
  const EdgeMask edges = canny_edges(rgb, config.canny);
  const LabelField labels = make_labels(pair.flow, config.label_dims);
  const auto centers =
      sample_patch_centers(edges, patch_size, config.stride, config.max_samples_per_frame, config.seed);

  std::vector<TrainingSample> samples;
  samples.reserve(centers.size());
  for (const PatchGeometry& g : centers) {
    samples.push_back({extract_hog(opponent, g), extract_motion_patch(labels, g), g, pair.source_id});
  }
  return samples;
}

std::vector<TrainingSample> build_training_set(std::span<const FramePair> pairs,
                                               const SamplingConfig& config) {
  const int patch_size = resolve_patch_size(config, pairs);
  std::vector<TrainingSample> all;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    SamplingConfig per_pair = config;
    per_pair.seed = mix_seed(config.seed, i);
    auto samples = extract_samples(pairs[i], patch_size, per_pair);
    std::move(samples.begin(), samples.end(), std::back_inserter(all));
  }
  if (all.empty()) throw DataError("no edge samples found in any frame");
  return all;
}

}  // namespace msrf
