#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "msrf/imagecore.hpp"
#include "msrf/types.hpp"

namespace msrf {

inline constexpr int kHogOrientations = 9;
inline constexpr int kHogCellsPerSide = 2;
inline constexpr int kHogChannels = 3;
inline constexpr int kDescriptorDims =
    kHogCellsPerSide * kHogCellsPerSide * kHogOrientations * kHogChannels;  // 108
inline constexpr double kHogEpsilon = 1e-5;

inline constexpr int kHofBins = 9;  // 8 directions + no-motion
inline constexpr int kMbhBins = 2 * kHogOrientations;
inline constexpr double kDefaultNoMotionThreshold = 0.25;

using AppearanceDescriptor = Eigen::Matrix<double, kDescriptorDims, 1>;
using HofHistogram = Eigen::Matrix<double, kHofBins, 1>;
using MbhHistogram = Eigen::Matrix<double, kMbhBins, 1>;

// P x D label patch; row i is pixel i of the window in row-major order.
using MotionPatch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Region {
  int x0 = 0, y0 = 0, width = 0, height = 0;
};

// Square window of odd side `size` centred on (center_x, center_y).
struct PatchGeometry {
  int center_x = 0;
  int center_y = 0;
  int size = 1;

  int half() const { return size / 2; }
  int pixels() const { return size * size; }
  bool inside(int width, int height) const {
    return size % 2 == 1 && center_x >= half() && center_y >= half() &&
           center_x + half() < width && center_y + half() < height;
  }
  Region region() const { return {center_x - half(), center_y - half(), size, size}; }
  friend bool operator==(const PatchGeometry&, const PatchGeometry&) = default;
};

// Odd side close to max(width, height) / 5.
int default_patch_size(int width, int height);

// Edge pixels on a stride grid whose patch fits inside the image, sorted by
// (y, x). When more than max_samples qualify (max_samples > 0), a uniform
// subset drawn with `seed` is kept.
std::vector<PatchGeometry> sample_patch_centers(const EdgeMask& edges, int size, int stride,
                                                std::size_t max_samples, std::uint64_t seed);

// Opponent-HOG over one patch: per channel, [-1,0,1] gradients, 9 unsigned
// orientation bins with bilinear orientation interpolation, 2x2 cells, then
// L2 normalization of each 36-value channel block.
AppearanceDescriptor extract_hog(const ImageBuffer& img_opponent, const PatchGeometry& g);

MotionPatch extract_motion_patch(const LabelField& labels, const PatchGeometry& g);
// Writes a patch back into the window; inverse of extract_motion_patch.
void embed_motion_patch(LabelField& labels, const PatchGeometry& g, const MotionPatch& patch);

// 8 magnitude-weighted direction bins centred on multiples of 45 degrees
// plus a no-motion bin (|f| < tau, each pixel weighted by tau). L1-normalized.
HofHistogram extract_hof(const FlowField& flow, const Region& region,
                         double tau = kDefaultNoMotionThreshold);

// Unsigned 9-bin gradient-orientation histograms of u and of v (hard binning
// into 20-degree bins starting at 0), each half L2-normalized.
MbhHistogram extract_mbh(const FlowField& flow, const Region& region);
MbhHistogram extract_mbh(const FlowDerivativeField& deriv, const Region& region);

struct TrainingSample {
  AppearanceDescriptor descriptor;
  MotionPatch motion;
  PatchGeometry geometry;
  std::string source_id;
};

struct FramePair {
  ImageBuffer image;
  FlowField flow;
  std::string source_id;
};

struct SamplingConfig {
  int patch_size = 0;  // 0: default_patch_size of the first frame
  int stride = 1;
  std::size_t max_samples_per_frame = 500;
  int label_dims = 2;  // 2: flow, 4: flow derivatives
  CannyParams canny;
  std::uint64_t seed = 0;
};

int resolve_patch_size(const SamplingConfig& config, std::span<const FramePair> pairs);

// Labels for one frame pair in the configured label space.
LabelField make_labels(const FlowField& flow, int label_dims);

// Samples for a single pair; the building block of build_training_set.
std::vector<TrainingSample> extract_samples(const FramePair& pair, int patch_size,
                                            const SamplingConfig& config);

// Samples pooled over all pairs in input order. Throws if no pair has edges.
std::vector<TrainingSample> build_training_set(std::span<const FramePair> pairs,
                                               const SamplingConfig& config);

}  // namespace msrf
