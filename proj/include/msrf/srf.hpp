#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "msrf/features.hpp"
#include "msrf/random.hpp"
#include "msrf/types.hpp"

namespace msrf {

// Binary split families on two descriptor dimensions:
//   kSingle:      F(p1) >= t
//   kSum:         F(p1) + F(p2) >= t
//   kDifference:  F(p1) - F(p2) >= t
//   kAbsDiff:     |F(p1) - F(p2)| >= t
enum class SplitType : std::uint8_t { kSingle = 1, kSum = 2, kDifference = 3, kAbsDiff = 4 };

struct SplitRecord {
  SplitType type = SplitType::kSingle;
  std::uint16_t p1 = 0;
  std::uint16_t p2 = 0;  // unused by kSingle
  double t = 0.0;
  friend bool operator==(const SplitRecord&, const SplitRecord&) = default;
};

// Left-hand side of the split inequality.
inline double split_value(SplitType type, double f1, double f2) {
  switch (type) {
    case SplitType::kSingle: return f1;
    case SplitType::kSum: return f1 + f2;
    case SplitType::kDifference: return f1 - f2;
    case SplitType::kAbsDiff: return f1 > f2 ? f1 - f2 : f2 - f1;
  }
  return f1;
}

// true routes to the left child (values at or above the threshold).
bool split_response(const SplitRecord& split, std::span<const double> features);
inline bool split_response(const SplitRecord& split, const AppearanceDescriptor& f) {
  return split_response(split, std::span<const double>(f.data(), static_cast<std::size_t>(f.size())));
}

struct ForestConfig {
  int n_trees = 11;
  int node_iters = 50;
  int threshold_iters = 10;
  int max_leaves = 1000;
  double var_threshold = 0.1;
  int frame_pairs_per_tree = 20;
  int min_child = 5;
  std::uint64_t seed = 0;
  SamplingConfig sampling;

  int patch_size() const { return sampling.patch_size; }
  int label_dims() const { return sampling.label_dims; }
  // Throws UsageError on out-of-range values.
  void validate() const;
};

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using LabelMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Row-per-sample view of a training set: descriptors N x F, flattened label
// patches N x (P*D) with pixel-major, dimension-minor layout.
struct TrainingData {
  FeatureMatrix features;
  LabelMatrix labels;
  int patch_pixels = 0;
  int label_dims = 0;

  int size() const { return static_cast<int>(features.rows()); }
};

TrainingData pack_samples(std::span<const TrainingSample> samples);

// Pixel-wise patch variance: sum over samples of the per-pixel squared
// deviation from the per-pixel mean, summed over dimensions, divided by |P|
// and by (|S| - 1). Zero for fewer than two samples.
double node_variance(std::span<const MotionPatch> patches);
double node_variance(const LabelMatrix& labels, std::span<const int> rows, int patch_pixels);

// Size-weighted mean of child variances.
double split_objective(const LabelMatrix& labels, std::span<const int> left, std::span<const int> right,
                       int patch_pixels);

// Candidate splits in rng draw order: node_iters draws of (type, p1, p2),
// each followed by threshold_iters thresholds uniform in the node's observed
// response range. Replaying the same rng state reproduces the list.
std::vector<SplitRecord> draw_split_candidates(const FeatureMatrix& features, std::span<const int> rows,
                                               const ForestConfig& config, Rng& rng);

// Objectives closer than this are ties and resolve to the earlier candidate.
inline double split_tie_tolerance(double parent_variance) { return 1e-10 * parent_variance; }

struct SplitResult {
  SplitRecord split;
  double objective = 0.0;
  std::size_t candidate_index = 0;
  std::vector<int> left, right;
};

// Best candidate under the size-weighted variance objective; candidates with
// a child smaller than min_child are skipped. nullopt if none is valid.
std::optional<SplitResult> best_split(const TrainingData& data, std::span<const int> rows,
                                      const ForestConfig& config, Rng& rng);

struct InternalNode {
  SplitRecord split;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
};

struct LeafNode {
  Eigen::VectorXf mean_patch;  // P*D values, pixel-major
  std::uint32_t population = 0;
};

using TreeNode = std::variant<InternalNode, LeafNode>;

// Nodes stored in pre-order; children always follow their parent.
struct RegressionTree {
  std::vector<TreeNode> nodes;

  const LeafNode& route(std::span<const double> features) const;
  std::size_t leaf_count() const;
};

struct GrowthEvent {
  enum class Kind { kPush, kSplit, kLeaf };
  Kind kind;
  int node = 0;
  double variance = 0.0;
  int terminal_count = 0;
};

// Priority-order log of tree growth, node ids in creation order.
struct GrowthTrace {
  std::vector<GrowthEvent> events;
  std::string to_text() const;
};

// Worst-first growth: the frontier node with the largest variance (ties: lower
// id) is split next. Nodes below var_threshold, nodes without a valid split
// and every frontier node left when max_leaves terminals exist become leaves.
RegressionTree grow_tree(const TrainingData& data, const ForestConfig& config, Rng& rng,
                         GrowthTrace* trace = nullptr);

struct TreeProvenance {
  std::uint64_t seed = 0;
  std::uint32_t sample_count = 0;
  std::vector<std::uint32_t> pair_indices;
};

struct StructuredForest {
  ForestConfig config;
  int feature_dims = kDescriptorDims;
  std::vector<RegressionTree> trees;
  std::vector<TreeProvenance> provenance;

  int patch_pixels() const { return config.patch_size() * config.patch_size(); }
};

// Trains n_trees trees; tree k draws frame_pairs_per_tree pairs with a seed
// derived from (config.seed, k). Samples of pair i use seed (sampling.seed, i).
StructuredForest train_forest(std::span<const FramePair> corpus, const ForestConfig& config,
                              std::vector<GrowthTrace>* traces = nullptr);
StructuredForest train_forest_from_samples(std::span<const std::vector<TrainingSample>> per_pair,
                                           const ForestConfig& config, std::vector<GrowthTrace>* traces = nullptr);

// Mean of the reached leaf patches over all trees.
MotionPatch forest_predict_patch(const StructuredForest& forest, const AppearanceDescriptor& f);

struct DensePrediction {
  LabelField field;
  EdgeMask coverage;
};

// Averages overlapping patch predictions per pixel; uncovered pixels are 0.
DensePrediction accumulate_patch_predictions(int width, int height, int dims,
                                             std::span<const PatchGeometry> geometries,
                                             std::span<const MotionPatch> patches);

// Predicts at every edge pixel whose patch fits, then averages overlaps.
// Canny parameters default to those stored in the forest.
DensePrediction predict_flow_image(const StructuredForest& forest, const ImageBuffer& img,
                                   std::optional<CannyParams> canny = std::nullopt);

// Concatenates the trees of compatible forests (same patch size, label dims,
// descriptor length). Config is taken from the first.
StructuredForest merge_forests(std::span<const StructuredForest> forests);

inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const StructuredForest& forest, const std::string& path);
std::vector<unsigned char> serialize_model(const StructuredForest& forest);
StructuredForest load_model(const std::string& path);
StructuredForest deserialize_model(std::span<const unsigned char> bytes);

}  // namespace msrf
