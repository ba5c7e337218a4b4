#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "msrf/camera.hpp"
#include "msrf/evalmetrics.hpp"
#include "msrf/features.hpp"
#include "msrf/srf.hpp"

namespace msrf {

// ---------------------------------------------------------------------------
// Corpus manifests: tab-separated lines
//   frame_path <TAB> next_frame_path|- <TAB> flow_path <TAB> class_label|-
// '#' starts a comment line. Relative paths resolve against the manifest's
// directory.

struct ManifestEntry {
  std::string frame_path;
  std::optional<std::string> next_frame_path;
  std::string flow_path;
  std::optional<std::string> class_label;
};

struct CorpusManifest {
  std::string base_dir;
  std::vector<ManifestEntry> entries;

  std::string resolve(const std::string& path) const;
  std::vector<std::string> class_labels() const;  // sorted, unique
};

CorpusManifest read_manifest(const std::string& path);
void write_manifest(const CorpusManifest& manifest, const std::string& path);

struct LoadOptions {
  bool camera_correction = false;
  CameraMotionParams camera;
};

// Loads frame/flow pairs, optionally restricted to one class label. With
// camera correction, entries that list a next frame have the estimated affine
// camera motion subtracted from their flow.
std::vector<FramePair> load_frame_pairs(const CorpusManifest& manifest, const std::optional<std::string>& label,
                                        const LoadOptions& options = {}, std::ostream* log = nullptr);

// ---------------------------------------------------------------------------
// key=value forest configuration; keys mirror ForestConfig.

void apply_config_entry(ForestConfig& config, const std::string& key, const std::string& value);
void apply_config_file(ForestConfig& config, const std::string& path);
std::string config_to_text(const ForestConfig& config);

// ---------------------------------------------------------------------------
// Unexpected-event detection.

struct SeriesStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<std::size_t> flagged;  // i with value_i > mean + std
};

SeriesStats flag_over_one_std(std::span<const double> series);

struct AnomalyReport {
  std::vector<double> epe;  // per frame, measured vs predicted
  double mean = 0.0;
  double std = 0.0;
  std::vector<std::size_t> flagged;
  // Measured flow of the previous frame vs the current one; absent at frame 0.
  std::vector<std::optional<double>> baseline_epe;
  std::vector<std::size_t> baseline_flagged;

  std::string to_json() const;
};

struct DetectOptions {
  int max_dimension = 300;
  std::optional<std::string> heatmap_dir;
};

AnomalyReport detect_unexpected(const StructuredForest& forest, const CorpusManifest& frames,
                                const DetectOptions& options = {}, std::ostream* log = nullptr);

// ---------------------------------------------------------------------------
// Flow-based descriptor pooling: pool 0 collects |f| < tau0, pools 1..8 are
// (angle quadrant) x (magnitude below / at-or-above the band split).

inline constexpr int kFlowPools = 9;

struct GridLocation {
  int x = 0, y = 0;
};

struct PoolAssignment {
  int n_pools = kFlowPools;
  double band_split = 0.0;  // magnitude separating the two bands
  std::vector<GridLocation> locations;
  std::vector<int> pool;  // one id per location

  std::vector<std::size_t> histogram() const;
};

// When band_split is absent the median of the magnitudes >= tau0 is used.
PoolAssignment assign_flow_pools(const FlowField& flow, std::span<const GridLocation> locations,
                                 double tau0 = kDefaultNoMotionThreshold,
                                 std::optional<double> band_split = std::nullopt);

// Stride grid of centres whose patch fits inside the image.
std::vector<GridLocation> dense_grid(int width, int height, int patch_size, int stride);

struct PooledDescriptors {
  PoolAssignment assignment;
  std::vector<std::size_t> counts;
  Eigen::MatrixXd hog;  // n_pools x 108, per-pool mean
  Eigen::MatrixXd hof;  // n_pools x 9
  Eigen::MatrixXd mbh;  // n_pools x 18

  std::string to_json() const;
};

PooledDescriptors pool_descriptors(const ImageBuffer& img, const FlowField& predicted, int patch_size,
                                   int grid_stride, double tau0 = kDefaultNoMotionThreshold);

// Original image dimmed, each location's stride cell painted with its pool color.
ImageBuffer pool_visualization(const ImageBuffer& img, const PoolAssignment& assignment, int grid_stride);

// ---------------------------------------------------------------------------
// Synthetic corpora: textured squares on a plain background, each texture
// class displaced by its own motion rule between frame t and t+1.

struct TextureClass {
  std::string name;     // also used as class label
  std::string texture;  // checkerboard | stripes | hstripes | diagonal | dots
  double du = 0.0, dv = 0.0;
};

struct SynthSpec {
  int width = 64;
  int height = 64;
  int pairs = 10;
  int min_shape = 16;
  int max_shape = 24;
  int shapes_per_class = 1;
  double background = 0.5;
  // false: every frame shows every class; true: frame i shows class i % n only
  // and the manifest carries class labels.
  bool split_classes = false;
  std::vector<TextureClass> classes;
};

// Parses "name:texture:du,dv" or "texture:du,dv".
TextureClass parse_texture_class(const std::string& text);

struct SynthPair {
  ImageBuffer frame;
  ImageBuffer next;
  FlowField flow;
  std::optional<std::string> class_label;
};

std::vector<SynthPair> render_synthetic_pairs(const SynthSpec& spec, std::uint64_t seed);

CorpusManifest gen_synthetic_corpus(const SynthSpec& spec, const std::string& out_dir, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Commands behind the CLI. Each returns its in-process result so callers can
// compare against the library API.

struct TrainOptions {
  std::string manifest_path;
  ForestConfig config;
  std::string out_model_path;
  bool camera_correction = false;
  std::optional<std::string> trace_path;
};

// Returns the written model paths (one per class label, or one if unlabeled).
std::vector<std::string> cmd_train(const TrainOptions& options, std::ostream& log);

// model.srfm + "walking" -> model.walking.srfm
std::string class_model_path(const std::string& base, const std::string& label);

struct PredictOptions {
  std::vector<std::string> model_paths;  // merged into one forest
  std::string image_path;
  std::string out_flo;
  std::optional<std::string> out_png;
  std::vector<double> warp_steps;
  std::optional<std::string> warp_prefix;
  std::optional<CannyParams> canny;
};

DensePrediction cmd_predict(const PredictOptions& options, std::ostream& log);

struct EvalOptions {
  std::string prediction_path;  // .flo, or a model file to predict with
  std::string reference_flo;
  std::string image_path;
  CannyParams canny;
  bool json = false;
};

ScoreReport cmd_eval(const EvalOptions& options, std::ostream& out);

struct DetectCommandOptions {
  std::vector<std::string> model_paths;
  std::string manifest_path;
  DetectOptions detect;
  std::optional<std::string> out_json;
};

AnomalyReport cmd_detect_unexpected(const DetectCommandOptions& options, std::ostream& out);

struct PoolOptions {
  std::vector<std::string> model_paths;
  std::string image_path;
  int grid_stride = 4;
  double tau0 = kDefaultNoMotionThreshold;
  std::string out_json;
  std::optional<std::string> out_png;
};

PooledDescriptors cmd_pool(const PoolOptions& options, std::ostream& log);

StructuredForest load_models(std::span<const std::string> paths);

}  // namespace msrf
