#include <algorithm>
#include <numeric>

#include "msrf/error.hpp"
#include "msrf/srf.hpp"

namespace msrf {
namespace {

constexpr std::uint64_t kTreeStream = 0x7472656573ULL;

std::vector<std::uint32_t> choose_pairs(std::size_t corpus_size, int per_tree, Rng& rng) {
  std::vector<std::uint32_t> idx(corpus_size);
  std::iota(idx.begin(), idx.end(), 0u);
  const std::size_t k = std::min<std::size_t>(corpus_size, static_cast<std::size_t>(per_tree));
  if (k < corpus_size) {
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, corpus_size - i)]);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

}  // namespace

StructuredForest train_forest_from_samples(std::span<const std::vector<TrainingSample>> per_pair,
                                           const ForestConfig& config, std::vector<GrowthTrace>* traces) {
  config.validate();
  if (per_pair.empty()) throw DataError("empty training corpus");
  if (config.patch_size() <= 0) throw UsageError("train_forest_from_samples needs a resolved patch size");

  StructuredForest forest;
  forest.config = config;
  for (int t = 0; t < config.n_trees; ++t) {
    TreeProvenance prov;
    prov.seed = mix_seed(config.seed ^ kTreeStream, static_cast<std::uint64_t>(t));
    Rng rng(prov.seed);
    prov.pair_indices = choose_pairs(per_pair.size(), config.frame_pairs_per_tree, rng);

    std::vector<TrainingSample> samples;
    for (std::uint32_t i : prov.pair_indices) {
      samples.insert(samples.end(), per_pair[i].begin(), per_pair[i].end());
    }
    if (samples.empty()) throw DataError("tree " + std::to_string(t) + " drew frame pairs without edge samples");
    const TrainingData data = pack_samples(samples);
    if (data.patch_pixels != forest.patch_pixels() || data.label_dims != config.label_dims()) {
      throw DataError("training samples do not match the configured patch shape");
    }
    prov.sample_count = static_cast<std::uint32_t>(data.size());
    GrowthTrace* trace = nullptr;
    if (traces) trace = &traces->emplace_back();
    forest.trees.push_back(grow_tree(data, config, rng, trace));
    forest.provenance.push_back(std::move(prov));
  }
  return forest;
}

StructuredForest train_forest(std::span<const FramePair> corpus, const ForestConfig& config,
                              std::vector<GrowthTrace>* traces) {
  config.validate();
  if (corpus.empty()) throw DataError("empty training corpus");
  ForestConfig resolved = config;
  resolved.sampling.patch_size = resolve_patch_size(config.sampling, corpus);

  std::vector<std::vector<TrainingSample>> per_pair;
  per_pair.reserve(corpus.size());
  bool any = false;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    SamplingConfig sampling = resolved.sampling;
    sampling.seed = mix_seed(config.sampling.seed, i);
    per_pair.push_back(extract_samples(corpus[i], resolved.patch_size(), sampling));
    any = any || !per_pair.back().empty();
  }
  if (!any) throw DataError("no edge samples found in any frame");
  return train_forest_from_samples(per_pair, resolved, traces);
}

MotionPatch forest_predict_patch(const StructuredForest& forest, const AppearanceDescriptor& f) {
  if (forest.trees.empty()) throw DataError("forest has no trees");
  const std::span<const double> features(f.data(), static_cast<std::size_t>(f.size()));
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(forest.patch_pixels() * forest.config.label_dims());
  for (const RegressionTree& tree : forest.trees) sum += tree.route(features).mean_patch.cast<double>();
  sum /= static_cast<double>(forest.trees.size());
  return Eigen::Map<const MotionPatch>(sum.data(), forest.patch_pixels(), forest.config.label_dims());
}

DensePrediction accumulate_patch_predictions(int width, int height, int dims,
                                             std::span<const PatchGeometry> geometries,
                                             std::span<const MotionPatch> patches) {
  if (geometries.size() != patches.size()) throw DataError("geometry/patch count mismatch");
  LabelField sum(width, height, dims);
  Plane count = Plane::Zero(height, width);
  for (std::size_t k = 0; k < geometries.size(); ++k) {
    const PatchGeometry& g = geometries[k];
    const MotionPatch& p = patches[k];
    if (!g.inside(width, height) || p.rows() != g.pixels() || p.cols() != dims) {
      throw DataError("patch prediction does not fit the output field");
    }
    const int x0 = g.center_x - g.half(), y0 = g.center_y - g.half();
    for (int py = 0; py < g.size; ++py) {
      for (int px = 0; px < g.size; ++px) {
        count(y0 + py, x0 + px) += 1.0;
        for (int d = 0; d < dims; ++d) sum.planes[d](y0 + py, x0 + px) += p(py * g.size + px, d);
      }
    }
  }
  DensePrediction out;
  out.coverage.mask = count > 0.0;
  out.field = std::move(sum);
  for (Plane& plane : out.field.planes) plane = (count > 0.0).select(plane / count.max(1.0), 0.0);
  return out;
}

DensePrediction predict_flow_image(const StructuredForest& forest, const ImageBuffer& img,
                                   std::optional<CannyParams> canny) {
  if (forest.trees.empty()) throw DataError("forest has no trees");
  const int size = forest.config.patch_size();
  if (img.width() < size || img.height() < size) throw DataError("image smaller than the forest patch size");
  const ImageBuffer rgb = to_rgb(img);
  const ImageBuffer opponent = to_opponent(rgb);
  const EdgeMask edges = canny_edges(rgb, canny.value_or(forest.config.sampling.canny));
  const auto geometries = sample_patch_centers(edges, size, 1, 0, 0);

  std::vector<MotionPatch> patches;
  patches.reserve(geometries.size());
  for (const PatchGeometry& g : geometries) patches.push_back(forest_predict_patch(forest, extract_hog(opponent, g)));
  return accumulate_patch_predictions(img.width(), img.height(), forest.config.label_dims(), geometries, patches);
}

StructuredForest merge_forests(std::span<const StructuredForest> forests) {
  if (forests.empty()) throw DataError("no forests to merge");
  StructuredForest merged = forests.front();
  for (std::size_t i = 1; i < forests.size(); ++i) {
    const StructuredForest& f = forests[i];
    if (f.config.patch_size() != merged.config.patch_size() ||
        f.config.label_dims() != merged.config.label_dims() || f.feature_dims != merged.feature_dims) {
      throw DataError("cannot merge forests with different patch shapes");
    }
    merged.trees.insert(merged.trees.end(), f.trees.begin(), f.trees.end());
    merged.provenance.insert(merged.provenance.end(), f.provenance.begin(), f.provenance.end());
  }
  merged.config.n_trees = static_cast<int>(merged.trees.size());
  return merged;
}

}  // namespace msrf
