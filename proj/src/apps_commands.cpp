#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "msrf/apps.hpp"
#include "msrf/error.hpp"
#include "msrf/flowio.hpp"
#include "msrf/imagecore.hpp"

namespace fs = std::filesystem;

namespace msrf {
namespace {

bool has_extension(const std::string& path, const std::string& ext) {
  return fs::path(path).extension() == ext;
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  const fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix + p.extension().string())).string();
}

void write_traces(const std::vector<GrowthTrace>& traces, const std::string& path) {
  std::ofstream out(path);
  for (std::size_t t = 0; t < traces.size(); ++t) out << "tree " << t << '\n' << traces[t].to_text();
  if (!out) throw DataError("cannot write trace '" + path + "'");
}

}  // namespace

std::string class_model_path(const std::string& base, const std::string& label) {
  return with_suffix(base, "." + label);
}

StructuredForest load_models(std::span<const std::string> paths) {
  if (paths.empty()) throw UsageError("no model given");
  std::vector<StructuredForest> forests;
  for (const std::string& p : paths) forests.push_back(load_model(p));
  return forests.size() == 1 ? std::move(forests.front()) : merge_forests(forests);
}

std::vector<std::string> cmd_train(const TrainOptions& options, std::ostream& log) {
  options.config.validate();
  const CorpusManifest manifest = read_manifest(options.manifest_path);
  if (manifest.entries.empty()) throw DataError("manifest '" + options.manifest_path + "' lists no frames");
  LoadOptions load;
  load.camera_correction = options.camera_correction;
  load.camera.ransac.seed = options.config.seed;

  std::vector<std::optional<std::string>> groups;
  const auto labels = manifest.class_labels();
  if (labels.empty()) groups.emplace_back(std::nullopt);
  for (const auto& l : labels) groups.emplace_back(l);

  std::vector<std::string> written;
  for (const auto& label : groups) {
    const auto pairs = load_frame_pairs(manifest, label, load, &log);
    if (pairs.empty()) continue;
    std::vector<GrowthTrace> traces;
    const StructuredForest forest = train_forest(pairs, options.config, options.trace_path ? &traces : nullptr);
    const std::string path = label ? class_model_path(options.out_model_path, *label) : options.out_model_path;
    save_model(forest, path);
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
      log << "tree " << t << ": leaves=" << forest.trees[t].leaf_count() << " nodes=" << forest.trees[t].nodes.size()
          << " samples=" << forest.provenance[t].sample_count << '\n';
    }
    if (options.trace_path) {
      write_traces(traces, label ? class_model_path(*options.trace_path, *label) : *options.trace_path);
    }
    log << "trained " << forest.trees.size() << " trees on " << pairs.size() << " pairs"
        << (label ? " (class " + *label + ")" : std::string()) << " -> " << path << '\n';
    written.push_back(path);
  }
  return written;
}

DensePrediction cmd_predict(const PredictOptions& options, std::ostream& log) {
  const StructuredForest forest = load_models(options.model_paths);
  const ImageBuffer img = load_image(options.image_path);
  DensePrediction pred = predict_flow_image(forest, img, options.canny);
  if (pred.coverage.count() == 0) log << "warning: no edge pixels with a full patch; prediction is zero\n";
  log << "predicted at " << pred.coverage.count() << " pixels with " << forest.trees.size() << " trees\n";

  if (pred.field.dims() == 2) {
    const FlowField flow = to_flow_field(pred.field);
    write_flo(flow, options.out_flo);
    if (options.out_png) save_image(flow_to_color(flow), *options.out_png);
    for (double step : options.warp_steps) {
      std::ostringstream name;
      name << options.warp_prefix.value_or(fs::path(options.out_flo).replace_extension().string()) << "_warp_"
           << step << ".png";
      save_image(warp_image(img, flow, step), name.str());
    }
  } else {
    if (!options.warp_steps.empty()) throw UsageError("warping needs a flow (D=2) model");
    const FlowDerivativeField d = to_derivative_field(pred.field);
    const fs::path base = fs::path(options.out_flo).replace_extension();
    write_flo(FlowField(d.du_dx, d.du_dy), base.string() + "_du.flo");
    write_flo(FlowField(d.dv_dx, d.dv_dy), base.string() + "_dv.flo");
  }
  return pred;
}

ScoreReport cmd_eval(const EvalOptions& options, std::ostream& out) {
  const ImageBuffer img = load_image(options.image_path);
  const FlowField ref = read_flo(options.reference_flo);
  if (ref.width() != img.width() || ref.height() != img.height()) {
    throw DataError("reference flow does not match the image size");
  }
  FlowField pred;
  if (has_extension(options.prediction_path, ".flo")) {
    pred = read_flo(options.prediction_path);
  } else {
    const StructuredForest forest = load_model(options.prediction_path);
    if (forest.config.label_dims() != 2) throw UsageError("evaluation needs a flow (D=2) model");
    pred = to_flow_field(predict_flow_image(forest, img, options.canny).field);
  }
  if (pred.width() != ref.width() || pred.height() != ref.height()) {
    throw DataError("predicted and reference flow sizes differ");
  }
  const EdgeMask edges = canny_edges(img, options.canny);
  if (edges.count() == 0) throw DataError("no edge pixels in '" + options.image_path + "'");
  const ScoreReport r = score_flow(pred, ref, edges);
  if (options.json) {
    out << score_to_json(r) << '\n';
  } else {
    out << format_score_header() << '\n' << format_score_row(fs::path(options.image_path).filename().string(), r) << '\n';
  }
  return r;
}

AnomalyReport cmd_detect_unexpected(const DetectCommandOptions& options, std::ostream& out) {
  const StructuredForest forest = load_models(options.model_paths);
  const CorpusManifest manifest = read_manifest(options.manifest_path);
  const AnomalyReport report = detect_unexpected(forest, manifest, options.detect, nullptr);
  const std::string json = report.to_json();
  if (options.out_json) {
    std::ofstream f(*options.out_json);
    f << json << '\n';
    if (!f) throw DataError("cannot write '" + *options.out_json + "'");
  }
  out << "frame\tepe\tflagged\n";
  for (std::size_t i = 0; i < report.epe.size(); ++i) {
    const bool flagged = std::find(report.flagged.begin(), report.flagged.end(), i) != report.flagged.end();
    out << manifest.entries[i].frame_path << '\t' << report.epe[i] << '\t' << (flagged ? "yes" : "no") << '\n';
  }
  out << "mean=" << report.mean << " std=" << report.std << " flagged=" << report.flagged.size() << '\n';
  return report;
}

PooledDescriptors cmd_pool(const PoolOptions& options, std::ostream& log) {
  const StructuredForest forest = load_models(options.model_paths);
  if (forest.config.label_dims() != 2) throw UsageError("pooling needs a flow (D=2) model");
  const ImageBuffer img = load_image(options.image_path);
  const FlowField flow = to_flow_field(predict_flow_image(forest, img).field);
  const PooledDescriptors pooled =
      pool_descriptors(img, flow, forest.config.patch_size(), options.grid_stride, options.tau0);
  std::ofstream f(options.out_json);
  f << pooled.to_json() << '\n';
  if (!f) throw DataError("cannot write '" + options.out_json + "'");
  if (options.out_png) save_image(pool_visualization(img, pooled.assignment, options.grid_stride), *options.out_png);
  log << "pooled " << pooled.assignment.locations.size() << " locations into " << kFlowPools << " pools\n";
  return pooled;
}

}  // namespace msrf
