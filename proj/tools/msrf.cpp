#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msrf/apps.hpp"
#include "msrf/error.hpp"
#include "msrf/flowio.hpp"
#include "msrf/imagecore.hpp"

namespace {

struct CannyFlags {
  std::optional<double> sigma, low, high;

  void add(CLI::App* app) {
    app->add_option("--canny-sigma", sigma, "Canny Gaussian sigma");
    app->add_option("--canny-low", low, "Canny low threshold on gradient magnitude");
    app->add_option("--canny-high", high, "Canny high threshold on gradient magnitude");
  }
  bool any() const { return sigma || low || high; }
  msrf::CannyParams apply(msrf::CannyParams p) const {
    if (sigma) p.sigma = *sigma;
    if (low) p.low = *low;
    if (high) p.high = *high;
    return p;
  }
};

struct TrainFlags {
  msrf::TrainOptions opts;
  std::optional<std::string> config_file;
  std::optional<std::uint64_t> seed;
  std::vector<std::pair<std::string, std::optional<std::string>>> overrides{
      {"n_trees", {}},        {"node_iters", {}}, {"threshold_iters", {}},      {"max_leaves", {}},
      {"var_threshold", {}},  {"patch_size", {}}, {"label_dims", {}},           {"frame_pairs_per_tree", {}},
      {"min_child", {}},      {"stride", {}},     {"max_samples_per_frame", {}}};
  CannyFlags canny;
};

std::string flag_name(const std::string& key) {
  std::string f = "--" + key;
  for (char& c : f) {
    if (c == '_') c = '-';
  }
  return f;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion prediction from single images with structured random forests"};
  app.require_subcommand(1);

  // train
  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "Train a forest (one per class label) from a corpus manifest");
  train_cmd->add_option("--manifest", train.opts.manifest_path, "Corpus manifest (TSV)")->required();
  train_cmd->add_option("--out", train.opts.out_model_path, "Output model path")->required();
  train_cmd->add_option("--config", train.config_file, "key=value config file; flags override it");
  train_cmd->add_option("--seed", train.seed, "Seed for sampling and tree growth");
  for (auto& [key, value] : train.overrides) train_cmd->add_option(flag_name(key), value, key);
  train.canny.add(train_cmd);
  train_cmd->add_flag("--camera-correction", train.opts.camera_correction,
                      "Subtract estimated affine camera motion (needs next-frame column)");
  train_cmd->add_option("--trace", train.opts.trace_path, "Write growth traces to this file");

  // predict
  msrf::PredictOptions predict;
  CannyFlags predict_canny;
  auto* predict_cmd = app.add_subcommand("predict", "Predict dense flow for one image");
  predict_cmd->add_option("--model", predict.model_paths, "Model file(s); several are merged")->required();
  predict_cmd->add_option("--image", predict.image_path, "Input image")->required();
  predict_cmd->add_option("--out", predict.out_flo, "Output .flo")->required();
  predict_cmd->add_option("--png", predict.out_png, "Color-coded flow PNG");
  predict_cmd->add_option("--warp-steps", predict.warp_steps, "Write warps at these flow multiples");
  predict_cmd->add_option("--warp-prefix", predict.warp_prefix, "Prefix for warp PNGs");
  predict_canny.add(predict_cmd);

  // eval
  msrf::EvalOptions eval;
  CannyFlags eval_canny;
  auto* eval_cmd = app.add_subcommand("eval", "Score a predicted flow at the image's edge pixels");
  eval_cmd->add_option("--pred", eval.prediction_path, "Predicted .flo or a model file")->required();
  eval_cmd->add_option("--ref", eval.reference_flo, "Reference .flo")->required();
  eval_cmd->add_option("--image", eval.image_path, "Image used for the edge mask")->required();
  eval_cmd->add_flag("--json", eval.json, "Print JSON instead of a table row");
  eval_canny.add(eval_cmd);

  // detect-unexpected
  msrf::DetectCommandOptions detect;
  auto* detect_cmd = app.add_subcommand("detect-unexpected", "Flag frames whose measured flow departs from prediction");
  detect_cmd->add_option("--model", detect.model_paths, "Model file(s)")->required();
  detect_cmd->add_option("--manifest", detect.manifest_path, "Frame manifest with measured flow")->required();
  detect_cmd->add_option("--json-out", detect.out_json, "Write the report as JSON");
  detect_cmd->add_option("--max-dim", detect.detect.max_dimension, "Resize frames to this maximum side");
  detect_cmd->add_option("--heatmaps", detect.detect.heatmap_dir, "Directory for per-frame EPE heatmaps");

  // pool
  msrf::PoolOptions pool;
  auto* pool_cmd = app.add_subcommand("pool", "Pool descriptors by predicted flow");
  pool_cmd->add_option("--model", pool.model_paths, "Model file(s)")->required();
  pool_cmd->add_option("--image", pool.image_path, "Input image")->required();
  pool_cmd->add_option("--grid-stride", pool.grid_stride, "Dense grid stride");
  pool_cmd->add_option("--tau0", pool.tau0, "Zero-motion pool threshold (px)");
  pool_cmd->add_option("--out", pool.out_json, "Pooled descriptor JSON")->required();
  pool_cmd->add_option("--png", pool.out_png, "Pool visualization PNG");

  // synth
  msrf::SynthSpec synth;
  std::string synth_dir;
  std::vector<std::string> synth_classes;
  std::uint64_t synth_seed = 0;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic textured-shape corpus");
  synth_cmd->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth_cmd->add_option("--class", synth_classes, "[name:]texture:du,dv (repeatable)")->required();
  synth_cmd->add_option("--width", synth.width, "Frame width")->capture_default_str();
  synth_cmd->add_option("--height", synth.height, "Frame height")->capture_default_str();
  synth_cmd->add_option("--pairs", synth.pairs, "Number of frame pairs")->capture_default_str();
  synth_cmd->add_option("--min-shape", synth.min_shape, "Smallest square side (px)")->capture_default_str();
  synth_cmd->add_option("--max-shape", synth.max_shape, "Largest square side (px)")->capture_default_str();
  synth_cmd->add_option("--shapes-per-class", synth.shapes_per_class, "Squares per class per frame")->capture_default_str();
  synth_cmd->add_flag("--split-classes", synth.split_classes, "One class per frame, labelled in the manifest");
  synth_cmd->add_option("--seed", synth_seed, "Placement seed")->capture_default_str();

  // warp
  std::string warp_image_path, warp_flow_path, warp_out;
  double warp_step = 1.0;
  auto* warp_cmd = app.add_subcommand("warp", "Forward-warp an image by a flow field");
  warp_cmd->add_option("--image", warp_image_path)->required();
  warp_cmd->add_option("--flow", warp_flow_path)->required();
  warp_cmd->add_option("--step", warp_step, "Flow multiple");
  warp_cmd->add_option("--out", warp_out)->required();

  // flow2png
  std::string f2p_flow, f2p_out;
  std::optional<double> f2p_max;
  auto* f2p_cmd = app.add_subcommand("flow2png", "Color-code a .flo file");
  f2p_cmd->add_option("--flow", f2p_flow)->required();
  f2p_cmd->add_option("--out", f2p_out)->required();
  f2p_cmd->add_option("--max-mag", f2p_max, "Magnitude mapped to full saturation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) {
      msrf::ForestConfig& c = train.opts.config;
      if (train.config_file) msrf::apply_config_file(c, *train.config_file);
      for (const auto& [key, value] : train.overrides) {
        if (value) msrf::apply_config_entry(c, key, *value);
      }
      c.sampling.canny = train.canny.apply(c.sampling.canny);
      if (train.seed) {
        c.seed = *train.seed;
        c.sampling.seed = *train.seed;
      }
      msrf::cmd_train(train.opts, std::cerr);
    } else if (*predict_cmd) {
      if (predict_canny.any()) predict.canny = predict_canny.apply({});
      msrf::cmd_predict(predict, std::cerr);
    } else if (*eval_cmd) {
      eval.canny = eval_canny.apply({});
      msrf::cmd_eval(eval, std::cout);
    } else if (*detect_cmd) {
      msrf::cmd_detect_unexpected(detect, std::cout);
    } else if (*pool_cmd) {
      msrf::cmd_pool(pool, std::cerr);
    } else if (*synth_cmd) {
      for (const std::string& s : synth_classes) synth.classes.push_back(msrf::parse_texture_class(s));
      const auto manifest = msrf::gen_synthetic_corpus(synth, synth_dir, synth_seed);
      std::cerr << "wrote " << manifest.entries.size() << " pairs to " << synth_dir << '\n';
    } else if (*warp_cmd) {
      const auto img = msrf::load_image(warp_image_path);
      const auto flow = msrf::read_flo(warp_flow_path);
      if (flow.width() != img.width() || flow.height() != img.height()) {
        throw msrf::DataError("flow does not match the image size");
      }
      msrf::save_image(msrf::warp_image(img, flow, warp_step), warp_out);
    } else if (*f2p_cmd) {
      msrf::save_image(msrf::flow_to_color(msrf::read_flo(f2p_flow), f2p_max), f2p_out);
    }
  } catch (const msrf::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
