// Acceptance suite: one PASS/FAIL line per criterion. Criteria 1-10 gate the
// exit status; the dataset harness runs only when data paths are supplied.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "msrf/apps.hpp"
#include "msrf/camera.hpp"
#include "msrf/evalmetrics.hpp"
#include "msrf/flowio.hpp"
#include "msrf/imagecore.hpp"
#include "msrf/srf.hpp"
#include "srf_oracles.hpp"
#include "test_support.hpp"

using namespace msrf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<int> all_rows(int n) {
  std::vector<int> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

int uniform_int(Rng& rng, int lo, int hi) { return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1)); }

Outcome variance_oracle() {
  Rng rng(2024);
  double worst = 0.0;
  for (int s = 0; s < 200; ++s) {
    const int n = uniform_int(rng, 1, 50);
    const int side = uniform_int(rng, 1, 9);
    const int D = uniform01(rng) < 0.5 ? 2 : 4;
    const TrainingData d = test::random_data(n, 1, side * side, D, 1000 + s);
    const auto rows = all_rows(n);
    const auto patches = test::rows_as_patches(d.labels, rows, side * side);
    const double oracle = test::brute_variance(patches);
    std::vector<MotionPatch> mp;
    for (int r : rows) mp.push_back(Eigen::Map<const MotionPatch>(&d.labels(r, 0), side * side, D));
    for (double got : {node_variance(d.labels, rows, side * side), node_variance(mp)}) {
      const double rel = oracle == 0.0 ? std::abs(got) : std::abs(got - oracle) / oracle;
      worst = std::max(worst, rel);
    }
  }
  return {worst <= 1e-9, "200 sets, worst relative error " + sci(worst)};
}

Outcome split_replay() {
  ForestConfig c;
  c.min_child = 2;
  int matched = 0, valid = 0;
  for (int s = 0; s < 50; ++s) {
    Rng pick(s);
    const int n = uniform_int(pick, 10, 100);
    const TrainingData d = test::random_data(n, kDescriptorDims, 9, 2, 500 + s);
    const auto rows = all_rows(n);
    Rng rng(77 + s), replay(77 + s);
    const auto r = best_split(d, rows, c, rng);
    const auto cands = draw_split_candidates(d.features, rows, c, replay);
    const auto o = test::oracle_best_split(d, rows, cands, c.min_child);
    if (r.has_value() != o.valid) continue;
    if (!o.valid) {
      ++matched;
      continue;
    }
    ++valid;
    if (r->candidate_index == o.index && std::abs(r->objective - o.objective) <= 1e-9 * std::max(1.0, o.objective)) {
      ++matched;
    }
  }
  return {matched == 50, std::to_string(matched) + "/50 nodes match the exhaustive minimum (" + std::to_string(valid) +
                             " with a valid split)"};
}

Outcome worst_first_audit() {
  int bad = 0;
  for (int s = 0; s < 20; ++s) {
    Rng pick(900 + s);
    const int n = uniform_int(pick, 50, 400);
    const TrainingData d = test::random_data(n, 12, 9, s % 2 ? 4 : 2, 40 + s);
    ForestConfig c;
    c.node_iters = 10;
    c.threshold_iters = 5;
    c.max_leaves = uniform_int(pick, 2, 30);
    c.var_threshold = 0.5 * uniform01(pick);
    Rng rng(s);
    GrowthTrace trace;
    const RegressionTree t = grow_tree(d, c, rng, &trace);
    std::map<int, double> frontier;
    for (const GrowthEvent& e : trace.events) {
      if (e.kind == GrowthEvent::Kind::kPush) {
        frontier[e.node] = e.variance;
        continue;
      }
      if (!frontier.count(e.node)) continue;
      for (const auto& [id, v] : frontier) bad += v > e.variance;
      frontier.erase(e.node);
    }
    bad += !frontier.empty();
    bad += t.leaf_count() > static_cast<std::size_t>(c.max_leaves);
    std::uint64_t pop = 0;
    for (const auto& node : t.nodes) {
      if (const auto* l = std::get_if<LeafNode>(&node)) pop += l->population;
    }
    bad += pop != static_cast<std::uint64_t>(n);
  }
  return {bad == 0, "20 trainings, " + std::to_string(bad) + " violations"};
}

SynthSpec learn_spec(int pairs) {
  SynthSpec s;
  s.width = 96;
  s.height = 96;
  s.pairs = pairs;
  s.classes = {parse_texture_class("checkerboard:2,0"), parse_texture_class("stripes:-2,0")};
  return s;
}

Outcome learnability() {
  std::vector<FramePair> corpus;
  for (auto& p : render_synthetic_pairs(learn_spec(10), 11)) corpus.push_back({p.frame, p.flow, "train"});
  ForestConfig c;
  c.n_trees = 5;
  const StructuredForest f = train_forest(corpus, c);
  std::vector<ScoreReport> reports;
  for (const auto& p : render_synthetic_pairs(learn_spec(5), 12345)) {
    const EdgeMask edges = canny_edges(p.frame, f.config.sampling.canny);
    reports.push_back(score_flow(to_flow_field(predict_flow_image(f, p.frame).field), p.flow, edges));
  }
  const ScoreReport r = aggregate(reports);
  std::ostringstream s;
  s << "edge EPE " << r.epe << " vs zero baseline " << r.zero_epe << ", direction " << r.direction_pct << "%";
  return {r.epe <= 0.5 * r.zero_epe && r.direction_pct >= 80.0, s.str()};
}

Outcome composition() {
  StructuredForest f;
  f.config.sampling.patch_size = 7;
  for (float c : {0.1f, 0.1f, 0.1f}) {
    RegressionTree t;
    t.nodes.emplace_back(LeafNode{Eigen::VectorXf::Constant(49 * 2, c), 1});
    f.trees.push_back(std::move(t));
    f.provenance.push_back({});
  }
  f.config.n_trees = 3;
  const ImageBuffer img = render_synthetic_pairs(learn_spec(1), 3)[0].frame;
  const DensePrediction p = predict_flow_image(f, img);
  const double expect = static_cast<double>(0.1f);
  bool exact = p.coverage.count() > 0;
  for (int d = 0; d < 2; ++d) {
    exact = exact && (p.coverage.mask.select(p.field.planes[d] == expect, true)).all();
  }
  const PatchGeometry a{3, 3, 5}, b{5, 4, 5};
  const DensePrediction two = accumulate_patch_predictions(
      12, 10, 2, std::vector{a, b}, std::vector<MotionPatch>{MotionPatch::Constant(25, 2, 1.3), MotionPatch::Constant(25, 2, -0.7)});
  double worst = 0.0;
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 12; ++x) {
      const bool ia = std::abs(x - 3) <= 2 && std::abs(y - 3) <= 2, ib = std::abs(x - 5) <= 2 && std::abs(y - 4) <= 2;
      const double e = ia && ib ? 0.3 : ia ? 1.3 : ib ? -0.7 : 0.0;
      worst = std::max(worst, std::abs(two.field.planes[0](y, x) - e));
    }
  }
  return {exact && worst <= 1e-12,
          std::string("constant forest ") + (exact ? "exact" : "inexact") + ", overlap error " + sci(worst)};
}

Outcome metrics_battery() {
  const auto flat = [](double u, double v) {
    FlowField f(4, 3);
    f.u.setConstant(u);
    f.v.setConstant(v);
    return f;
  };
  const EdgeMask all(4, 3, true);
  const FlowField ref = test::random_flow(4, 3, 2.0, 8);
  FlowField neg = ref;
  neg.u = -neg.u;
  neg.v = -neg.v;
  double mag = 0.0;
  for (Eigen::Index i = 0; i < ref.u.size(); ++i) mag += std::hypot(ref.u.data()[i], ref.v.data()[i]);
  mag /= static_cast<double>(ref.u.size());
  const bool ok = epe_at_mask(flat(0, 0), flat(3, 4), all) == 5.0 && direction_score(ref, ref, all) == 100.0 &&
                  direction_score(neg, ref, all) == -100.0 && orientation_score(neg, ref, all) == 100.0 &&
                  zero_baseline_epe(ref, all) == mag;
  return {ok, ok ? "all exact" : "mismatch"};
}

Outcome ransac_recovery() {
  int good = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(3000 + trial);
    AffineModel truth;
    truth.linear << 1 + 0.1 * (uniform01(rng) - 0.5), 0.1 * (uniform01(rng) - 0.5), 0.1 * (uniform01(rng) - 0.5),
        1 + 0.1 * (uniform01(rng) - 0.5);
    truth.translation << 10 * (uniform01(rng) - 0.5), 10 * (uniform01(rng) - 0.5);
    std::vector<PointMatch> matches;
    for (int i = 0; i < 200; ++i) {
      const Eigen::Vector2d p(320 * uniform01(rng), 240 * uniform01(rng));
      Eigen::Vector2d q = truth.apply(p) + Eigen::Vector2d(0.3 * (uniform01(rng) - 0.5), 0.3 * (uniform01(rng) - 0.5));
      if (i % 10 < 3) q = Eigen::Vector2d(320 * uniform01(rng), 240 * uniform01(rng));
      matches.push_back({p.x(), p.y(), q.x(), q.y(), 1.0});
    }
    RansacParams params;
    params.iterations = 500;
    params.seed = trial;
    const auto r = ransac_affine(matches, params);
    good += (r.model.linear - truth.linear).cwiseAbs().maxCoeff() <= 0.05 &&
            (r.model.translation - truth.translation).cwiseAbs().maxCoeff() <= 0.5;
  }
  return {good >= 95, std::to_string(good) + "/100 trials within tolerance"};
}

Outcome file_fidelity() {
  const fs::path dir = test::scratch_dir("acceptance_flo");
  int identical = 0;
  for (int i = 0; i < 100; ++i) {
    Rng rng(i);
    FlowField f = test::random_flow(uniform_int(rng, 1, 40), uniform_int(rng, 1, 40), 50.0, 7000 + i);
    // Keep values representable in the 32-bit file format.
    f.u = f.u.cast<float>().cast<double>();
    f.v = f.v.cast<float>().cast<double>();
    write_flo(f, (dir / "f.flo").string());
    const FlowField g = read_flo((dir / "f.flo").string());
    identical += g.width() == f.width() && g.height() == f.height() && (g.u == f.u).all() && (g.v == f.v).all();
  }
  std::vector<FramePair> corpus;
  for (auto& p : render_synthetic_pairs(learn_spec(3), 5)) corpus.push_back({p.frame, p.flow, "t"});
  ForestConfig c;
  c.n_trees = 3;
  c.node_iters = 10;
  c.threshold_iters = 5;
  const StructuredForest model = train_forest(corpus, c);
  save_model(model, (dir / "m.srfm").string());
  const StructuredForest loaded = load_model((dir / "m.srfm").string());
  bool same = true;
  for (auto& p : render_synthetic_pairs(learn_spec(4), 99)) {
    const DensePrediction a = predict_flow_image(model, p.frame), b = predict_flow_image(loaded, p.frame);
    for (int d = 0; d < 2; ++d) same = same && (a.field.planes[d] == b.field.planes[d]).all();
  }
  return {identical == 100 && same, std::to_string(identical) + "/100 fields bit-identical, model probe " +
                                        (same ? "identical" : "differs")};
}

Outcome anomaly_sequence() {
  const fs::path dir = test::scratch_dir("acceptance_anomaly");
  SynthSpec s = learn_spec(10);
  s.classes = {parse_texture_class("checkerboard:2,0")};
  std::vector<FramePair> corpus;
  for (auto& p : render_synthetic_pairs(s, 21)) corpus.push_back({p.frame, p.flow, "walk"});
  ForestConfig c;
  c.n_trees = 5;
  const StructuredForest f = train_forest(corpus, c);

  s.pairs = 30;
  auto seq = render_synthetic_pairs(s, 22);
  constexpr std::size_t kReversed = 17;
  seq[kReversed].flow.u = -seq[kReversed].flow.u;
  CorpusManifest m;
  m.base_dir = dir.string();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    ManifestEntry e;
    e.frame_path = "f" + std::to_string(i) + ".png";
    e.flow_path = "f" + std::to_string(i) + ".flo";
    save_image(seq[i].frame, m.resolve(e.frame_path));
    write_flo(seq[i].flow, m.resolve(e.flow_path));
    m.entries.push_back(e);
  }
  const AnomalyReport r = detect_unexpected(f, m);
  std::string flagged;
  for (std::size_t i : r.flagged) flagged += (flagged.empty() ? "" : ",") + std::to_string(i);
  return {r.flagged == std::vector<std::size_t>{kReversed},
          "reversed frame " + std::to_string(kReversed) + ", flagged {" + flagged + "}"};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MSRF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_determinism() {
  const fs::path dir = test::scratch_dir("acceptance_cli");
  const std::string d = dir.string();
  if (run_cli("synth --out-dir " + d + "/c --class checkerboard:2,0 --class stripes:-2,0 --pairs 4 --seed 3") != 0) {
    return {false, "synth failed"};
  }
  const std::string train = "train --manifest " + d + "/c/manifest.tsv --n-trees 3 --seed 11 --out ";
  const std::string predict = "predict --model " + d + "/a.srfm --image " + d + "/c/frame_0002.png --out ";
  if (run_cli(train + d + "/a.srfm") != 0 || run_cli(train + d + "/b.srfm") != 0 || run_cli(predict + d + "/p1.flo") != 0 ||
      run_cli(predict + d + "/p2.flo") != 0) {
    return {false, "a command exited non-zero"};
  }
  const bool models = test::read_bytes(dir / "a.srfm") == test::read_bytes(dir / "b.srfm");
  const bool flows = test::read_bytes(dir / "p1.flo") == test::read_bytes(dir / "p2.flo");
  return {models && flows, std::string("models ") + (models ? "identical" : "differ") + ", predictions " +
                               (flows ? "identical" : "differ")};
}

// Optional: evaluates a user-supplied model on a manifest of real frames with
// measured flow. Prints the per-frame table; no tolerance is asserted.
std::optional<Outcome> dataset_harness() {
  const char* manifest = std::getenv("MSRF_DATASET_MANIFEST");
  const char* model = std::getenv("MSRF_DATASET_MODEL");
  if (!manifest || !model) return std::nullopt;
  const StructuredForest f = load_model(model);
  const CorpusManifest m = read_manifest(manifest);
  std::vector<ScoreReport> reports;
  std::cout << format_score_header() << "\n";
  for (const ManifestEntry& e : m.entries) {
    const ImageBuffer img = load_image(m.resolve(e.frame_path));
    const FlowField ref = read_flo(m.resolve(e.flow_path));
    const EdgeMask edges = canny_edges(img, f.config.sampling.canny);
    if (edges.count() == 0) continue;
    reports.push_back(score_flow(to_flow_field(predict_flow_image(f, img).field), ref, edges));
    std::cout << format_score_row(e.class_label.value_or(e.frame_path), reports.back()) << "\n";
  }
  if (reports.empty()) return Outcome{false, "no frame had edges"};
  std::cout << format_score_row("average", aggregate(reports)) << "\n";
  return Outcome{true, std::to_string(reports.size()) + " frames evaluated"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0: no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "variance oracle", 5, variance_oracle},
      {2, "split optimality replay", 10, split_replay},
      {3, "worst-first audit", 0, worst_first_audit},
      {4, "synthetic learnability", 60, learnability},
      {5, "prediction composition", 0, composition},
      {6, "metrics battery", 0, metrics_battery},
      {7, "RANSAC recovery", 20, ransac_recovery},
      {8, "flow file and model fidelity", 0, file_fidelity},
      {9, "anomaly detection", 0, anomaly_sequence},
      {10, "CLI determinism", 0, cli_determinism},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += " (over the time budget)";
    }
    failures += !o.pass;
    std::printf("[%s] %2d %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::optional<Outcome> harness;
  try {
    harness = dataset_harness();
  } catch (const std::exception& e) {
    harness = Outcome{false, std::string("exception: ") + e.what()};
  }
  if (!harness) {
    std::printf("[SKIP] 11 dataset harness: set MSRF_DATASET_MANIFEST and MSRF_DATASET_MODEL to run (not gating)\n");
  } else {
    std::printf("[%s] 11 dataset harness: %s (not gating)\n", harness->pass ? "PASS" : "FAIL", harness->detail.c_str());
  }
  std::printf("%d gating criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
