#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "msrf/apps.hpp"
#include "msrf/error.hpp"
#include "msrf/flowio.hpp"
#include "msrf/imagecore.hpp"
#include "msrf/random.hpp"

namespace fs = std::filesystem;

namespace msrf {
namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<std::string> optional_column(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty() || t == "-") return std::nullopt;
  return t;
}

}  // namespace

std::string CorpusManifest::resolve(const std::string& path) const {
  const fs::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (fs::path(base_dir) / p).string();
}

std::vector<std::string> CorpusManifest::class_labels() const {
  std::set<std::string> labels;
  for (const ManifestEntry& e : entries) {
    if (e.class_label) labels.insert(*e.class_label);
  }
  return {labels.begin(), labels.end()};
}

CorpusManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  CorpusManifest manifest;
  manifest.base_dir = fs::path(path).parent_path().string();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    const auto cols = split(line, '\t');
    if (cols.size() < 3 || cols.size() > 4) {
      throw DataError("manifest '" + path + "' line " + std::to_string(line_no) + ": expected 3 or 4 columns");
    }
    ManifestEntry e;
    e.frame_path = trim(cols[0]);
    e.next_frame_path = optional_column(cols[1]);
    e.flow_path = trim(cols[2]);
    if (cols.size() == 4) e.class_label = optional_column(cols[3]);
    if (e.frame_path.empty() || e.flow_path.empty()) {
      throw DataError("manifest '" + path + "' line " + std::to_string(line_no) + ": empty path");
    }
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

void write_manifest(const CorpusManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  out << "# frame\tnext_frame\tflow\tclass\n";
  for (const ManifestEntry& e : manifest.entries) {
    out << e.frame_path << '\t' << e.next_frame_path.value_or("-") << '\t' << e.flow_path << '\t'
        << e.class_label.value_or("-") << '\n';
  }
  if (!out) throw DataError("cannot write manifest '" + path + "'");
}

std::vector<FramePair> load_frame_pairs(const CorpusManifest& manifest, const std::optional<std::string>& label,
                                        const LoadOptions& options, std::ostream* log) {
  std::vector<FramePair> pairs;
  for (const ManifestEntry& e : manifest.entries) {
    if (label && e.class_label != label) continue;
    FramePair pair;
    pair.image = load_image(manifest.resolve(e.frame_path));
    pair.flow = read_flo(manifest.resolve(e.flow_path));
    pair.source_id = e.frame_path;
    if (pair.image.width() != pair.flow.width() || pair.image.height() != pair.flow.height()) {
      throw DataError("flow '" + e.flow_path + "' does not match frame '" + e.frame_path + "'");
    }
    if (options.camera_correction && e.next_frame_path) {
      const ImageBuffer next = load_image(manifest.resolve(*e.next_frame_path));
      try {
        const RansacResult camera = estimate_camera_motion(pair.image, next, options.camera);
        pair.flow = correct_flow(pair.flow, camera.model);
      } catch (const DataError& err) {
        if (log) *log << "warning: no camera correction for " << e.frame_path << ": " << err.what() << '\n';
      }
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

// ---------------------------------------------------------------------------

namespace {

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size() || x < 0 || x > std::numeric_limits<int>::max()) throw std::invalid_argument(v);
    return static_cast<int>(x);
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

}  // namespace

void apply_config_entry(ForestConfig& c, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "n_trees") c.n_trees = parse_int(key, v);
  else if (key == "node_iters") c.node_iters = parse_int(key, v);
  else if (key == "threshold_iters") c.threshold_iters = parse_int(key, v);
  else if (key == "max_leaves") c.max_leaves = parse_int(key, v);
  else if (key == "var_threshold") c.var_threshold = parse_double(key, v);
  else if (key == "patch_size") c.sampling.patch_size = parse_int(key, v);
  else if (key == "label_dims") c.sampling.label_dims = parse_int(key, v);
  else if (key == "frame_pairs_per_tree") c.frame_pairs_per_tree = parse_int(key, v);
  else if (key == "min_child") c.min_child = parse_int(key, v);
  else if (key == "seed") {
    try {
      c.seed = std::stoull(v);
    } catch (const std::exception&) {
      throw UsageError("config key 'seed': expected an unsigned integer");
    }
    c.sampling.seed = c.seed;
  } else if (key == "stride") c.sampling.stride = parse_int(key, v);
  else if (key == "max_samples_per_frame") c.sampling.max_samples_per_frame = static_cast<std::size_t>(parse_int(key, v));
  else if (key == "canny_sigma") c.sampling.canny.sigma = parse_double(key, v);
  else if (key == "canny_low") c.sampling.canny.low = parse_double(key, v);
  else if (key == "canny_high") c.sampling.canny.high = parse_double(key, v);
  else throw UsageError("unknown config key '" + key + "'");
}

void apply_config_file(ForestConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw UsageError("config line without '=': " + t);
    apply_config_entry(config, trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

std::string config_to_text(const ForestConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "n_trees=" << c.n_trees << "\nnode_iters=" << c.node_iters << "\nthreshold_iters=" << c.threshold_iters
      << "\nmax_leaves=" << c.max_leaves << "\nvar_threshold=" << c.var_threshold
      << "\npatch_size=" << c.sampling.patch_size << "\nlabel_dims=" << c.sampling.label_dims
      << "\nframe_pairs_per_tree=" << c.frame_pairs_per_tree << "\nmin_child=" << c.min_child
      << "\nseed=" << c.seed << "\nstride=" << c.sampling.stride
      << "\nmax_samples_per_frame=" << c.sampling.max_samples_per_frame
      << "\ncanny_sigma=" << c.sampling.canny.sigma << "\ncanny_low=" << c.sampling.canny.low
      << "\ncanny_high=" << c.sampling.canny.high << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------

TextureClass parse_texture_class(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() < 2 || parts.size() > 3) throw UsageError("texture class must be [name:]texture:du,dv");
  TextureClass tc;
  tc.texture = parts[parts.size() - 2];
  tc.name = parts.size() == 3 ? parts[0] : tc.texture;
  const auto motion = split(parts.back(), ',');
  if (motion.size() != 2) throw UsageError("motion rule must be du,dv");
  tc.du = parse_double("du", motion[0]);
  tc.dv = parse_double("dv", motion[1]);
  static const std::set<std::string> known{"checkerboard", "stripes", "hstripes", "diagonal", "dots"};
  if (!known.count(tc.texture)) throw UsageError("unknown texture '" + tc.texture + "'");
  return tc;
}

namespace {

constexpr double kDark = 0.1;
constexpr double kBright = 0.9;

// Texture value at offset (x, y) from the shape's top-left corner.
double texture_value(const std::string& texture, double x, double y) {
  const auto fl = [](double v) { return static_cast<long>(std::floor(v)); };
  if (texture == "checkerboard") return ((fl(x / 4) + fl(y / 4)) % 2 == 0) ? kBright : kDark;
  if (texture == "stripes") return (fl(x / 3) % 2 == 0) ? kBright : kDark;
  if (texture == "hstripes") return (fl(y / 3) % 2 == 0) ? kBright : kDark;
  if (texture == "diagonal") return (fl((x + y) / 4) % 2 == 0) ? kBright : kDark;
  // dots: 2x2 bright dots on a 6-pixel lattice
  const long mx = fl(x) % 6, my = fl(y) % 6;
  return (mx >= 2 && mx < 4 && my >= 2 && my < 4) ? kBright : kDark;
}

struct PlacedShape {
  const TextureClass* cls;
  double x, y;  // top-left at frame t
  int size;
};

bool overlaps(const PlacedShape& a, const PlacedShape& b) {
  // Compare the union of the t and t+1 footprints, with a 2 px gap.
  auto box = [](const PlacedShape& s) {
    return std::array<double, 4>{std::min(s.x, s.x + s.cls->du) - 2, std::min(s.y, s.y + s.cls->dv) - 2,
                                 std::max(s.x, s.x + s.cls->du) + s.size + 2,
                                 std::max(s.y, s.y + s.cls->dv) + s.size + 2};
  };
  const auto ba = box(a), bb = box(b);
  return ba[0] < bb[2] && bb[0] < ba[2] && ba[1] < bb[3] && bb[1] < ba[3];
}

void render(ImageBuffer& img, const std::vector<PlacedShape>& shapes, bool moved, FlowField* flow) {
  for (const PlacedShape& s : shapes) {
    const double ox = s.x + (moved ? s.cls->du : 0.0);
    const double oy = s.y + (moved ? s.cls->dv : 0.0);
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const double lx = x - ox, ly = y - oy;
        if (lx < 0 || ly < 0 || lx >= s.size || ly >= s.size) continue;
        const double v = texture_value(s.cls->texture, lx, ly);
        for (Plane& c : img.channels) c(y, x) = v;
        if (flow) {
          flow->u(y, x) = s.cls->du;
          flow->v(y, x) = s.cls->dv;
        }
      }
    }
  }
}

// Rounds to the 8-bit grid so that in-memory frames equal their saved PNGs.
void quantize(ImageBuffer& img) {
  for (Plane& c : img.channels) c = (c * 255.0).round() / 255.0;
}

}  // namespace

std::vector<SynthPair> render_synthetic_pairs(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.classes.empty()) throw UsageError("synthetic spec needs at least one texture class");
  if (spec.width < 8 || spec.height < 8 || spec.pairs < 1 || spec.min_shape < 2 || spec.max_shape < spec.min_shape ||
      spec.shapes_per_class < 1) {
    throw UsageError("invalid synthetic corpus dimensions");
  }
  Rng rng(seed);
  std::vector<SynthPair> out;
  for (int i = 0; i < spec.pairs; ++i) {
    std::vector<const TextureClass*> present;
    if (spec.split_classes) {
      present.push_back(&spec.classes[static_cast<std::size_t>(i) % spec.classes.size()]);
    } else {
      for (const TextureClass& c : spec.classes) present.push_back(&c);
    }

    std::vector<PlacedShape> shapes;
    for (const TextureClass* cls : present) {
      for (int k = 0; k < spec.shapes_per_class; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
          PlacedShape s{cls, 0, 0, spec.min_shape + static_cast<int>(uniform_index(rng, spec.max_shape - spec.min_shape + 1))};
          const double lo_x = std::max(1.0, 1.0 - cls->du), hi_x = std::min(spec.width - 1.0 - s.size, spec.width - 1.0 - s.size - cls->du);
          const double lo_y = std::max(1.0, 1.0 - cls->dv), hi_y = std::min(spec.height - 1.0 - s.size, spec.height - 1.0 - s.size - cls->dv);
          if (hi_x < lo_x || hi_y < lo_y) break;
          s.x = std::ceil(lo_x) + static_cast<double>(uniform_index(rng, static_cast<std::uint64_t>(hi_x - std::ceil(lo_x)) + 1));
          s.y = std::ceil(lo_y) + static_cast<double>(uniform_index(rng, static_cast<std::uint64_t>(hi_y - std::ceil(lo_y)) + 1));
          if (std::none_of(shapes.begin(), shapes.end(), [&](const PlacedShape& o) { return overlaps(s, o); })) {
            shapes.push_back(s);
            placed = true;
          }
        }
        if (!placed) throw UsageError("cannot place synthetic shapes without overlap; enlarge the frame");
      }
    }

    SynthPair pair;
    pair.frame = ImageBuffer(spec.width, spec.height, 3, spec.background);
    pair.next = pair.frame;
    pair.flow = FlowField(spec.width, spec.height);
    render(pair.frame, shapes, false, &pair.flow);
    render(pair.next, shapes, true, nullptr);
    quantize(pair.frame);
    quantize(pair.next);
    if (spec.split_classes) pair.class_label = present.front()->name;
    out.push_back(std::move(pair));
  }
  return out;
}

CorpusManifest gen_synthetic_corpus(const SynthSpec& spec, const std::string& out_dir, std::uint64_t seed) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create '" + out_dir + "': " + ec.message());
  const auto pairs = render_synthetic_pairs(spec, seed);
  CorpusManifest manifest;
  manifest.base_dir = out_dir;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%04zu", i);
    ManifestEntry e;
    e.frame_path = std::string("frame_") + stem + ".png";
    e.next_frame_path = std::string("frame_") + stem + "_next.png";
    e.flow_path = std::string("flow_") + stem + ".flo";
    e.class_label = pairs[i].class_label;
    save_image(pairs[i].frame, manifest.resolve(e.frame_path));
    save_image(pairs[i].next, manifest.resolve(*e.next_frame_path));
    write_flo(pairs[i].flow, manifest.resolve(e.flow_path));
    manifest.entries.push_back(std::move(e));
  }
  write_manifest(manifest, (fs::path(out_dir) / "manifest.tsv").string());
  return manifest;
}

}  // namespace msrf
