#include <limits>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "msrf/error.hpp"
#include "msrf/srf.hpp"

namespace msrf {
namespace {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* s, std::size_t n) { bytes_.insert(bytes_.end(), s, s + n); }
  std::vector<unsigned char> take() { return std::move(bytes_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void expect_bytes(const char* s, std::size_t n, const char* what) {
    need(n);
    if (std::memcmp(bytes_.data() + pos_, s, n) != 0) throw DataError(what);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("truncated model file");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

int checked_int(std::uint32_t v, const char* what) {
  if (v > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) throw DataError(what);
  return static_cast<int>(v);
}

// Structural checks: pre-order layout, children after parent, every
// non-root node referenced exactly once, at least one leaf.
void validate_tree(const RegressionTree& tree, int feature_dims, Eigen::Index patch_values) {
  if (tree.nodes.empty()) throw DataError("model tree has no nodes");
  std::vector<int> refs(tree.nodes.size(), 0);
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    if (const auto* n = std::get_if<InternalNode>(&tree.nodes[i])) {
      for (std::uint32_t c : {n->left, n->right}) {
        if (c <= i || c >= tree.nodes.size()) throw DataError("model tree has an invalid child offset");
        ++refs[c];
      }
      const bool single = n->split.type == SplitType::kSingle;
      if (n->split.p1 >= feature_dims || (!single && (n->split.p2 >= feature_dims || n->split.p1 == n->split.p2))) {
        throw DataError("model split has invalid feature indices");
      }
      if (!std::isfinite(n->split.t)) throw DataError("model split has a non-finite threshold");
    } else {
      const auto& leaf = std::get<LeafNode>(tree.nodes[i]);
      if (leaf.population == 0) throw DataError("model leaf has zero population");
      if (leaf.mean_patch.size() != patch_values) throw DataError("model leaf has the wrong patch size");
    }
  }
  for (std::size_t i = 1; i < refs.size(); ++i) {
    if (refs[i] != 1) throw DataError("model tree is not a proper binary tree");
  }
}

}  // namespace

std::vector<unsigned char> serialize_model(const StructuredForest& forest) {
  const ForestConfig& c = forest.config;
  ByteWriter w;
  w.raw("SRFM", 4);
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(c.n_trees));
  w.u32(static_cast<std::uint32_t>(c.node_iters));
  w.u32(static_cast<std::uint32_t>(c.threshold_iters));
  w.u32(static_cast<std::uint32_t>(c.max_leaves));
  w.f64(c.var_threshold);
  w.u32(static_cast<std::uint32_t>(c.sampling.patch_size));
  w.u32(static_cast<std::uint32_t>(c.sampling.label_dims));
  w.u32(static_cast<std::uint32_t>(c.frame_pairs_per_tree));
  w.u32(static_cast<std::uint32_t>(c.min_child));
  w.u64(c.seed);
  w.u32(static_cast<std::uint32_t>(c.sampling.stride));
  w.u32(static_cast<std::uint32_t>(c.sampling.max_samples_per_frame));
  w.u64(c.sampling.seed);
  w.f64(c.sampling.canny.sigma);
  w.f64(c.sampling.canny.low);
  w.f64(c.sampling.canny.high);
  w.u32(static_cast<std::uint32_t>(forest.feature_dims));

  w.u32(static_cast<std::uint32_t>(forest.trees.size()));
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const TreeProvenance prov = t < forest.provenance.size() ? forest.provenance[t] : TreeProvenance{};
    w.u64(prov.seed);
    w.u32(prov.sample_count);
    w.u32(static_cast<std::uint32_t>(prov.pair_indices.size()));
    for (std::uint32_t i : prov.pair_indices) w.u32(i);

    const RegressionTree& tree = forest.trees[t];
    w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const TreeNode& node : tree.nodes) {
      if (const auto* n = std::get_if<InternalNode>(&node)) {
        w.u8(static_cast<std::uint8_t>(n->split.type));
        w.u16(n->split.p1);
        w.u16(n->split.p2);
        w.f64(n->split.t);
        w.u32(n->left);
        w.u32(n->right);
      } else {
        const auto& leaf = std::get<LeafNode>(node);
        w.u8(0);
        w.u32(leaf.population);
        for (Eigen::Index i = 0; i < leaf.mean_patch.size(); ++i) w.f32(leaf.mean_patch(i));
      }
    }
  }
  return w.take();
}

StructuredForest deserialize_model(std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  r.expect_bytes("SRFM", 4, "bad magic in model file");
  if (r.u32() != kModelFormatVersion) throw DataError("unsupported model format version");

  StructuredForest forest;
  ForestConfig& c = forest.config;
  c.n_trees = checked_int(r.u32(), "bad n_trees");
  c.node_iters = checked_int(r.u32(), "bad node_iters");
  c.threshold_iters = checked_int(r.u32(), "bad threshold_iters");
  c.max_leaves = checked_int(r.u32(), "bad max_leaves");
  c.var_threshold = r.f64();
  c.sampling.patch_size = checked_int(r.u32(), "bad patch_size");
  c.sampling.label_dims = checked_int(r.u32(), "bad label_dims");
  c.frame_pairs_per_tree = checked_int(r.u32(), "bad frame_pairs_per_tree");
  c.min_child = checked_int(r.u32(), "bad min_child");
  c.seed = r.u64();
  c.sampling.stride = checked_int(r.u32(), "bad stride");
  c.sampling.max_samples_per_frame = r.u32();
  c.sampling.seed = r.u64();
  c.sampling.canny.sigma = r.f64();
  c.sampling.canny.low = r.f64();
  c.sampling.canny.high = r.f64();
  forest.feature_dims = checked_int(r.u32(), "bad feature_dims");
  try {
    c.validate();
  } catch (const UsageError& e) {
    throw DataError(std::string("invalid model config: ") + e.what());
  }
  if (c.sampling.patch_size == 0) throw DataError("invalid model config: patch size 0");
  if (forest.feature_dims < 2) throw DataError("invalid model config: feature dims");

  const Eigen::Index patch_values = Eigen::Index(c.sampling.patch_size) * c.sampling.patch_size * c.sampling.label_dims;
  const std::uint32_t n_trees = r.u32();
  if (n_trees == 0) throw DataError("model has no trees");
  if (n_trees != static_cast<std::uint32_t>(c.n_trees)) throw DataError("model tree count mismatch");
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    TreeProvenance prov;
    prov.seed = r.u64();
    prov.sample_count = r.u32();
    const std::uint32_t n_pairs = r.u32();
    if (n_pairs > r.remaining() / 4) throw DataError("truncated model file");
    for (std::uint32_t i = 0; i < n_pairs; ++i) prov.pair_indices.push_back(r.u32());

    RegressionTree tree;
    const std::uint32_t n_nodes = r.u32();
    if (n_nodes > r.remaining()) throw DataError("truncated model file");
    tree.nodes.reserve(n_nodes);
    for (std::uint32_t i = 0; i < n_nodes; ++i) {
      const std::uint8_t type = r.u8();
      if (type == 0) {
        LeafNode leaf;
        leaf.population = r.u32();
        leaf.mean_patch.resize(patch_values);
        for (Eigen::Index k = 0; k < patch_values; ++k) leaf.mean_patch(k) = r.f32();
        tree.nodes.emplace_back(std::move(leaf));
      } else if (type <= 4) {
        InternalNode node;
        node.split.type = static_cast<SplitType>(type);
        node.split.p1 = r.u16();
        node.split.p2 = r.u16();
        node.split.t = r.f64();
        node.left = r.u32();
        node.right = r.u32();
        tree.nodes.emplace_back(node);
      } else {
        throw DataError("unknown node type in model file");
      }
    }
    validate_tree(tree, forest.feature_dims, patch_values);
    forest.trees.push_back(std::move(tree));
    forest.provenance.push_back(std::move(prov));
  }
  if (r.remaining() != 0) throw DataError("trailing bytes in model file");
  return forest;
}

void save_model(const StructuredForest& forest, const std::string& path) {
  const auto bytes = serialize_model(forest);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write model file '" + path + "'");
}

StructuredForest load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_model(bytes);
}

}  // namespace msrf
