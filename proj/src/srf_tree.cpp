#include <algorithm>
#include <numeric>
#include <optional>
#include <queue>
#include <sstream>

#include "msrf/error.hpp"
#include "msrf/srf.hpp"

namespace msrf {

const LeafNode& RegressionTree::route(std::span<const double> features) const {
  if (nodes.empty()) throw DataError("empty tree");
  std::size_t id = 0;
  while (const auto* internal = std::get_if<InternalNode>(&nodes[id])) {
    id = split_response(internal->split, features) ? internal->left : internal->right;
  }
  return std::get<LeafNode>(nodes[id]);
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return std::holds_alternative<LeafNode>(n); }));
}

std::string GrowthTrace::to_text() const {
  std::ostringstream out;
  out.precision(17);
  for (const GrowthEvent& e : events) {
    switch (e.kind) {
      case GrowthEvent::Kind::kPush: out << "push"; break;
      case GrowthEvent::Kind::kSplit: out << "split"; break;
      case GrowthEvent::Kind::kLeaf: out << "leaf"; break;
    }
    out << " node=" << e.node << " var=" << e.variance << " leaf_count=" << e.terminal_count << '\n';
  }
  return out.str();
}

namespace {

struct BuildNode {
  std::vector<int> rows;
  double variance = 0.0;
  std::optional<SplitRecord> split;
  int left = -1, right = -1;
};

struct FrontierEntry {
  double variance;
  int id;
};

struct FrontierOrder {
  // Max-heap on variance; equal variances pop the lower id first.
  bool operator()(const FrontierEntry& a, const FrontierEntry& b) const {
    if (a.variance != b.variance) return a.variance < b.variance;
    return a.id > b.id;
  }
};

LeafNode make_leaf(const TrainingData& data, const std::vector<int>& rows) {
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(data.labels.cols());
  for (int r : rows) mean += data.labels.row(r);
  mean /= static_cast<double>(rows.size());
  return {mean.transpose().cast<float>(), static_cast<std::uint32_t>(rows.size())};
}

}  // namespace

RegressionTree grow_tree(const TrainingData& data, const ForestConfig& config, Rng& rng, GrowthTrace* trace) {
  if (data.size() == 0) throw DataError("grow_tree: no samples");
  auto log = [&](GrowthEvent::Kind kind, int id, double var, int terminals) {
    if (trace) trace->events.push_back({kind, id, var, terminals});
  };

  std::vector<BuildNode> build;
  build.push_back({});
  build[0].rows.resize(static_cast<std::size_t>(data.size()));
  std::iota(build[0].rows.begin(), build[0].rows.end(), 0);
  build[0].variance = node_variance(data.labels, build[0].rows, data.patch_pixels);

  std::priority_queue<FrontierEntry, std::vector<FrontierEntry>, FrontierOrder> frontier;
  int terminals = 1;
  auto enqueue = [&](int id) {
    if (build[id].variance < config.var_threshold) {
      log(GrowthEvent::Kind::kLeaf, id, build[id].variance, terminals);
    } else {
      frontier.push({build[id].variance, id});
      log(GrowthEvent::Kind::kPush, id, build[id].variance, terminals);
    }
  };
  enqueue(0);

  while (!frontier.empty() && terminals < config.max_leaves) {
    const int id = frontier.top().id;
    frontier.pop();
    auto result = build[id].rows.size() >= 2 ? best_split(data, build[id].rows, config, rng) : std::nullopt;
    if (!result) {
      log(GrowthEvent::Kind::kLeaf, id, build[id].variance, terminals);
      continue;
    }
    ++terminals;
    log(GrowthEvent::Kind::kSplit, id, build[id].variance, terminals);
    build[id].split = result->split;
    for (std::vector<int>* child_rows : {&result->left, &result->right}) {
      BuildNode child;
      child.rows = std::move(*child_rows);
      child.variance = node_variance(data.labels, child.rows, data.patch_pixels);
      build.push_back(std::move(child));
    }
    const int left = static_cast<int>(build.size()) - 2;
    build[id].left = left;
    build[id].right = left + 1;
    build[id].rows.clear();
    build[id].rows.shrink_to_fit();
    enqueue(left);
    enqueue(left + 1);
  }
  while (!frontier.empty()) {
    log(GrowthEvent::Kind::kLeaf, frontier.top().id, frontier.top().variance, terminals);
    frontier.pop();
  }

  // Emit in pre-order so that the stored layout is canonical.
  RegressionTree tree;
  std::vector<std::pair<int, int>> stack{{0, -1}};  // (build id, parent slot to patch)
  while (!stack.empty()) {
    const auto [id, parent] = stack.back();
    stack.pop_back();
    const int slot = static_cast<int>(tree.nodes.size());
    if (build[id].split) {
      tree.nodes.emplace_back(InternalNode{*build[id].split, 0, 0});
      stack.push_back({build[id].right, slot});
      stack.push_back({build[id].left, slot});
    } else {
      tree.nodes.emplace_back(make_leaf(data, build[id].rows));
    }
    if (parent >= 0) {
      auto& p = std::get<InternalNode>(tree.nodes[parent]);
      // The left child is always emitted first.
      if (p.left == 0) {
        p.left = static_cast<std::uint32_t>(slot);
      } else {
        p.right = static_cast<std::uint32_t>(slot);
      }
    }
  }
  return tree;
}

}  // namespace msrf
