#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "msrf/error.hpp"
#include "msrf/srf.hpp"

namespace msrf {

bool split_response(const SplitRecord& split, std::span<const double> f) {
  const bool single = split.type == SplitType::kSingle;
  if (split.p1 >= f.size() || (!single && split.p2 >= f.size())) {
    throw DataError("split feature index out of range");
  }
  return split_value(split.type, f[split.p1], single ? 0.0 : f[split.p2]) >= split.t;
}

void ForestConfig::validate() const {
  if (n_trees < 1 || node_iters < 1 || threshold_iters < 1 || max_leaves < 1 ||
      frame_pairs_per_tree < 1 || min_child < 1) {
    throw UsageError("forest counts must all be >= 1");
  }
  if (!(var_threshold >= 0.0) || !std::isfinite(var_threshold)) {
    throw UsageError("var_threshold must be finite and >= 0");
  }
  if (sampling.patch_size < 0 || (sampling.patch_size > 0 && sampling.patch_size % 2 == 0)) {
    throw UsageError("patch_size must be odd (or 0 for automatic)");
  }
  if (sampling.label_dims != 2 && sampling.label_dims != 4) throw UsageError("label_dims must be 2 or 4");
  if (sampling.stride < 1) throw UsageError("stride must be >= 1");
}

TrainingData pack_samples(std::span<const TrainingSample> samples) {
  if (samples.empty()) throw DataError("no training samples");
  TrainingData data;
  const auto& first = samples.front().motion;
  data.patch_pixels = static_cast<int>(first.rows());
  data.label_dims = static_cast<int>(first.cols());
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  data.features.resize(n, kDescriptorDims);
  data.labels.resize(n, first.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const TrainingSample& s = samples[static_cast<std::size_t>(i)];
    if (s.motion.rows() != first.rows() || s.motion.cols() != first.cols()) {
      throw DataError("training samples have inconsistent motion patch shapes");
    }
    data.features.row(i) = s.descriptor.transpose();
    // MotionPatch is row-major, so its storage is already pixel-major.
    data.labels.row(i) = Eigen::Map<const Eigen::RowVectorXd>(s.motion.data(), s.motion.size());
  }
  return data;
}

double node_variance(std::span<const MotionPatch> patches) {
  if (patches.size() < 2) return 0.0;
  const auto rows = patches.front().rows(), cols = patches.front().cols();
  MotionPatch mean = MotionPatch::Zero(rows, cols);
  for (const MotionPatch& p : patches) {
    if (p.rows() != rows || p.cols() != cols) throw DataError("node_variance: patch shape mismatch");
    mean += p;
  }
  mean /= static_cast<double>(patches.size());
  double ss = 0.0;
  for (const MotionPatch& p : patches) ss += (p - mean).squaredNorm();
  return ss / (static_cast<double>(rows) * static_cast<double>(patches.size() - 1));
}

double node_variance(const LabelMatrix& labels, std::span<const int> rows, int patch_pixels) {
  if (rows.size() < 2) return 0.0;
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(labels.cols());
  for (int r : rows) mean += labels.row(r);
  mean /= static_cast<double>(rows.size());
  double ss = 0.0;
  for (int r : rows) ss += (labels.row(r) - mean).squaredNorm();
  return ss / (static_cast<double>(patch_pixels) * static_cast<double>(rows.size() - 1));
}

double split_objective(const LabelMatrix& labels, std::span<const int> left, std::span<const int> right,
                       int patch_pixels) {
  const double nl = static_cast<double>(left.size()), nr = static_cast<double>(right.size());
  if (nl + nr == 0.0) return 0.0;
  return (node_variance(labels, left, patch_pixels) * nl + node_variance(labels, right, patch_pixels) * nr) /
         (nl + nr);
}

std::vector<SplitRecord> draw_split_candidates(const FeatureMatrix& features, std::span<const int> rows,
                                               const ForestConfig& config, Rng& rng) {
  const auto n_features = static_cast<std::uint64_t>(features.cols());
  if (n_features < 2) throw DataError("split search needs at least two feature dimensions");
  if (n_features > 65536) throw DataError("feature index does not fit the split record");
  std::vector<SplitRecord> out;
  out.reserve(static_cast<std::size_t>(config.node_iters) * config.threshold_iters);
  for (int k = 0; k < config.node_iters; ++k) {
    SplitRecord base;
    base.type = static_cast<SplitType>(1 + uniform_index(rng, 4));
    base.p1 = static_cast<std::uint16_t>(uniform_index(rng, n_features));
    auto p2 = uniform_index(rng, n_features - 1);
    if (p2 >= base.p1) ++p2;
    base.p2 = static_cast<std::uint16_t>(p2);

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int r : rows) {
      const double v = split_value(base.type, features(r, base.p1), features(r, base.p2));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    for (int j = 0; j < config.threshold_iters; ++j) {
      SplitRecord c = base;
      c.t = lo + uniform01(rng) * (hi - lo);
      out.push_back(c);
    }
  }
  return out;
}

namespace {

// Variance of one child from centred sums; sq is the sum of squared row norms.
double side_variance(double sq, const Eigen::Ref<const Eigen::RowVectorXd>& sum, int count, int patch_pixels) {
  if (count < 2) return 0.0;
  const double ss = std::max(0.0, sq - sum.squaredNorm() / count);
  return ss / (static_cast<double>(patch_pixels) * (count - 1));
}

}  // namespace

std::optional<SplitResult> best_split(const TrainingData& data, std::span<const int> rows,
                                      const ForestConfig& config, Rng& rng) {
  const int n = static_cast<int>(rows.size());
  if (n < 2) throw DataError("best_split needs at least two samples");
  if (n < 2 * config.min_child) return std::nullopt;

  const std::vector<SplitRecord> candidates = draw_split_candidates(data.features, rows, config, rng);
  const int T = config.threshold_iters;
  const Eigen::Index pd = data.labels.cols();

  LabelMatrix centred(n, pd);
  for (int i = 0; i < n; ++i) centred.row(i) = data.labels.row(rows[i]);
  const Eigen::RowVectorXd mean = centred.colwise().mean();
  centred.rowwise() -= mean;
  const Eigen::VectorXd row_sq = centred.rowwise().squaredNorm();
  const double parent_var = row_sq.sum() / (static_cast<double>(data.patch_pixels) * (n - 1));
  const double tol = split_tie_tolerance(parent_var);

  std::vector<double> objective(candidates.size(), std::numeric_limits<double>::infinity());
  std::vector<double> response(n);
  std::vector<int> order(T);
  std::vector<double> sorted_t(T);
  LabelMatrix bucket_sum(T + 1, pd), prefix_sum(T + 1, pd);
  Eigen::VectorXd bucket_sq(T + 1);
  Eigen::VectorXi bucket_count(T + 1);

  for (std::size_t g = 0; g < candidates.size(); g += T) {
    const SplitRecord& base = candidates[g];
    for (int i = 0; i < n; ++i) {
      response[i] = split_value(base.type, data.features(rows[i], base.p1), data.features(rows[i], base.p2));
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return candidates[g + a].t < candidates[g + b].t; });
    for (int m = 0; m < T; ++m) sorted_t[m] = candidates[g + order[m]].t;

    bucket_sum.setZero();
    bucket_sq.setZero();
    bucket_count.setZero();
    for (int i = 0; i < n; ++i) {
      // Bucket = number of thresholds <= response; threshold of rank m sends
      // the sample left iff bucket > m.
      const auto b = std::upper_bound(sorted_t.begin(), sorted_t.end(), response[i]) - sorted_t.begin();
      bucket_sum.row(b) += centred.row(i);
      bucket_sq(b) += row_sq(i);
      ++bucket_count(b);
    }
    // prefix over buckets 0..m is the right child of the rank-m threshold.
    prefix_sum.row(0) = bucket_sum.row(0);
    for (int b = 1; b <= T; ++b) prefix_sum.row(b) = prefix_sum.row(b - 1) + bucket_sum.row(b);
    const Eigen::RowVectorXd total_sum = prefix_sum.row(T);

    double right_sq = 0.0;
    int right_count = 0;
    const double total_sq = bucket_sq.sum();
    for (int m = 0; m < T; ++m) {
      right_sq += bucket_sq(m);
      right_count += bucket_count(m);
      const int left_count = n - right_count;
      if (left_count < config.min_child || right_count < config.min_child) continue;
      const Eigen::RowVectorXd left_sum = total_sum - prefix_sum.row(m);
      const double vl = side_variance(total_sq - right_sq, left_sum, left_count, data.patch_pixels);
      const double vr = side_variance(right_sq, prefix_sum.row(m), right_count, data.patch_pixels);
      objective[g + order[m]] = (vl * left_count + vr * right_count) / n;
    }
  }
  const double best_obj = *std::min_element(objective.begin(), objective.end());
  if (!std::isfinite(best_obj)) return std::nullopt;
  // Earliest candidate within the tie tolerance of the minimum.
  std::optional<std::size_t> best_index;
  for (std::size_t j = 0; !best_index; ++j) {
    if (objective[j] <= best_obj + tol) best_index = j;
  }

  SplitResult result;
  result.split = candidates[*best_index];
  result.candidate_index = *best_index;
  for (int r : rows) {
    const auto f = data.features.row(r);
    const bool left = split_value(result.split.type, f(result.split.p1), f(result.split.p2)) >= result.split.t;
    (left ? result.left : result.right).push_back(r);
  }
  result.objective = split_objective(data.labels, result.left, result.right, data.patch_pixels);
  return result;
}

}  // namespace msrf
