#pragma once

#include <optional>
#include <span>
#include <string>

#include "msrf/types.hpp"

namespace msrf {

// Vectors shorter than this are excluded from the cosine scores.
inline constexpr double kCosineNormFloor = 1e-6;

struct ScoreReport {
  double epe = 0.0;              // px
  double zero_epe = 0.0;         // px
  double direction_pct = 0.0;    // [-100, 100]
  double orientation_pct = 0.0;  // [0, 100]
  std::size_t n_points = 0;      // masked pixels entering the EPE means
  std::size_t n_cosine_points = 0;  // masked pixels entering the cosine means
};

// Mean end-point error over masked pixels.
double epe_at_mask(const FlowField& pred, const FlowField& ref, const EdgeMask& mask);
// 100 x mean signed cosine similarity.
double direction_score(const FlowField& pred, const FlowField& ref, const EdgeMask& mask);
// 100 x mean absolute cosine similarity (half-circle orientation).
double orientation_score(const FlowField& pred, const FlowField& ref, const EdgeMask& mask);
// EPE of the all-zero prediction: mean masked reference magnitude.
double zero_baseline_epe(const FlowField& ref, const EdgeMask& mask);

// Per-pixel end-point error map.
Plane epe_map(const FlowField& pred, const FlowField& ref);

// All four metrics. Direction and orientation are 0 with n_cosine_points == 0
// when no masked pixel has two usable vectors.
ScoreReport score_flow(const FlowField& pred, const FlowField& ref, const EdgeMask& mask);

// Unweighted mean of every metric, or weighted by point counts (EPEs by
// n_points, cosine scores by n_cosine_points).
ScoreReport aggregate(std::span<const ScoreReport> reports, bool weighted = false);

std::string format_score_header();
std::string format_score_row(const std::string& label, const ScoreReport& r);
std::string score_to_json(const ScoreReport& r);

}  // namespace msrf
