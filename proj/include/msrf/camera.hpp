#pragma once

#include <cstdint>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "msrf/types.hpp"

namespace msrf {

// (x, y) -> linear * (x, y) + translation.
struct AffineModel {
  Eigen::Matrix2d linear = Eigen::Matrix2d::Identity();
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();

  Eigen::Vector2d apply(const Eigen::Vector2d& p) const { return linear * p + translation; }
  double det() const { return linear.determinant(); }
  bool invertible() const { return linear.allFinite() && translation.allFinite() && std::abs(det()) > 1e-6; }
  AffineModel inverse() const;
  static AffineModel translation_only(double tx, double ty);
};

struct Corner {
  double x = 0.0, y = 0.0;
  double response = 0.0;
};

struct HarrisParams {
  double k = 0.04;
  double sigma = 1.5;
  int nms_radius = 5;
  double relative_threshold = 0.01;  // of the strongest response
};

// Harris corners, non-maximum suppressed in a disc, strongest first.
std::vector<Corner> detect_corners(const ImageBuffer& img, std::size_t max_corners, const HarrisParams& params = {});

struct PointMatch {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;
  double score = 0.0;  // zero-normalized cross-correlation
};

struct MatchParams {
  int window = 9;
  int search_radius = 15;
  double min_score = 0.8;
};

// Best ZNCC displacement per corner within the search radius. Corners with a
// flat window, or whose best score is below min_score, produce no match.
std::vector<PointMatch> match_points(const ImageBuffer& a, const ImageBuffer& b, const std::vector<Corner>& corners,
                                     const MatchParams& params = {});

struct RansacParams {
  int iterations = 500;
  double tolerance_px = 2.0;
  std::uint64_t seed = 0;
};

struct RansacResult {
  AffineModel model;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
};

// Exact affine through three correspondences; nullopt when (near) collinear.
std::optional<AffineModel> affine_from_three(const PointMatch& a, const PointMatch& b, const PointMatch& c);

// Least-squares affine over the given matches; nullopt when degenerate.
std::optional<AffineModel> fit_affine(const std::vector<PointMatch>& matches);

// 3-point RANSAC; the consensus set with most inliers (ties: earliest
// iteration) is refitted by least squares and the inlier mask recomputed.
RansacResult ransac_affine(const std::vector<PointMatch>& matches, const RansacParams& params = {});

// Displacement field induced by the model: A(x) - x.
FlowField affine_to_flow(const AffineModel& model, int width, int height);

// measured - affine_to_flow(model).
FlowField correct_flow(const FlowField& measured, const AffineModel& model);

struct CameraMotionParams {
  std::size_t max_corners = 500;
  HarrisParams harris;
  MatchParams matching;
  RansacParams ransac;
};

// Corners on `a`, ZNCC matches into `b`, RANSAC affine.
RansacResult estimate_camera_motion(const ImageBuffer& a, const ImageBuffer& b, const CameraMotionParams& params = {});

}  // namespace msrf
