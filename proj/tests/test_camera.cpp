#include <cmath>

#include <gtest/gtest.h>

#include "msrf/camera.hpp"
#include "msrf/error.hpp"
#include "msrf/imagecore.hpp"
#include "test_support.hpp"

using namespace msrf;

namespace {

AffineModel make_affine(double a11, double a12, double a21, double a22, double tx, double ty) {
  AffineModel m;
  m.linear << a11, a12, a21, a22;
  m.translation << tx, ty;
  return m;
}

std::vector<PointMatch> affine_matches(const AffineModel& m, int n, double outlier_fraction, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PointMatch> out;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d p(200 * uniform01(rng), 150 * uniform01(rng));
    Eigen::Vector2d q = m.apply(p);
    if (uniform01(rng) < outlier_fraction) q += Eigen::Vector2d(40 * uniform01(rng) - 20, 40 * uniform01(rng) - 20);
    out.push_back({p.x(), p.y(), q.x(), q.y(), 1.0});
  }
  return out;
}

// Lightly smoothed noise; `dx` shifts the content right by an integer.
ImageBuffer texture(int w, int h, int dx, std::uint64_t seed) {
  const ImageBuffer base = test::random_image(w + 16, h, 1, seed);
  const Eigen::ArrayXd k = gaussian_kernel(1.0, 2);
  const Plane smooth = convolve_cols(convolve_rows(base.channels[0], k), k);
  ImageBuffer img(w, h, 1);
  img.channels[0] = smooth.block(0, 8 - dx, h, w);
  return img;
}

}  // namespace

TEST(Corners, ConstantImageHasNone) {
  EXPECT_TRUE(detect_corners(ImageBuffer(40, 40, 1, 0.3), 100).empty());
}

TEST(Corners, SquareVertices) {
  ImageBuffer img(48, 48, 1, 0.0);
  img.channels[0].block(14, 12, 20, 20) = 1.0;  // x in [12, 31], y in [14, 33]
  const auto corners = detect_corners(img, 4);
  ASSERT_EQ(corners.size(), 4u);
  const std::array<std::pair<double, double>, 4> expected{{{11.5, 13.5}, {31.5, 13.5}, {11.5, 33.5}, {31.5, 33.5}}};
  for (const auto& [ex, ey] : expected) {
    bool found = false;
    for (const Corner& c : corners) found = found || (std::abs(c.x - ex) <= 1.5 && std::abs(c.y - ey) <= 1.5);
    EXPECT_TRUE(found) << ex << "," << ey;
  }
}

TEST(Corners, RespectsMaximum) {
  const ImageBuffer img = test::random_image(60, 60, 1, 3);
  EXPECT_LE(detect_corners(img, 7).size(), 7u);
  EXPECT_THROW(detect_corners(ImageBuffer(2, 2, 1), 5), DataError);
}

TEST(Match, IdentityAndKnownShift) {
  const ImageBuffer a = texture(96, 80, 0, 1);
  const ImageBuffer b = texture(96, 80, 5, 1);
  const auto corners = detect_corners(a, 40);
  ASSERT_GT(corners.size(), 5u);
  for (const PointMatch& m : match_points(a, a, corners)) {
    EXPECT_EQ(m.x1, m.x2);
    EXPECT_EQ(m.y1, m.y2);
    EXPECT_NEAR(m.score, 1.0, 1e-9);
  }
  const auto shifted = match_points(a, b, corners);
  ASSERT_GT(shifted.size(), 3u);
  for (const PointMatch& m : shifted) {
    EXPECT_NEAR(m.x2 - m.x1, 5.0, 1.0);
    EXPECT_NEAR(m.y2 - m.y1, 0.0, 1.0);
  }
}

TEST(Match, FlatWindowsGiveNoMatches) {
  const ImageBuffer flat(40, 40, 1, 0.5);
  EXPECT_TRUE(match_points(flat, flat, {{20, 20, 1.0}}).empty());
}

TEST(Ransac, ExactAffineWithoutNoise) {
  const AffineModel truth = make_affine(1.02, -0.03, 0.04, 0.98, 3.5, -2.0);
  const auto r = ransac_affine(affine_matches(truth, 60, 0.0, 1));
  EXPECT_LE((r.model.linear - truth.linear).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((r.model.translation - truth.translation).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(r.inlier_count, 60u);
}

TEST(Ransac, ThirtyPercentOutliers) {
  const AffineModel truth = make_affine(0.97, 0.05, -0.02, 1.03, -4.0, 1.5);
  const auto matches = affine_matches(truth, 200, 0.3, 2);
  const auto r = ransac_affine(matches, {500, 2.0, 7});
  EXPECT_LE((r.model.linear - truth.linear).cwiseAbs().maxCoeff(), 0.05);
  EXPECT_LE((r.model.translation - truth.translation).cwiseAbs().maxCoeff(), 0.5);
  const auto again = ransac_affine(matches, {500, 2.0, 7});
  EXPECT_EQ(again.inliers, r.inliers);
  EXPECT_EQ(again.model.linear, r.model.linear);
}

TEST(Ransac, IdentityAndErrors) {
  const auto r = ransac_affine(affine_matches(AffineModel{}, 20, 0.0, 3));
  EXPECT_LE((r.model.linear - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LE(r.model.translation.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(r.inlier_count, 20u);
  EXPECT_THROW(ransac_affine({{0, 0, 0, 0, 1}, {1, 0, 1, 0, 1}}), DataError);
  // All points on a line: no non-degenerate sample.
  std::vector<PointMatch> line;
  for (int i = 0; i < 10; ++i) line.push_back({double(i), double(2 * i), double(i), double(2 * i), 1});
  EXPECT_THROW(ransac_affine(line), DataError);
}

TEST(AffineFlow, IdentityTranslationAndFormula) {
  EXPECT_EQ(affine_to_flow(AffineModel{}, 5, 4).u.abs().maxCoeff(), 0.0);
  const FlowField t = affine_to_flow(AffineModel::translation_only(2, -1), 5, 4);
  EXPECT_TRUE((t.u == 2.0).all());
  EXPECT_TRUE((t.v == -1.0).all());
  const AffineModel m = make_affine(1.1, 0.2, -0.3, 0.9, 4, 5);
  const FlowField f = affine_to_flow(m, 7, 6);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 7; ++x) {
      EXPECT_NEAR(f.u(y, x), (1.1 - 1) * x + 0.2 * y + 4, 1e-9);
      EXPECT_NEAR(f.v(y, x), -0.3 * x + (0.9 - 1) * y + 5, 1e-9);
    }
  }
}

TEST(AffineFlow, TranslationsAdd) {
  const FlowField a = affine_to_flow(AffineModel::translation_only(1, 2), 4, 4);
  const FlowField b = affine_to_flow(AffineModel::translation_only(-3, 0.5), 4, 4);
  const FlowField ab = affine_to_flow(AffineModel::translation_only(-2, 2.5), 4, 4);
  EXPECT_TRUE(((a.u + b.u) == ab.u).all());
  EXPECT_TRUE(((a.v + b.v) == ab.v).all());
}

TEST(CorrectFlow, ResidualIdentityAndInverse) {
  const AffineModel m = make_affine(1.05, 0.0, 0.01, 0.95, -1, 2);
  const FlowField af = affine_to_flow(m, 8, 6);
  EXPECT_LE(correct_flow(af, m).u.abs().maxCoeff(), 0.0);
  const FlowField measured = test::random_flow(8, 6, 3.0, 4);
  EXPECT_TRUE((correct_flow(measured, AffineModel{}).u == measured.u).all());
  const FlowField c = correct_flow(measured, m);
  EXPECT_LE((c.u + af.u - measured.u).abs().maxCoeff(), 1e-12);
  EXPECT_LE((c.v + af.v - measured.v).abs().maxCoeff(), 1e-12);
}

TEST(CameraMotion, RecoversGlobalShift) {
  const ImageBuffer a = texture(120, 90, 0, 5);
  const ImageBuffer b = texture(120, 90, 3, 5);
  const auto r = estimate_camera_motion(a, b);
  EXPECT_NEAR(r.model.translation.x() + (r.model.linear(0, 0) - 1) * 60 + r.model.linear(0, 1) * 45, 3.0, 0.5);
  EXPECT_LE((r.model.linear - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 0.05);
}
