#include "msrf/camera.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <Eigen/QR>

#include "msrf/error.hpp"
#include "msrf/imagecore.hpp"
#include "msrf/random.hpp"

namespace msrf {

AffineModel AffineModel::inverse() const {
  if (!invertible()) throw DataError("affine model is not invertible");
  AffineModel inv;
  inv.linear = linear.inverse();
  inv.translation = -inv.linear * translation;
  return inv;
}

AffineModel AffineModel::translation_only(double tx, double ty) {
  AffineModel m;
  m.translation = {tx, ty};
  return m;
}

std::vector<Corner> detect_corners(const ImageBuffer& img, std::size_t max_corners, const HarrisParams& params) {
  const int w = img.width(), h = img.height();
  if (w < 3 || h < 3) throw DataError("image too small for corner detection");
  const Plane gray = to_grayscale(img);
  Plane ix(h, w), iy(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      ix(y, x) = 0.5 * (gray(y, std::min(x + 1, w - 1)) - gray(y, std::max(x - 1, 0)));
      iy(y, x) = 0.5 * (gray(std::min(y + 1, h - 1), x) - gray(std::max(y - 1, 0), x));
    }
  }
  const Eigen::ArrayXd g = gaussian_kernel(params.sigma, static_cast<int>(std::ceil(3.0 * params.sigma)));
  auto smooth = [&](const Plane& p) { return convolve_cols(convolve_rows(p, g), g); };
  const Plane sxx = smooth(ix * ix), syy = smooth(iy * iy), sxy = smooth(ix * iy);
  const Plane trace = sxx + syy;
  const Plane response = sxx * syy - sxy * sxy - params.k * trace * trace;

  const double peak = response.maxCoeff();
  if (!(peak > 0.0)) return {};
  const double floor = params.relative_threshold * peak;
  const int r = params.nms_radius;

  std::vector<Corner> corners;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = response(y, x);
      if (v <= floor) continue;
      bool is_max = true;
      for (int dy = -r; dy <= r && is_max; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if ((dx == 0 && dy == 0) || dx * dx + dy * dy > r * r) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const double o = response(ny, nx);
          // Equal plateaus keep the first pixel in raster order.
          if (o > v || (o == v && (ny < y || (ny == y && nx < x)))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) corners.push_back({static_cast<double>(x), static_cast<double>(y), v});
    }
  }
  std::stable_sort(corners.begin(), corners.end(),
                   [](const Corner& a, const Corner& b) { return a.response > b.response; });
  if (corners.size() > max_corners) corners.resize(max_corners);
  return corners;
}

std::vector<PointMatch> match_points(const ImageBuffer& a, const ImageBuffer& b, const std::vector<Corner>& corners,
                                     const MatchParams& params) {
  if (a.width() != b.width() || a.height() != b.height()) throw DataError("match_points: frame sizes differ");
  const Plane ga = to_grayscale(a), gb = to_grayscale(b);
  const int w = a.width(), h = a.height(), half = params.window / 2, n = params.window;
  auto inside = [&](int x, int y) { return x - half >= 0 && y - half >= 0 && x + half < w && y + half < h; };

  std::vector<PointMatch> matches;
  for (const Corner& c : corners) {
    const int cx = static_cast<int>(std::lround(c.x)), cy = static_cast<int>(std::lround(c.y));
    if (!inside(cx, cy)) continue;
    Plane wa = ga.block(cy - half, cx - half, n, n);
    wa -= wa.mean();
    const double na = std::sqrt(wa.square().sum());
    if (na < 1e-12) continue;

    double best = -2.0;
    int best_dx = 0, best_dy = 0;
    for (int dy = -params.search_radius; dy <= params.search_radius; ++dy) {
      for (int dx = -params.search_radius; dx <= params.search_radius; ++dx) {
        if (!inside(cx + dx, cy + dy)) continue;
        Plane wb = gb.block(cy + dy - half, cx + dx - half, n, n);
        wb -= wb.mean();
        const double nb = std::sqrt(wb.square().sum());
        if (nb < 1e-12) continue;
        const double score = (wa * wb).sum() / (na * nb);
        const bool closer = dx * dx + dy * dy < best_dx * best_dx + best_dy * best_dy;
        if (score > best || (score == best && closer)) {
          best = score;
          best_dx = dx;
          best_dy = dy;
        }
      }
    }
    if (best >= params.min_score) {
      matches.push_back({double(cx), double(cy), double(cx + best_dx), double(cy + best_dy), std::min(best, 1.0)});
    }
  }
  return matches;
}

std::optional<AffineModel> affine_from_three(const PointMatch& a, const PointMatch& b, const PointMatch& c) {
  Eigen::Matrix3d m;
  m << a.x1, a.y1, 1.0, b.x1, b.y1, 1.0, c.x1, c.y1, 1.0;
  // |det| is twice the triangle area.
  if (std::abs(m.determinant()) < 1e-3) return std::nullopt;
  const auto lu = m.partialPivLu();
  const Eigen::Vector3d px = lu.solve(Eigen::Vector3d(a.x2, b.x2, c.x2));
  const Eigen::Vector3d py = lu.solve(Eigen::Vector3d(a.y2, b.y2, c.y2));
  AffineModel model;
  model.linear << px(0), px(1), py(0), py(1);
  model.translation << px(2), py(2);
  if (!model.invertible()) return std::nullopt;
  return model;
}

std::optional<AffineModel> fit_affine(const std::vector<PointMatch>& matches) {
  if (matches.size() < 3) return std::nullopt;
  const Eigen::Index n = static_cast<Eigen::Index>(matches.size());
  Eigen::MatrixXd design(n, 3);
  Eigen::MatrixXd target(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const PointMatch& m = matches[static_cast<std::size_t>(i)];
    design.row(i) << m.x1, m.y1, 1.0;
    target.row(i) << m.x2, m.y2;
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < 3) return std::nullopt;
  const Eigen::MatrixXd params = qr.solve(target);  // 3 x 2
  AffineModel model;
  model.linear << params(0, 0), params(1, 0), params(0, 1), params(1, 1);
  model.translation << params(2, 0), params(2, 1);
  if (!model.invertible()) return std::nullopt;
  return model;
}

namespace {

std::size_t mark_inliers(const std::vector<PointMatch>& matches, const AffineModel& model, double tol,
                         std::vector<bool>& mask) {
  mask.assign(matches.size(), false);
  std::size_t count = 0;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const Eigen::Vector2d p = model.apply({matches[i].x1, matches[i].y1});
    if ((p - Eigen::Vector2d(matches[i].x2, matches[i].y2)).norm() <= tol) {
      mask[i] = true;
      ++count;
    }
  }
  return count;
}

}  // namespace

RansacResult ransac_affine(const std::vector<PointMatch>& matches, const RansacParams& params) {
  const std::size_t n = matches.size();
  if (n < 3) throw DataError("RANSAC needs at least 3 matches");
  if (params.iterations < 1) throw UsageError("RANSAC needs at least one iteration");
  Rng rng(params.seed);
  constexpr int kMaxResamples = 100;

  RansacResult best;
  std::vector<bool> mask;
  for (int it = 0; it < params.iterations; ++it) {
    std::optional<AffineModel> model;
    for (int attempt = 0; attempt < kMaxResamples && !model; ++attempt) {
      const std::size_t i = uniform_index(rng, n);
      std::size_t j = uniform_index(rng, n - 1);
      if (j >= i) ++j;
      std::size_t k = uniform_index(rng, n - 2);
      if (k >= std::min(i, j)) ++k;
      if (k >= std::max(i, j)) ++k;
      model = affine_from_three(matches[i], matches[j], matches[k]);
    }
    if (!model) continue;
    const std::size_t count = mark_inliers(matches, *model, params.tolerance_px, mask);
    if (count > best.inlier_count) {
      best.model = *model;
      best.inlier_count = count;
      best.inliers = mask;
    }
  }
  if (best.inlier_count < 3) throw DataError("RANSAC found fewer than 3 consistent matches");

  std::vector<PointMatch> consensus;
  for (std::size_t i = 0; i < n; ++i) {
    if (best.inliers[i]) consensus.push_back(matches[i]);
  }
  if (auto refit = fit_affine(consensus)) {
    const std::size_t count = mark_inliers(matches, *refit, params.tolerance_px, mask);
    if (count >= 3) {
      best.model = *refit;
      best.inlier_count = count;
      best.inliers = mask;
    }
  }
  return best;
}

FlowField affine_to_flow(const AffineModel& model, int width, int height) {
  FlowField flow(width, height);
  const Eigen::Matrix2d& a = model.linear;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      flow.u(y, x) = (a(0, 0) - 1.0) * x + a(0, 1) * y + model.translation(0);
      flow.v(y, x) = a(1, 0) * x + (a(1, 1) - 1.0) * y + model.translation(1);
    }
  }
  return flow;
}

FlowField correct_flow(const FlowField& measured, const AffineModel& model) {
  const FlowField camera = affine_to_flow(model, measured.width(), measured.height());
  return FlowField(measured.u - camera.u, measured.v - camera.v);
}

RansacResult estimate_camera_motion(const ImageBuffer& a, const ImageBuffer& b, const CameraMotionParams& params) {
  const auto corners = detect_corners(a, params.max_corners, params.harris);
  const auto matches = match_points(a, b, corners, params.matching);
  return ransac_affine(matches, params.ransac);
}

}  // namespace msrf
