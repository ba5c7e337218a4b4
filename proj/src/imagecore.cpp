#include "msrf/imagecore.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "msrf/error.hpp"

namespace msrf {
namespace {

void require_same_size(const ImageBuffer& img, const FlowField& flow) {
  if (img.width() != flow.width() || img.height() != flow.height()) {
    throw DataError("flow dimensions do not match image dimensions");
  }
}

}  // namespace

Plane to_grayscale(const ImageBuffer& img) {
  if (img.channel_count() == 0) throw DataError("empty image");
  Plane gray = img.channels[0];
  for (int c = 1; c < img.channel_count(); ++c) gray += img.channels[c];
  return gray / static_cast<double>(img.channel_count());
}

ImageBuffer to_rgb(const ImageBuffer& img) {
  if (img.channel_count() == 3) return img;
  if (img.channel_count() != 1) throw DataError("expected a 1- or 3-channel image");
  ImageBuffer out;
  out.channels = {img.channels[0], img.channels[0], img.channels[0]};
  return out;
}

ImageBuffer to_opponent(const ImageBuffer& img, bool rescale) {
  if (img.channel_count() != 3) throw DataError("to_opponent requires a 3-channel image");
  const double s2 = std::numbers::sqrt2;
  const double s3 = std::numbers::sqrt3;
  const double s6 = std::sqrt(6.0);
  const Plane& r = img.channels[0];
  const Plane& g = img.channels[1];
  const Plane& b = img.channels[2];

  ImageBuffer out;
  out.channels.resize(3);
  out.channels[0] = (r - g) / s2;
  out.channels[1] = (r + g - 2.0 * b) / s6;
  out.channels[2] = (r + g + b) / s3;
  if (rescale) {
    // Analytic ranges: O1 in [-1/sqrt2, 1/sqrt2], O2 in [-2/sqrt6, 2/sqrt6], O3 in [0, sqrt3].
    out.channels[0] = (out.channels[0] + 1.0 / s2) * (s2 / 2.0);
    out.channels[1] = (out.channels[1] + 2.0 / s6) * (s6 / 4.0);
    out.channels[2] = out.channels[2] / s3;
  }
  return out;
}

Eigen::ArrayXd gaussian_kernel(double sigma, int radius) {
  if (!(sigma > 0.0) || radius < 0) throw UsageError("gaussian kernel needs sigma > 0");
  Eigen::ArrayXd k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k(i + radius) = std::exp(-0.5 * i * i / (sigma * sigma));
  return k / k.sum();
}

Plane convolve_rows(const Plane& src, const Eigen::ArrayXd& kernel) {
  const int h = static_cast<int>(src.rows()), w = static_cast<int>(src.cols());
  const int r = static_cast<int>(kernel.size()) / 2;
  Plane dst(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += kernel(k + r) * src(y, std::clamp(x + k, 0, w - 1));
      dst(y, x) = acc;
    }
  }
  return dst;
}

Plane convolve_cols(const Plane& src, const Eigen::ArrayXd& kernel) {
  const int h = static_cast<int>(src.rows()), w = static_cast<int>(src.cols());
  const int r = static_cast<int>(kernel.size()) / 2;
  Plane dst(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += kernel(k + r) * src(std::clamp(y + k, 0, h - 1), x);
      dst(y, x) = acc;
    }
  }
  return dst;
}

namespace {

struct SobelResult {
  Plane gx, gy;
};

SobelResult smoothed_sobel(const ImageBuffer& img, double sigma) {
  const Eigen::ArrayXd gauss = gaussian_kernel(sigma, 2);
  const Plane smooth = convolve_cols(convolve_rows(to_grayscale(img), gauss), gauss);
  Eigen::ArrayXd diff(3), tri(3);
  diff << -1.0, 0.0, 1.0;
  tri << 1.0, 2.0, 1.0;
  SobelResult out;
  out.gx = convolve_cols(convolve_rows(smooth, diff), tri);
  out.gy = convolve_rows(convolve_cols(smooth, diff), tri);
  return out;
}

}  // namespace

Plane canny_gradient_magnitude(const ImageBuffer& img, double sigma) {
  const SobelResult s = smoothed_sobel(img, sigma);
  return (s.gx.square() + s.gy.square()).sqrt();
}

EdgeMask canny_edges(const ImageBuffer& img, const CannyParams& params) {
  if (!std::isfinite(params.low) || !std::isfinite(params.high) || !std::isfinite(params.sigma)) {
    throw UsageError("canny thresholds must be finite");
  }
  if (params.low < 0.0 || params.high < params.low) throw UsageError("canny requires high >= low >= 0");

  const SobelResult s = smoothed_sobel(img, params.sigma);
  const Plane mag = (s.gx.square() + s.gy.square()).sqrt();
  const int h = static_cast<int>(mag.rows()), w = static_cast<int>(mag.cols());
  auto at = [&](int x, int y) { return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : mag(y, x); };

  // Non-maximum suppression. Strict on the negative side, non-strict on the
  // positive side, so a plateau of two equal maxima keeps exactly one pixel.
  Plane thin = Plane::Zero(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double m = mag(y, x);
      if (m <= 0.0) continue;
      double angle = std::atan2(s.gy(y, x), s.gx(y, x)) * 180.0 / std::numbers::pi;
      if (angle < 0.0) angle += 180.0;
      int dx, dy;
      if (angle < 22.5 || angle >= 157.5) {
        dx = 1, dy = 0;
      } else if (angle < 67.5) {
        dx = 1, dy = 1;
      } else if (angle < 112.5) {
        dx = 0, dy = 1;
      } else {
        dx = -1, dy = 1;
      }
      if (m > at(x - dx, y - dy) && m >= at(x + dx, y + dy)) thin(y, x) = m;
    }
  }

  EdgeMask edges(w, h);
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (thin(y, x) > params.high && thin(y, x) > params.low && !edges.mask(y, x)) {
        edges.mask(y, x) = true;
        stack.emplace_back(x, y);
        while (!stack.empty()) {
          const auto [cx, cy] = stack.back();
          stack.pop_back();
          for (int ny = cy - 1; ny <= cy + 1; ++ny) {
            for (int nx = cx - 1; nx <= cx + 1; ++nx) {
              if (nx < 0 || ny < 0 || nx >= w || ny >= h || edges.mask(ny, nx)) continue;
              if (thin(ny, nx) > params.low) {
                edges.mask(ny, nx) = true;
                stack.emplace_back(nx, ny);
              }
            }
          }
        }
      }
    }
  }
  return edges;
}

ImageBuffer warp_image(const ImageBuffer& img, const FlowField& flow, double step) {
  require_same_size(img, flow);
  if (!std::isfinite(step)) throw UsageError("warp step must be finite");
  const int w = img.width(), h = img.height(), n = img.channel_count();
  Plane weight = Plane::Zero(h, w);
  std::vector<Plane> acc(n, Plane::Zero(h, w));

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double tx = x + step * flow.u(y, x);
      const double ty = y + step * flow.v(y, x);
      if (!std::isfinite(tx) || !std::isfinite(ty)) continue;
      const double fx0 = std::floor(tx), fy0 = std::floor(ty);
      const double ax = tx - fx0, ay = ty - fy0;
      const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
      const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      for (int k = 0; k < 4; ++k) {
        if (wts[k] <= 0.0 || xs[k] < 0 || ys[k] < 0 || xs[k] >= w || ys[k] >= h) continue;
        weight(ys[k], xs[k]) += wts[k];
        for (int c = 0; c < n; ++c) acc[c](ys[k], xs[k]) += wts[k] * img.channels[c](y, x);
      }
    }
  }

  ImageBuffer out = img;
  for (int c = 0; c < n; ++c) {
    out.channels[c] = (weight > 1e-12).select(acc[c] / weight.max(1e-12), img.channels[c]);
  }
  return out;
}

Plane resize_plane(const Plane& plane, int width, int height) {
  if (width <= 0 || height <= 0) throw UsageError("resize target must be positive");
  const int sw = static_cast<int>(plane.cols()), sh = static_cast<int>(plane.rows());
  Plane out(height, width);
  const double rx = static_cast<double>(sw) / width, ry = static_cast<double>(sh) / height;
  for (int y = 0; y < height; ++y) {
    const double sy = std::clamp((y + 0.5) * ry - 0.5, 0.0, sh - 1.0);
    const int y0 = static_cast<int>(sy), y1 = std::min(y0 + 1, sh - 1);
    const double ay = sy - y0;
    for (int x = 0; x < width; ++x) {
      const double sx = std::clamp((x + 0.5) * rx - 0.5, 0.0, sw - 1.0);
      const int x0 = static_cast<int>(sx), x1 = std::min(x0 + 1, sw - 1);
      const double ax = sx - x0;
      out(y, x) = (1 - ay) * ((1 - ax) * plane(y0, x0) + ax * plane(y0, x1)) +
                  ay * ((1 - ax) * plane(y1, x0) + ax * plane(y1, x1));
    }
  }
  return out;
}

ImageBuffer resize_image(const ImageBuffer& img, int width, int height) {
  ImageBuffer out;
  for (const Plane& c : img.channels) out.channels.push_back(resize_plane(c, width, height));
  return out;
}

}  // namespace msrf
