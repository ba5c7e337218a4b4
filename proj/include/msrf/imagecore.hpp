#pragma once

#include <string>

#include "msrf/types.hpp"

namespace msrf {

// Reads PNG (8/16-bit gray, gray+alpha, RGB, RGBA, palette) or binary PGM/PPM.
// Alpha is dropped. Values are normalized to [0,1] by the format's maximum.
ImageBuffer load_image(const std::string& path);

// Writes an 8-bit PNG (1 or 3 channels). Values are clamped to [0,1] and
// rounded to the nearest 1/255 step. Paths ending in .ppm/.pgm are written
// as binary PNM instead.
void save_image(const ImageBuffer& img, const std::string& path);

// Mean over channels.
Plane to_grayscale(const ImageBuffer& img);

// Three-channel copy; grayscale is replicated.
ImageBuffer to_rgb(const ImageBuffer& img);

// Opponent color transform (R-G)/sqrt2, (R+G-2B)/sqrt6, (R+G+B)/sqrt3.
// With rescale, each channel's analytic range is mapped affinely onto [0,1].
ImageBuffer to_opponent(const ImageBuffer& img, bool rescale = true);

struct CannyParams {
  double sigma = 1.4;
  double low = 0.1;
  double high = 0.2;
};

// Gradient magnitude of the smoothed grayscale image (unscaled Sobel response).
// Exposed so callers can check hysteresis input.
Plane canny_gradient_magnitude(const ImageBuffer& img, double sigma);

// Gaussian smoothing (5x5, replicate border) -> Sobel gradient -> non-maximum
// suppression -> hysteresis with 8-connectivity. Weak pixels have magnitude
// > low, seeds have magnitude > high.
EdgeMask canny_edges(const ImageBuffer& img, const CannyParams& params = {});

// Forward-maps every source pixel to (x + step*u, y + step*v) with bilinear
// splatting; pixels receiving no weight keep the source value.
ImageBuffer warp_image(const ImageBuffer& img, const FlowField& flow, double step);

// Bilinear resize with pixel-center alignment.
Plane resize_plane(const Plane& plane, int width, int height);
ImageBuffer resize_image(const ImageBuffer& img, int width, int height);

// Separable 1-D convolution with replicate-edge padding. kernel size is odd.
Plane convolve_rows(const Plane& src, const Eigen::ArrayXd& kernel);
Plane convolve_cols(const Plane& src, const Eigen::ArrayXd& kernel);

// Normalized sampled Gaussian of the given radius.
Eigen::ArrayXd gaussian_kernel(double sigma, int radius);

}  // namespace msrf
