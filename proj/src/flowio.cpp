#include "msrf/flowio.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <vector>

#include "msrf/error.hpp"
#include "msrf/imagecore.hpp"

namespace msrf {

LabelField to_label_field(const FlowField& flow) {
  LabelField out;
  out.planes = {flow.u, flow.v};
  return out;
}

LabelField to_label_field(const FlowDerivativeField& d) {
  LabelField out;
  out.planes = {d.du_dx, d.du_dy, d.dv_dx, d.dv_dy};
  return out;
}

FlowField to_flow_field(const LabelField& labels) {
  if (labels.dims() != 2) throw DataError("label field is not a flow field (D != 2)");
  return FlowField(labels.planes[0], labels.planes[1]);
}

FlowDerivativeField to_derivative_field(const LabelField& labels) {
  if (labels.dims() != 4) throw DataError("label field is not a derivative field (D != 4)");
  return {labels.planes[0], labels.planes[1], labels.planes[2], labels.planes[3]};
}

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

}  // namespace

bool all_finite(const FlowField& field) { return field.u.isFinite().all() && field.v.isFinite().all(); }

FlowField read_flo(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open flow file '" + path + "'");
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < 12) throw DataError("truncated flow file '" + path + "'");
  if (std::bit_cast<float>(get_u32(bytes.data())) != kFloMagic) {
    throw DataError("bad magic in flow file '" + path + "'");
  }
  const auto width = static_cast<std::int32_t>(get_u32(bytes.data() + 4));
  const auto height = static_cast<std::int32_t>(get_u32(bytes.data() + 8));
  if (width <= 0 || height <= 0) throw DataError("invalid dimensions in flow file '" + path + "'");
  const std::uint64_t n = std::uint64_t(width) * std::uint64_t(height);
  if (bytes.size() - 12 < n * 8) throw DataError("truncated flow file '" + path + "'");

  FlowField field(width, height);
  const unsigned char* p = bytes.data() + 12;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x, p += 8) {
      const float u = std::bit_cast<float>(get_u32(p));
      const float v = std::bit_cast<float>(get_u32(p + 4));
      if (!std::isfinite(u) || !std::isfinite(v)) {
        throw DataError("non-finite value in flow file '" + path + "'");
      }
      field.u(y, x) = u;
      field.v(y, x) = v;
    }
  }
  return field;
}

void write_flo(const FlowField& field, const std::string& path) {
  if (!all_finite(field)) throw DataError("write_flo: field contains non-finite values");
  const int w = field.width(), h = field.height();
  std::vector<unsigned char> bytes;
  bytes.reserve(12 + std::size_t(w) * h * 8);
  put_u32(bytes, std::bit_cast<std::uint32_t>(kFloMagic));
  put_u32(bytes, static_cast<std::uint32_t>(w));
  put_u32(bytes, static_cast<std::uint32_t>(h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(field.u(y, x))));
      put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(field.v(y, x))));
    }
  }
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write flow file '" + path + "'");
}

namespace {

Plane diff_x(const Plane& f) {
  const Eigen::Index w = f.cols();
  Plane d(f.rows(), w);
  d.middleCols(1, w - 2) = (f.rightCols(w - 2) - f.leftCols(w - 2)) / 2.0;
  d.col(0) = f.col(1) - f.col(0);
  d.col(w - 1) = f.col(w - 1) - f.col(w - 2);
  return d;
}

Plane diff_y(const Plane& f) {
  const Eigen::Index h = f.rows();
  Plane d(h, f.cols());
  d.middleRows(1, h - 2) = (f.bottomRows(h - 2) - f.topRows(h - 2)) / 2.0;
  d.row(0) = f.row(1) - f.row(0);
  d.row(h - 1) = f.row(h - 1) - f.row(h - 2);
  return d;
}

// Standard 55-color wheel: RY, YG, GC, CB, BM, MR segments.
const std::vector<std::array<double, 3>>& color_wheel() {
  static const std::vector<std::array<double, 3>> wheel = [] {
    std::vector<std::array<double, 3>> cols;
    constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    for (int i = 0; i < RY; ++i) cols.push_back({255, double(255 * i / RY), 0});
    for (int i = 0; i < YG; ++i) cols.push_back({double(255 - 255 * i / YG), 255, 0});
    for (int i = 0; i < GC; ++i) cols.push_back({0, 255, double(255 * i / GC)});
    for (int i = 0; i < CB; ++i) cols.push_back({0, double(255 - 255 * i / CB), 255});
    for (int i = 0; i < BM; ++i) cols.push_back({double(255 * i / BM), 0, 255});
    for (int i = 0; i < MR; ++i) cols.push_back({255, 0, double(255 - 255 * i / MR)});
    return cols;
  }();
  return wheel;
}

}  // namespace

FlowDerivativeField flow_derivatives(const FlowField& field) {
  if (field.width() < 3 || field.height() < 3) throw DataError("flow_derivatives needs at least 3x3");
  return {diff_x(field.u), diff_y(field.u), diff_x(field.v), diff_y(field.v)};
}

ImageBuffer flow_to_color(const FlowField& field, std::optional<double> max_mag) {
  if (!all_finite(field)) throw DataError("flow_to_color: non-finite flow");
  if (max_mag && !(*max_mag > 0.0)) throw UsageError("max magnitude must be positive");
  const Plane mag = (field.u.square() + field.v.square()).sqrt();
  double scale = max_mag.value_or(mag.size() ? mag.maxCoeff() : 0.0);
  if (scale <= 0.0) scale = 1.0;

  const auto& wheel = color_wheel();
  const int ncols = static_cast<int>(wheel.size());
  const int w = field.width(), h = field.height();
  ImageBuffer out(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double fx = field.u(y, x) / scale, fy = field.v(y, x) / scale;
      const double rad = std::sqrt(fx * fx + fy * fy);
      const double a = std::atan2(-fy, -fx) / std::numbers::pi;
      // Map the full circle onto all ncols entries so the wheel wraps.
      const double fk = (a + 1.0) / 2.0 * ncols;
      int k0 = static_cast<int>(std::floor(fk));
      const double f = fk - k0;
      k0 %= ncols;
      const int k1 = (k0 + 1) % ncols;
      for (int b = 0; b < 3; ++b) {
        double col = (1 - f) * wheel[k0][b] / 255.0 + f * wheel[k1][b] / 255.0;
        col = rad <= 1.0 ? 1.0 - rad * (1.0 - col) : col * 0.75;
        out.channels[b](y, x) = col;
      }
    }
  }
  return out;
}

FlowField resize_flow(const FlowField& field, int width, int height) {
  const double sx = static_cast<double>(width) / field.width();
  const double sy = static_cast<double>(height) / field.height();
  return FlowField(resize_plane(field.u, width, height) * sx, resize_plane(field.v, width, height) * sy);
}

}  // namespace msrf
