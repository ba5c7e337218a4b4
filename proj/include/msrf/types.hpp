#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

namespace msrf {

// Dense 2-D scalar plane, indexed (row = y, col = x).
template <typename Scalar>
using PlaneT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Plane = PlaneT<double>;
using MaskPlane = PlaneT<bool>;

// Multi-channel image with values in [0,1]. One plane per channel.
template <typename Scalar>
struct ImageT {
  std::vector<PlaneT<Scalar>> channels;

  ImageT() = default;
  ImageT(int width, int height, int n_channels, Scalar fill = Scalar(0))
      : channels(n_channels, PlaneT<Scalar>::Constant(height, width, fill)) {}

  int width() const { return channels.empty() ? 0 : static_cast<int>(channels[0].cols()); }
  int height() const { return channels.empty() ? 0 : static_cast<int>(channels[0].rows()); }
  int channel_count() const { return static_cast<int>(channels.size()); }
};
using ImageBuffer = ImageT<double>;

// Boolean per-pixel mask (edge pixels, coverage, evaluation sets).
struct EdgeMask {
  MaskPlane mask;

  EdgeMask() = default;
  EdgeMask(int width, int height, bool fill = false)
      : mask(MaskPlane::Constant(height, width, fill)) {}

  int width() const { return static_cast<int>(mask.cols()); }
  int height() const { return static_cast<int>(mask.rows()); }
  std::size_t count() const { return static_cast<std::size_t>(mask.count()); }
  bool operator()(int x, int y) const { return mask(y, x); }
};

// Per-pixel motion (u, v) in pixels/frame.
template <typename Scalar>
struct FlowFieldT {
  PlaneT<Scalar> u;
  PlaneT<Scalar> v;

  FlowFieldT() = default;
  FlowFieldT(int width, int height)
      : u(PlaneT<Scalar>::Zero(height, width)), v(PlaneT<Scalar>::Zero(height, width)) {}
  FlowFieldT(PlaneT<Scalar> u_, PlaneT<Scalar> v_) : u(std::move(u_)), v(std::move(v_)) {}

  int width() const { return static_cast<int>(u.cols()); }
  int height() const { return static_cast<int>(u.rows()); }
};
using FlowField = FlowFieldT<double>;

// Spatial derivatives of a flow field, in 1/frame.
template <typename Scalar>
struct FlowDerivativeFieldT {
  PlaneT<Scalar> du_dx, du_dy, dv_dx, dv_dy;

  int width() const { return static_cast<int>(du_dx.cols()); }
  int height() const { return static_cast<int>(du_dx.rows()); }
};
using FlowDerivativeField = FlowDerivativeFieldT<double>;

// Generic stack of D equally sized label planes: D=2 holds (u, v), D=4 holds
// (du_dx, du_dy, dv_dx, dv_dy). This is the label space the forest learns.
struct LabelField {
  std::vector<Plane> planes;

  LabelField() = default;
  LabelField(int width, int height, int dims) : planes(dims, Plane::Zero(height, width)) {}

  int width() const { return planes.empty() ? 0 : static_cast<int>(planes[0].cols()); }
  int height() const { return planes.empty() ? 0 : static_cast<int>(planes[0].rows()); }
  int dims() const { return static_cast<int>(planes.size()); }
};

LabelField to_label_field(const FlowField& flow);
LabelField to_label_field(const FlowDerivativeField& deriv);
// Requires dims() == 2.
FlowField to_flow_field(const LabelField& labels);
// Requires dims() == 4.
FlowDerivativeField to_derivative_field(const LabelField& labels);

}  // namespace msrf
