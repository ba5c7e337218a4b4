#pragma once

#include <optional>
#include <string>

#include "msrf/types.hpp"

namespace msrf {

inline constexpr float kFloMagic = 202021.25f;

// Middlebury .flo: float32 magic, int32 width, int32 height, then row-major
// interleaved float32 (u, v), all little-endian.
FlowField read_flo(const std::string& path);
void write_flo(const FlowField& field, const std::string& path);

// Central differences inside, one-sided differences on the border.
// Requires width, height >= 3.
FlowDerivativeField flow_derivatives(const FlowField& field);

// Middlebury color-wheel visualization. Saturation encodes |f| / max_mag;
// when max_mag is absent the field's largest magnitude is used. Zero flow is
// white. Vectors beyond max_mag are darkened.
ImageBuffer flow_to_color(const FlowField& field, std::optional<double> max_mag = std::nullopt);

// Resizes the field and scales the vectors by the same factors.
FlowField resize_flow(const FlowField& field, int width, int height);

bool all_finite(const FlowField& field);

}  // namespace msrf
