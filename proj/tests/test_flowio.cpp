#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include <gtest/gtest.h>

#include "msrf/error.hpp"
#include "msrf/flowio.hpp"
#include "test_support.hpp"

using namespace msrf;

namespace {

void put_f32(std::vector<unsigned char>& b, float v) {
  const auto u = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(u >> (8 * i)));
}
void put_i32(std::vector<unsigned char>& b, std::int32_t v) {
  const auto u = static_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(u >> (8 * i)));
}

FlowField float_flow(int w, int h, std::uint64_t seed) {
  FlowField f = test::random_flow(w, h, 10.0, seed);
  f.u = f.u.cast<float>().cast<double>();
  f.v = f.v.cast<float>().cast<double>();
  return f;
}

}  // namespace

TEST(ReadFlo, MapsInterleavedValues) {
  const auto dir = test::scratch_dir("flo_read");
  std::vector<unsigned char> b;
  put_f32(b, 202021.25f);
  put_i32(b, 2);
  put_i32(b, 1);
  for (float v : {1.f, 0.f, 0.f, 1.f}) put_f32(b, v);
  test::write_bytes(dir / "a.flo", b);
  const FlowField f = read_flo((dir / "a.flo").string());
  ASSERT_EQ(f.width(), 2);
  ASSERT_EQ(f.height(), 1);
  EXPECT_EQ(f.u(0, 0), 1.0);
  EXPECT_EQ(f.u(0, 1), 0.0);
  EXPECT_EQ(f.v(0, 0), 0.0);
  EXPECT_EQ(f.v(0, 1), 1.0);
}

TEST(ReadFlo, RejectsBadMagicTruncationAndNonFinite) {
  const auto dir = test::scratch_dir("flo_bad");
  std::vector<unsigned char> b;
  put_f32(b, 1.0f);
  put_i32(b, 1);
  put_i32(b, 1);
  put_f32(b, 0.f);
  put_f32(b, 0.f);
  test::write_bytes(dir / "magic.flo", b);
  try {
    read_flo((dir / "magic.flo").string());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }

  std::vector<unsigned char> t;
  put_f32(t, 202021.25f);
  put_i32(t, 2);
  put_i32(t, 2);
  put_f32(t, 0.f);
  test::write_bytes(dir / "trunc.flo", t);
  EXPECT_THROW(read_flo((dir / "trunc.flo").string()), DataError);

  std::vector<unsigned char> n;
  put_f32(n, 202021.25f);
  put_i32(n, 1);
  put_i32(n, 1);
  put_f32(n, NAN);
  put_f32(n, 0.f);
  test::write_bytes(dir / "nan.flo", n);
  EXPECT_THROW(read_flo((dir / "nan.flo").string()), DataError);
}

TEST(WriteFlo, ZeroFieldLayout) {
  const auto dir = test::scratch_dir("flo_write");
  write_flo(FlowField(1, 1), (dir / "z.flo").string());
  const auto bytes = test::read_bytes(dir / "z.flo");
  ASSERT_EQ(bytes.size(), 20u);
  std::vector<unsigned char> expected;
  put_f32(expected, 202021.25f);
  put_i32(expected, 1);
  put_i32(expected, 1);
  expected.resize(20, 0);
  EXPECT_EQ(bytes, expected);
}

TEST(WriteFlo, HeaderCarriesDims) {
  const auto dir = test::scratch_dir("flo_dims");
  write_flo(FlowField(300, 7), (dir / "d.flo").string());
  const auto bytes = test::read_bytes(dir / "d.flo");
  std::vector<unsigned char> expected;
  put_i32(expected, 300);
  put_i32(expected, 7);
  EXPECT_TRUE(std::equal(expected.begin(), expected.end(), bytes.begin() + 4));
  EXPECT_EQ(bytes.size(), 12u + 300u * 7u * 8u);
}

TEST(WriteFlo, RoundTripIsBitIdentical) {
  const auto dir = test::scratch_dir("flo_rt");
  const FlowField f = float_flow(8, 8, 21);
  write_flo(f, (dir / "r.flo").string());
  const FlowField g = read_flo((dir / "r.flo").string());
  EXPECT_EQ(std::memcmp(f.u.data(), g.u.data(), sizeof(double) * 64), 0);
  EXPECT_EQ(std::memcmp(f.v.data(), g.v.data(), sizeof(double) * 64), 0);
}

TEST(WriteFlo, RejectsNonFinite) {
  const auto dir = test::scratch_dir("flo_nf");
  FlowField f(2, 2);
  f.u(1, 1) = INFINITY;
  EXPECT_THROW(write_flo(f, (dir / "x.flo").string()), DataError);
}

TEST(FlowDerivatives, ConstantFieldIsZero) {
  FlowField f(6, 5);
  f.u.setConstant(2.0);
  f.v.setConstant(-1.0);
  const auto d = flow_derivatives(f);
  for (const Plane* p : {&d.du_dx, &d.du_dy, &d.dv_dx, &d.dv_dy}) EXPECT_EQ(p->abs().maxCoeff(), 0.0);
}

TEST(FlowDerivatives, LinearRamp) {
  FlowField f(7, 4);
  for (int x = 0; x < 7; ++x) f.u.col(x).setConstant(x);
  const auto d = flow_derivatives(f);
  EXPECT_TRUE((d.du_dx == 1.0).all());
  for (const Plane* p : {&d.du_dy, &d.dv_dx, &d.dv_dy}) EXPECT_EQ(p->abs().maxCoeff(), 0.0);
}

TEST(FlowDerivatives, MatchesFiniteDifferenceOracle) {
  const FlowField f = test::random_flow(5, 5, 3.0, 4);
  const auto d = flow_derivatives(f);
  auto dx = [](const Plane& p, int y, int x) {
    if (x == 0) return p(y, 1) - p(y, 0);
    if (x == p.cols() - 1) return p(y, x) - p(y, x - 1);
    return (p(y, x + 1) - p(y, x - 1)) / 2;
  };
  auto dy = [](const Plane& p, int y, int x) {
    if (y == 0) return p(1, x) - p(0, x);
    if (y == p.rows() - 1) return p(y, x) - p(y - 1, x);
    return (p(y + 1, x) - p(y - 1, x)) / 2;
  };
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      EXPECT_NEAR(d.du_dx(y, x), dx(f.u, y, x), 1e-9);
      EXPECT_NEAR(d.du_dy(y, x), dy(f.u, y, x), 1e-9);
      EXPECT_NEAR(d.dv_dx(y, x), dx(f.v, y, x), 1e-9);
      EXPECT_NEAR(d.dv_dy(y, x), dy(f.v, y, x), 1e-9);
    }
  }
}

TEST(FlowDerivatives, Linear) {
  const FlowField f = test::random_flow(6, 6, 2.0, 1), g = test::random_flow(6, 6, 2.0, 2);
  const double a = 1.7, b = -0.3;
  const auto df = flow_derivatives(f), dg = flow_derivatives(g);
  const auto dh = flow_derivatives(FlowField(a * f.u + b * g.u, a * f.v + b * g.v));
  EXPECT_LE((dh.du_dx - (a * df.du_dx + b * dg.du_dx)).abs().maxCoeff(), 1e-9);
  EXPECT_LE((dh.dv_dy - (a * df.dv_dy + b * dg.dv_dy)).abs().maxCoeff(), 1e-9);
}

TEST(FlowDerivatives, TooSmallThrows) { EXPECT_THROW(flow_derivatives(FlowField(2, 5)), DataError); }

TEST(FlowToColor, ZeroFieldIsWhite) {
  const ImageBuffer img = flow_to_color(FlowField(4, 3));
  ASSERT_EQ(img.width(), 4);
  ASSERT_EQ(img.height(), 3);
  for (const Plane& c : img.channels) EXPECT_TRUE((c == 1.0).all());
}

TEST(FlowToColor, OppositeDirectionsDifferEqualMagnitudeEqualSaturation) {
  FlowField f(2, 1);
  f.u(0, 0) = 3.0;
  f.u(0, 1) = -3.0;
  const ImageBuffer img = flow_to_color(f);
  auto rgb = [&](int x) { return Eigen::Vector3d(img.channels[0](0, x), img.channels[1](0, x), img.channels[2](0, x)); };
  EXPECT_GT((rgb(0) - rgb(1)).norm(), 0.1);
  auto sat = [&](int x) { return rgb(x).maxCoeff() - rgb(x).minCoeff(); };
  EXPECT_NEAR(sat(0), sat(1), 0.05);
}

TEST(FlowToColor, FullRotationReturnsToStart) {
  const int n = 721;
  FlowField f(n, 1);
  for (int i = 0; i < n; ++i) {
    const double a = 2 * M_PI * i / (n - 1);
    f.u(0, i) = std::cos(a);
    f.v(0, i) = std::sin(a);
  }
  const ImageBuffer img = flow_to_color(f, 1.0);
  std::set<int> distinct;
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(img.channels[c](0, 0), img.channels[c](0, n - 1), 1.0 / 255.0);
    // No jump anywhere around the wheel.
    for (int i = 1; i < n; ++i) EXPECT_LT(std::abs(img.channels[c](0, i) - img.channels[c](0, i - 1)), 0.1);
  }
}

TEST(FlowToColor, RejectsNonPositiveMax) {
  EXPECT_THROW(flow_to_color(FlowField(2, 2), 0.0), UsageError);
}
