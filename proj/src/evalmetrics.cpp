#include "msrf/evalmetrics.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "msrf/error.hpp"

namespace msrf {
namespace {

void check_inputs(const FlowField& pred, const FlowField& ref, const EdgeMask& mask) {
  if (pred.width() != ref.width() || pred.height() != ref.height() || mask.width() != ref.width() ||
      mask.height() != ref.height()) {
    throw DataError("flow/mask dimensions differ");
  }
  if (mask.count() == 0) throw DataError("evaluation mask is empty");
}

struct CosineSums {
  double signed_sum = 0.0;
  double abs_sum = 0.0;
  std::size_t count = 0;
};

CosineSums cosine_sums(const FlowField& pred, const FlowField& ref, const EdgeMask& mask) {
  CosineSums s;
  for (int y = 0; y < ref.height(); ++y) {
    for (int x = 0; x < ref.width(); ++x) {
      if (!mask(x, y)) continue;
      const double n1 = std::hypot(pred.u(y, x), pred.v(y, x));
      const double n2 = std::hypot(ref.u(y, x), ref.v(y, x));
      if (n1 < kCosineNormFloor || n2 < kCosineNormFloor) continue;
      const double c = (pred.u(y, x) * ref.u(y, x) + pred.v(y, x) * ref.v(y, x)) / (n1 * n2);
      s.signed_sum += c;
      s.abs_sum += std::abs(c);
      ++s.count;
    }
  }
  return s;
}

}  // namespace

Plane epe_map(const FlowField& pred, const FlowField& ref) {
  if (pred.width() != ref.width() || pred.height() != ref.height()) throw DataError("flow dimensions differ");
  return ((pred.u - ref.u).square() + (pred.v - ref.v).square()).sqrt();
}

double epe_at_mask(const FlowField& pred, const FlowField& ref, const EdgeMask& mask) {
  check_inputs(pred, ref, mask);
  return mask.mask.select(epe_map(pred, ref), 0.0).sum() / static_cast<double>(mask.count());
}

double direction_score(const FlowField& pred, const FlowField& ref, const EdgeMask& mask) {
  check_inputs(pred, ref, mask);
  const CosineSums s = cosine_sums(pred, ref, mask);
  if (s.count == 0) throw DataError("no pixels with non-zero predicted and reference flow");
  return 100.0 * s.signed_sum / static_cast<double>(s.count);
}

double orientation_score(const FlowField& pred, const FlowField& ref, const EdgeMask& mask) {
  check_inputs(pred, ref, mask);
  const CosineSums s = cosine_sums(pred, ref, mask);
  if (s.count == 0) throw DataError("no pixels with non-zero predicted and reference flow");
  return 100.0 * s.abs_sum / static_cast<double>(s.count);
}

double zero_baseline_epe(const FlowField& ref, const EdgeMask& mask) {
  return epe_at_mask(FlowField(ref.width(), ref.height()), ref, mask);
}

ScoreReport score_flow(const FlowField& pred, const FlowField& ref, const EdgeMask& mask) {
  ScoreReport r;
  r.epe = epe_at_mask(pred, ref, mask);
  r.zero_epe = zero_baseline_epe(ref, mask);
  r.n_points = mask.count();
  const CosineSums s = cosine_sums(pred, ref, mask);
  r.n_cosine_points = s.count;
  if (s.count > 0) {
    r.direction_pct = 100.0 * s.signed_sum / static_cast<double>(s.count);
    r.orientation_pct = 100.0 * s.abs_sum / static_cast<double>(s.count);
  }
  return r;
}

ScoreReport aggregate(std::span<const ScoreReport> reports, bool weighted) {
  if (reports.empty()) throw DataError("aggregate: no reports");
  ScoreReport out;
  double w_epe = 0.0, w_cos = 0.0;
  for (const ScoreReport& r : reports) {
    const double we = weighted ? static_cast<double>(r.n_points) : 1.0;
    const double wc = weighted ? static_cast<double>(r.n_cosine_points) : 1.0;
    out.epe += we * r.epe;
    out.zero_epe += we * r.zero_epe;
    out.direction_pct += wc * r.direction_pct;
    out.orientation_pct += wc * r.orientation_pct;
    out.n_points += r.n_points;
    out.n_cosine_points += r.n_cosine_points;
    w_epe += we;
    w_cos += wc;
  }
  if (w_epe > 0.0) {
    out.epe /= w_epe;
    out.zero_epe /= w_epe;
  }
  if (w_cos > 0.0) {
    out.direction_pct /= w_cos;
    out.orientation_pct /= w_cos;
  }
  return out;
}

std::string format_score_header() {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %12s %12s %16s %18s %10s", "", "Edge EPE", "0-Edge EPE",
                "Edge direction", "Edge orientation", "points");
  return buf;
}

std::string format_score_row(const std::string& label, const ScoreReport& r) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-16s %9.2f px %9.2f px %14.2f %% %16.2f %% %10zu", label.c_str(), r.epe,
                r.zero_epe, r.direction_pct, r.orientation_pct, r.n_points);
  return buf;
}

std::string score_to_json(const ScoreReport& r) {
  nlohmann::ordered_json j;
  j["epe"] = r.epe;
  j["zero_epe"] = r.zero_epe;
  j["direction_pct"] = r.direction_pct;
  j["orientation_pct"] = r.orientation_pct;
  j["n_points"] = r.n_points;
  j["n_cosine_points"] = r.n_cosine_points;
  return j.dump();
}

}  // namespace msrf
