#pragma once

// Minimal SVG line plot for trade-off curves: one polyline per k.

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "ppd/analytic.hpp"

namespace ppd::tools {

enum class CurveAxis { compute_per_time_unit, compute_per_token };

inline std::string curve_to_svg(std::span<const analytic::CurveRow> rows, CurveAxis axis) {
  constexpr double kW = 640.0;
  constexpr double kH = 440.0;
  constexpr double kLeft = 70.0;
  constexpr double kRight = 110.0;
  constexpr double kTop = 30.0;
  constexpr double kBottom = 60.0;
  static constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                             "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  const auto x_of = [axis](const analytic::CurveRow& r) {
    return axis == CurveAxis::compute_per_time_unit ? r.compute_per_time_unit : r.compute_per_token;
  };
  double x_lo = 0.0;
  double x_hi = 1.0;
  if (!rows.empty()) {
    x_lo = x_hi = x_of(rows.front());
    for (const auto& r : rows) {
      x_lo = std::min(x_lo, x_of(r));
      x_hi = std::max(x_hi, x_of(r));
    }
  }
  x_lo = std::min(x_lo, 0.5);
  x_hi = std::max(x_hi, x_lo + 1.0);
  const double y_lo = 0.5;
  const double y_hi = 1.0;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;
  const auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  const auto py = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * ph; };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect x=\"0\" y=\"0\" width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n",
      kW, kH, kW, kH);
  // Axes and ticks.
  out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"black\"/>\n",
                     kLeft, kTop + ph, kLeft + pw);
  out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n",
                     kLeft, kTop, kTop + ph);
  for (int i = 0; i <= 5; ++i) {
    const double y = y_lo + (y_hi - y_lo) * i / 5.0;
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n", kLeft - 6,
                       py(y) + 4, y);
    const double x = x_lo + (x_hi - x_lo) * i / 5.0;
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.2f}</text>\n", px(x),
                       kTop + ph + 18, x);
  }
  out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", kLeft + pw / 2,
                     kH - 15,
                     axis == CurveAxis::compute_per_time_unit ? "average compute per time unit"
                                                              : "average compute per token");
  out += fmt::format(
      "<text x=\"15\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {:.1f})\">"
      "normalized latency per token</text>\n",
      kTop + ph / 2, kTop + ph / 2);

  std::map<std::int64_t, std::vector<const analytic::CurveRow*>> series;
  for (const auto& r : rows) series[r.k].push_back(&r);
  std::size_t idx = 0;
  for (const auto& [k, pts] : series) {
    const char* color = kPalette[idx % std::size(kPalette)];
    std::string points;
    for (const auto* r : pts) points += fmt::format("{:.2f},{:.2f} ", px(x_of(*r)), py(r->latency_per_token_norm));
    if (!points.empty()) points.pop_back();
    out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", color,
                       points);
    for (const auto* r : pts) {
      out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", px(x_of(*r)),
                         py(r->latency_per_token_norm), color);
    }
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" fill=\"{}\">k = {}</text>\n", kLeft + pw + 12,
                       kTop + 16.0 * static_cast<double>(idx + 1), color, k);
    ++idx;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace ppd::tools
