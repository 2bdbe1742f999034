#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace channel_axes::cli {

enum class PlotKind { kScatterAxes, kAriNull, kDepthProfiles, kPruneCurves, kTrajectory };

PlotKind parse_plot_kind(std::string_view text);
std::string_view to_string(PlotKind kind);

// Canvas geometry shared by every plot.
inline constexpr double kPlotWidth = 640.0;
inline constexpr double kPlotHeight = 420.0;
inline constexpr double kMarginLeft = 70.0;
inline constexpr double kMarginRight = 150.0;
inline constexpr double kMarginTop = 30.0;
inline constexpr double kMarginBottom = 50.0;

struct PlotFrame {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;

  double px(double x) const;
  double py(double y) const;
};

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
  bool line = true;  // polyline, else markers only
};

struct Band {
  std::string label;
  std::vector<double> x, lo, hi;
};

struct Figure {
  std::string title;
  std::string x_label;
  std::string y_label;
  PlotFrame frame;
  std::vector<Series> series;
  std::vector<Band> bands;
  std::string metadata;  // embedded verbatim (escaped) in <metadata>
};

std::string render_svg(const Figure& figure);

// Builds the figure for `kind` from report text (JSON or CSV); throws
// ValidationError("schema mismatch ...") when the report does not fit.
Figure figure_from_report(std::string_view report_text, PlotKind kind);

}  // namespace channel_axes::cli
