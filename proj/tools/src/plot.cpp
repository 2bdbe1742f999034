#include "channel_axes_cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "channel_axes/error.hpp"
#include "channel_axes_cli/report.hpp"

namespace channel_axes::cli {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fixed(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string tick_label(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

std::string escape_xml(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

PlotFrame fit_frame(const std::vector<std::pair<double, double>>& pts) {
  PlotFrame f;
  if (pts.empty()) return f;
  double xl = INFINITY, xh = -INFINITY, yl = INFINITY, yh = -INFINITY;
  for (const auto& [x, y] : pts) {
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    xl = std::min(xl, x);
    xh = std::max(xh, x);
    yl = std::min(yl, y);
    yh = std::max(yh, y);
  }
  if (!std::isfinite(xl)) return f;
  auto pad = [](double& lo, double& hi) {
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    } else {
      const double p = 0.05 * (hi - lo);
      lo -= p;
      hi += p;
    }
  };
  pad(xl, xh);
  pad(yl, yh);
  f.x0 = xl;
  f.x1 = xh;
  f.y0 = yl;
  f.y1 = yh;
  return f;
}

std::vector<std::pair<double, double>> all_points(const Figure& fig) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& s : fig.series) pts.insert(pts.end(), s.points.begin(), s.points.end());
  for (const auto& b : fig.bands) {
    for (std::size_t i = 0; i < b.x.size(); ++i) {
      pts.emplace_back(b.x[i], b.lo[i]);
      pts.emplace_back(b.x[i], b.hi[i]);
    }
  }
  return pts;
}

[[noreturn]] void mismatch(PlotKind kind, const std::string& detail) {
  throw ValidationError("schema mismatch for plot kind '" + std::string(to_string(kind)) + "': " + detail);
}

double number(const Json& j) {
  if (j.is_number()) return j.get<double>();
  return std::numeric_limits<double>::quiet_NaN();
}

double parse_cell(const std::string& s) {
  if (s == "nan" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  return std::stod(s);
}

Json metrics_report(std::string_view text, PlotKind kind) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) mismatch(kind, "expected a metrics JSON report");
  if (j.value("schema", "") != "channel-axes/metrics/1") {
    mismatch(kind, "expected schema channel-axes/metrics/1, got '" + j.value("schema", "") + "'");
  }
  return j;
}

CsvTable csv_report(std::string_view text, PlotKind kind, const std::string& schema) {
  if (text.empty() || text.front() != '#') mismatch(kind, "expected a " + schema + " CSV report");
  CsvTable t = parse_csv(text, "plot input");
  if (t.schema != schema) mismatch(kind, "expected schema " + schema + ", got '" + t.schema + "'");
  return t;
}

}  // namespace

PlotKind parse_plot_kind(std::string_view text) {
  if (text == "scatter_axes") return PlotKind::kScatterAxes;
  if (text == "ari_null") return PlotKind::kAriNull;
  if (text == "depth_profiles") return PlotKind::kDepthProfiles;
  if (text == "prune_curves") return PlotKind::kPruneCurves;
  if (text == "trajectory") return PlotKind::kTrajectory;
  throw ValidationError("unknown plot kind '" + std::string(text) +
                        "' (expected scatter_axes, ari_null, depth_profiles, prune_curves, trajectory)");
}

std::string_view to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::kScatterAxes: return "scatter_axes";
    case PlotKind::kAriNull: return "ari_null";
    case PlotKind::kDepthProfiles: return "depth_profiles";
    case PlotKind::kPruneCurves: return "prune_curves";
    case PlotKind::kTrajectory: return "trajectory";
  }
  return "?";
}

double PlotFrame::px(double x) const {
  const double w = kPlotWidth - kMarginLeft - kMarginRight;
  return kMarginLeft + (x - x0) / (x1 - x0) * w;
}

double PlotFrame::py(double y) const {
  const double h = kPlotHeight - kMarginTop - kMarginBottom;
  return kMarginTop + (1.0 - (y - y0) / (y1 - y0)) * h;
}

std::string render_svg(const Figure& fig) {
  const PlotFrame& f = fig.frame;
  const double left = kMarginLeft, right = kPlotWidth - kMarginRight;
  const double top = kMarginTop, bottom = kPlotHeight - kMarginBottom;
  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + fixed(kPlotWidth) + "\" height=\"" +
       fixed(kPlotHeight) + "\" viewBox=\"0 0 " + fixed(kPlotWidth) + " " + fixed(kPlotHeight) + "\">\n";
  if (!fig.metadata.empty()) s += "<metadata>" + escape_xml(fig.metadata) + "</metadata>\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fixed(kPlotWidth) + "\" height=\"" + fixed(kPlotHeight) +
       "\" fill=\"white\"/>\n";
  s += "<text x=\"" + fixed((left + right) / 2) + "\" y=\"18.00\" text-anchor=\"middle\" font-size=\"14\">" +
       escape_xml(fig.title) + "</text>\n";
  s += "<path d=\"M" + fixed(left) + " " + fixed(top) + " L" + fixed(left) + " " + fixed(bottom) + " L" +
       fixed(right) + " " + fixed(bottom) + "\" stroke=\"black\" fill=\"none\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = f.x0 + (f.x1 - f.x0) * k / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * k / 4.0;
    const double x = f.px(xv), y = f.py(yv);
    s += "<path d=\"M" + fixed(x) + " " + fixed(bottom) + " L" + fixed(x) + " " + fixed(bottom + 5) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fixed(x) + "\" y=\"" + fixed(bottom + 18) + "\" text-anchor=\"middle\" font-size=\"10\">" +
         tick_label(xv) + "</text>\n";
    s += "<path d=\"M" + fixed(left - 5) + " " + fixed(y) + " L" + fixed(left) + " " + fixed(y) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fixed(left - 8) + "\" y=\"" + fixed(y + 3) + "\" text-anchor=\"end\" font-size=\"10\">" +
         tick_label(yv) + "</text>\n";
  }
  s += "<text x=\"" + fixed((left + right) / 2) + "\" y=\"" + fixed(kPlotHeight - 10) +
       "\" text-anchor=\"middle\" font-size=\"12\">" + escape_xml(fig.x_label) + "</text>\n";
  s += "<text x=\"16.00\" y=\"" + fixed((top + bottom) / 2) + "\" text-anchor=\"middle\" font-size=\"12\" "
       "transform=\"rotate(-90 16.00 " + fixed((top + bottom) / 2) + ")\">" + escape_xml(fig.y_label) + "</text>\n";

  bool empty = true;
  for (const auto& b : fig.bands) {
    if (b.x.empty()) continue;
    empty = false;
    std::string d = "M";
    for (std::size_t i = 0; i < b.x.size(); ++i) {
      d += (i ? " L" : "") + fixed(f.px(b.x[i])) + " " + fixed(f.py(b.hi[i]));
    }
    for (std::size_t i = b.x.size(); i-- > 0;) d += " L" + fixed(f.px(b.x[i])) + " " + fixed(f.py(b.lo[i]));
    d += " Z";
    s += "<path class=\"band\" d=\"" + d + "\" fill=\"#cccccc\" fill-opacity=\"0.6\" stroke=\"none\"/>\n";
  }
  for (std::size_t k = 0; k < fig.series.size(); ++k) {
    const auto& ser = fig.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : ser.points) {
      if (std::isfinite(p.first) && std::isfinite(p.second)) pts.push_back(p);
    }
    if (pts.empty()) continue;
    empty = false;
    if (ser.line) {
      std::string pl;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i) pl.push_back(' ');
        pl += fixed(f.px(pts[i].first)) + "," + fixed(f.py(pts[i].second));
      }
      s += "<polyline points=\"" + pl + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
    } else {
      for (const auto& [x, y] : pts) {
        s += "<circle cx=\"" + fixed(f.px(x)) + "\" cy=\"" + fixed(f.py(y)) + "\" r=\"2.00\" fill=\"" + color +
             "\" fill-opacity=\"0.7\"/>\n";
      }
    }
    const double ly = top + 12.0 + 14.0 * static_cast<double>(k);
    s += "<path d=\"M" + fixed(right + 10) + " " + fixed(ly - 4) + " L" + fixed(right + 25) + " " + fixed(ly - 4) +
         "\" stroke=\"" + color + "\" stroke-width=\"3\"/>\n";
    s += "<text x=\"" + fixed(right + 30) + "\" y=\"" + fixed(ly) + "\" font-size=\"10\">" + escape_xml(ser.label) +
         "</text>\n";
  }
  if (empty) {
    s += "<text x=\"" + fixed((left + right) / 2) + "\" y=\"" + fixed((top + bottom) / 2) +
         "\" text-anchor=\"middle\" font-size=\"14\" fill=\"#888888\">no data</text>\n";
  }
  s += "</svg>\n";
  return s;
}

Figure figure_from_report(std::string_view text, PlotKind kind) {
  Figure fig;
  switch (kind) {
    case PlotKind::kScatterAxes: {
      const Json j = metrics_report(text, kind);
      fig.title = "Local vs target axis";
      fig.x_label = "I_X (nats)";
      fig.y_label = "I(T;Y) (nats)";
      for (const auto& layer : j.at("layers")) {
        Series ser;
        ser.label = layer.at("name").get<std::string>();
        ser.line = false;
        const auto& ch = layer.at("channels");
        const auto& ix = ch.at("i_x");
        const auto& ity = ch.at("i_ty").at(layer.at("primary_target").get<std::string>());
        for (std::size_t i = 0; i < ix.size(); ++i) ser.points.emplace_back(number(ix[i]), number(ity[i]));
        fig.series.push_back(std::move(ser));
      }
      fig.frame = fit_frame(all_points(fig));
      fig.metadata = j.at("manifest").dump();
      break;
    }
    case PlotKind::kAriNull: {
      const Json j = metrics_report(text, kind);
      fig.title = "Local/target clustering agreement";
      fig.x_label = "relative depth";
      fig.y_label = "ARI";
      Series obs{"observed ARI", {}, false};
      Band band{"null mean to 95th percentile", {}, {}, {}};
      for (const auto& layer : j.at("layers")) {
        const auto& a = layer.at("alignment");
        if (a.is_null() || a.at("ari").is_null()) continue;
        const double x = layer.at("relative_depth").get<double>();
        obs.points.emplace_back(x, number(a.at("ari")));
        band.x.push_back(x);
        band.lo.push_back(number(a.at("null_mean")));
        band.hi.push_back(number(a.at("null_p95")));
      }
      fig.series.push_back(std::move(obs));
      fig.bands.push_back(std::move(band));
      fig.frame = fit_frame(all_points(fig));
      fig.metadata = j.at("manifest").dump();
      break;
    }
    case PlotKind::kDepthProfiles: {
      const Json j = metrics_report(text, kind);
      fig.title = "Depth profiles";
      fig.x_label = "relative depth";
      fig.y_label = "mean MI (nats)";
      Series ix{"mean I_X", {}, true}, ity{"mean I(T;Y)", {}, true};
      for (const auto& layer : j.at("layers")) {
        const double x = layer.at("relative_depth").get<double>();
        ix.points.emplace_back(x, number(layer.at("summary").at("mean_i_x")));
        ity.points.emplace_back(x, number(layer.at("summary").at("mean_i_ty")));
      }
      fig.series.push_back(std::move(ix));
      fig.series.push_back(std::move(ity));
      fig.frame = fit_frame(all_points(fig));
      fig.metadata = j.at("manifest").dump();
      break;
    }
    case PlotKind::kPruneCurves: {
      const CsvTable t = csv_report(text, kind, "channel-axes/prune_curves/1");
      fig.title = "Retention vs FLOPs pruned";
      fig.x_label = "FLOPs fraction pruned";
      fig.y_label = "retention";
      const auto cm = t.column("method"), cs = t.column("seed"), cx = t.column("flops_fraction"),
                 cy = t.column("retention");
      std::map<std::string, std::size_t> index;
      double ymax = 1.0;
      for (const auto& row : t.rows) {
        const std::string label = row[cm] + "/" + row[cs];
        auto [it, fresh] = index.emplace(label, fig.series.size());
        if (fresh) fig.series.push_back(Series{label, {}, true});
        const double y = parse_cell(row[cy]);
        if (std::isfinite(y)) ymax = std::max(ymax, y);
        fig.series[it->second].points.emplace_back(parse_cell(row[cx]), y);
      }
      fig.frame = PlotFrame{0.0, 1.0, 0.0, ymax};
      fig.metadata = t.manifest.is_null() ? "" : t.manifest.dump();
      break;
    }
    case PlotKind::kTrajectory: {
      const CsvTable t = csv_report(text, kind, "channel-axes/trajectory/1");
      fig.title = "Training trajectory";
      fig.x_label = "step";
      fig.y_label = "coupling / cosine";
      const auto cstep = t.column("step");
      for (const char* name : {"coupling", "cos_ix_it", "cos_update_ix", "cos_update_it"}) {
        Series ser{name, {}, true};
        const auto c = t.column(name);
        for (const auto& row : t.rows) ser.points.emplace_back(parse_cell(row[cstep]), parse_cell(row[c]));
        fig.series.push_back(std::move(ser));
      }
      double xmax = 1.0;
      for (const auto& row : t.rows) xmax = std::max(xmax, parse_cell(row[cstep]));
      fig.frame = PlotFrame{0.0, xmax, -1.0, 1.0};
      fig.metadata = t.manifest.is_null() ? "" : t.manifest.dump();
      break;
    }
  }
  return fig;
}

}  // namespace channel_axes::cli
