#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "cli.hpp"
#include "microresnet/errors.hpp"

namespace microresnet::cli {
namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 190, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fmt(const char* pattern, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Smallest 1, 2 or 5 times a power of ten that is >= raw.
double nice_step(double raw) {
  const double base = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * base >= raw) return m * base;
  return 10.0 * base;
}

}  // namespace

std::string render_plot_svg(const std::vector<PlotSeries>& series, PlotKind kind) {
  if (series.empty()) throw ValueError("nothing to plot");
  std::size_t max_epoch = 1;
  double max_value = 0.0;
  for (const auto& s : series)
    for (const auto& r : s.rows) {
      max_epoch = std::max(max_epoch, r.epoch);
      max_value = std::max(max_value, kind == PlotKind::loss ? r.train_loss : std::max(r.train_acc, r.val_acc));
    }

  const double x_lo = 1.0, x_hi = std::max<double>(2.0, static_cast<double>(max_epoch));
  double y_hi = 1.0, y_step = 0.2;
  if (kind == PlotKind::loss) {
    y_step = nice_step(std::max(max_value, 1e-6) / 5.0);
    y_hi = y_step * std::ceil(max_value / y_step);
    if (y_hi <= 0.0) y_hi = y_step;
  }
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  const auto py = [&](double y) { return kTop + ph - y / y_hi * ph; };
  const std::string y_label = kind == PlotKind::loss ? "loss" : "accuracy";

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"440\" viewBox=\"0 0 720 440\" "
                    "font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"720\" height=\"440\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt("%.1f", kLeft + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
         y_label + " per epoch</text>\n";

  // Axes, ticks and grid.
  svg += "<g stroke=\"black\" stroke-width=\"1\">\n";
  svg += "<line x1=\"" + fmt("%.1f", kLeft) + "\" y1=\"" + fmt("%.1f", kTop + ph) + "\" x2=\"" +
         fmt("%.1f", kLeft + pw) + "\" y2=\"" + fmt("%.1f", kTop + ph) + "\"/>\n";
  svg += "<line x1=\"" + fmt("%.1f", kLeft) + "\" y1=\"" + fmt("%.1f", kTop) + "\" x2=\"" + fmt("%.1f", kLeft) +
         "\" y2=\"" + fmt("%.1f", kTop + ph) + "\"/>\n";
  svg += "</g>\n<g class=\"ticks\">\n";
  const std::size_t x_step = std::max<std::size_t>(1, (max_epoch + 9) / 10);
  for (std::size_t e = 1; e <= static_cast<std::size_t>(x_hi); e += x_step) {
    const std::string x = fmt("%.1f", px(static_cast<double>(e)));
    svg += "<line x1=\"" + x + "\" y1=\"" + fmt("%.1f", kTop + ph) + "\" x2=\"" + x + "\" y2=\"" +
           fmt("%.1f", kTop + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + x + "\" y=\"" + fmt("%.1f", kTop + ph + 18) + "\" text-anchor=\"middle\">" +
           std::to_string(e) + "</text>\n";
  }
  const int y_ticks = static_cast<int>(std::lround(y_hi / y_step));
  for (int i = 0; i <= y_ticks; ++i) {
    const double v = i * y_step;
    const std::string y = fmt("%.1f", py(v));
    svg += "<line x1=\"" + fmt("%.1f", kLeft - 5) + "\" y1=\"" + y + "\" x2=\"" + fmt("%.1f", kLeft + pw) +
           "\" y2=\"" + y + "\" stroke=\"#dddddd\"/>\n";
    svg += "<text x=\"" + fmt("%.1f", kLeft - 8) + "\" y=\"" + fmt("%.1f", py(v) + 4) + "\" text-anchor=\"end\">" +
           fmt(y_step < 0.1 ? "%.2f" : (y_step < 1 ? "%.1f" : "%.0f"), v) + "</text>\n";
  }
  svg += "</g>\n";
  svg += "<text x=\"" + fmt("%.1f", kLeft + pw / 2) + "\" y=\"" + fmt("%.1f", kHeight - 18) +
         "\" text-anchor=\"middle\">epoch</text>\n";
  svg += "<text transform=\"translate(18 " + fmt("%.1f", kTop + ph / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + y_label + "</text>\n";

  // Curves and legend.
  std::string legend = "<g class=\"legend\">\n";
  double legend_y = kTop + 10;
  const auto add_curve = [&](const PlotSeries& s, const char* colour, bool dashed, const std::string& name,
                             auto value) {
    std::string points;
    for (const auto& r : s.rows) {
      if (!points.empty()) points += ' ';
      points += fmt("%.2f", px(static_cast<double>(r.epoch))) + "," + fmt("%.2f", py(value(r)));
    }
    const std::string dash = dashed ? " stroke-dasharray=\"6 4\"" : "";
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"2\"" + dash +
           " points=\"" + points + "\"/>\n";
    const double lx = kLeft + pw + 15;
    legend += "<line x1=\"" + fmt("%.1f", lx) + "\" y1=\"" + fmt("%.1f", legend_y) + "\" x2=\"" +
              fmt("%.1f", lx + 24) + "\" y2=\"" + fmt("%.1f", legend_y) + "\" stroke=\"" + colour +
              "\" stroke-width=\"2\"" + dash + "/>\n";
    legend += "<text x=\"" + fmt("%.1f", lx + 30) + "\" y=\"" + fmt("%.1f", legend_y + 4) + "\">" +
              escape(name) + "</text>\n";
    legend_y += 18;
  };
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* colour = kPalette[i % std::size(kPalette)];
    if (kind == PlotKind::accuracy) {
      add_curve(series[i], colour, false, series[i].label + " train", [](const MetricsRow& r) { return r.train_acc; });
      add_curve(series[i], colour, true, series[i].label + " val", [](const MetricsRow& r) { return r.val_acc; });
    } else {
      add_curve(series[i], colour, false, series[i].label, [](const MetricsRow& r) { return r.train_loss; });
    }
  }
  svg += legend + "</g>\n</svg>\n";
  return svg;
}

}  // namespace microresnet::cli
