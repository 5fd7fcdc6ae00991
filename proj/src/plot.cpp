#include "hyperinf/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "hyperinf/errors.hpp"
#include "hyperinf/io.hpp"

namespace hyperinf::plot {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Largest prefix of the series that is finite (and positive on a log axis).
std::size_t usable_prefix(const Series& s, bool log_y) {
  const std::size_t n = std::min(s.x.size(), s.y.size());
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0.0)) return i;
  return n;
}

std::vector<double> linear_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) ticks.push_back(t);
  return ticks;
}

}  // namespace

std::string render_svg(const std::vector<Series>& series, const PlotOptions& opt) {
  if (series.empty()) throw InvalidArgument("plot: no series");
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    const std::size_t n = usable_prefix(s, opt.log_y);
    for (std::size_t i = 0; i < n; ++i) {
      const double y = opt.log_y ? std::log10(s.y[i]) : s.y[i];
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) throw InvalidArgument("plot: no finite points to draw");
  if (x1 == x0) x1 = x0 + 1.0;
  if (opt.log_y) {
    y0 = std::floor(y0);
    y1 = std::max(std::ceil(y1), y0 + 1.0);
  } else if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }

  const double left = 80, right = 190, top = 40, bottom = 60;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opt.width) + "\" height=\"" +
         std::to_string(opt.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty())
    svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape(opt.title) +
           "</text>\n";
  svg += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";

  for (double t : linear_ticks(x0, x1)) {
    svg += "<line x1=\"" + num(px(t)) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(px(t)) + "\" y2=\"" +
           num(top + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(px(t)) + "\" y=\"" + num(top + ph + 18) + "\" text-anchor=\"middle\">" + tick_label(t) +
           "</text>\n";
  }
  std::vector<double> yt;
  if (opt.log_y) {
    const double stride = std::max(1.0, std::ceil((y1 - y0) / 8.0));
    for (double e = y0; e <= y1 + 1e-9; e += stride) yt.push_back(e);
  } else {
    yt = linear_ticks(y0, y1);
  }
  for (double t : yt) {
    svg += "<line x1=\"" + num(left - 5) + "\" y1=\"" + num(py(t)) + "\" x2=\"" + num(left + pw) + "\" y2=\"" + num(py(t)) +
           "\" stroke=\"#dddddd\"/>\n";
    const std::string label = opt.log_y ? "1e" + std::to_string(static_cast<int>(std::lround(t))) : tick_label(t);
    svg += "<text x=\"" + num(left - 8) + "\" y=\"" + num(py(t) + 4) + "\" text-anchor=\"end\">" + label + "</text>\n";
  }
  if (!opt.x_label.empty())
    svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(opt.height - 15.0) + "\" text-anchor=\"middle\">" +
           escape(opt.x_label) + "</text>\n";
  if (!opt.y_label.empty())
    svg += "<text transform=\"translate(18," + num(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
           escape(opt.y_label) + "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const std::string color = kPalette[k % std::size(kPalette)];
    const std::size_t n = usable_prefix(s, opt.log_y);
    if (n > 0) {
      svg += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < n; ++i) {
        const double y = opt.log_y ? std::log10(s.y[i]) : s.y[i];
        svg += (i ? " " : "") + num(px(s.x[i])) + "," + num(py(y));
      }
      svg += "\"/>\n";
      if (s.diverged) {
        const double y = opt.log_y ? std::log10(s.y[n - 1]) : s.y[n - 1];
        const double cx = px(s.x[n - 1]), cy = py(y);
        svg += "<path class=\"diverged\" d=\"M" + num(cx - 5) + "," + num(cy - 5) + " L" + num(cx + 5) + "," + num(cy + 5) +
               " M" + num(cx - 5) + "," + num(cy + 5) + " L" + num(cx + 5) + "," + num(cy - 5) + "\" stroke=\"" + color +
               "\" stroke-width=\"2\"/>\n";
      }
    }
    const double ly = top + 10 + 18.0 * static_cast<double>(k);
    svg += "<g class=\"legend\"><line x1=\"" + num(left + pw + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(left + pw + 32) +
           "\" y2=\"" + num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/><text x=\"" + num(left + pw + 38) +
           "\" y=\"" + num(ly + 4) + "\">" + escape(s.label + (s.diverged ? " (diverged)" : "")) + "</text></g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void render_plot(const std::vector<Series>& series, const PlotOptions& options, const std::filesystem::path& path) {
  io::write_file_atomic(path, render_svg(series, options));
}

}  // namespace hyperinf::plot
