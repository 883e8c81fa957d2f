#include "biov/cli/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "biov/core/errors.hpp"

namespace biov {

namespace {

std::string xml_escape(const std::string& s) {
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

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#9c755f"};

}  // namespace

std::string bar_chart_svg(const std::string& title, const std::vector<ChartSeries>& bars) {
  const double left = 60, top = 40, plot_h = 240, bar_w = 48, gap = 24;
  const double plot_w = std::max(1.0, static_cast<double>(bars.size())) * (bar_w + gap) + gap;
  const double width = left + plot_w + 20, height = top + plot_h + 90;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
    << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t * 0.25, y = top + plot_h * (1 - v);
    s << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + plot_w << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fmt(v, "%.2f") << "</text>\n";
  }
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double v = std::clamp(bars[i].value, 0.0, 1.0);
    const double x = left + gap + i * (bar_w + gap), h = plot_h * v;
    s << "<rect x=\"" << x << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar_w << "\" height=\"" << h
      << "\" fill=\"" << kPalette[i % 8] << "\"><title>" << xml_escape(bars[i].label) << ": " << fmt(bars[i].value)
      << "</title></rect>\n";
    s << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << top + plot_h - h - 4 << "\" text-anchor=\"middle\">"
      << fmt(bars[i].value) << "</text>\n";
    s << "<text transform=\"translate(" << x + bar_w / 2 << "," << top + plot_h + 12
      << ") rotate(30)\" text-anchor=\"start\">" << xml_escape(bars[i].label) << "</text>\n";
  }
  s << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\"" << top + plot_h
    << "\" stroke=\"#333\"/>\n";
  s << "</svg>\n";
  return s.str();
}

std::string line_chart_svg(const std::string& title, const std::vector<std::string>& names,
                           const std::vector<std::vector<double>>& curves) {
  if (names.size() != curves.size()) throw InvalidArgument("line chart needs one name per curve");
  double lo = INFINITY, hi = -INFINITY;
  std::size_t n = 0;
  for (const auto& c : curves) {
    for (double v : c) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    n = std::max(n, c.size());
  }
  if (!(hi >= lo)) lo = 0, hi = 1;
  if (hi == lo) hi = lo + 1;
  const double left = 70, top = 40, plot_w = 420, plot_h = 240;
  auto px = [&](std::size_t i) { return left + (n > 1 ? plot_w * i / (n - 1) : plot_w / 2); };
  auto py = [&](double v) { return top + plot_h * (1 - (v - lo) / (hi - lo)); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + plot_w + 140 << "\" height=\""
    << top + plot_h + 50 << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"" << left + plot_w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
    << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4;
    s << "<line x1=\"" << left << "\" y1=\"" << py(v) << "\" x2=\"" << left + plot_w << "\" y2=\"" << py(v)
      << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << fmt(v, "%.3g") << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    s << "<text x=\"" << px(i) << "\" y=\"" << top + plot_h + 16 << "\" text-anchor=\"middle\">" << i << "</text>\n";
  }
  for (std::size_t k = 0; k < curves.size(); ++k) {
    s << "<polyline fill=\"none\" stroke=\"" << kPalette[k % 8] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < curves[k].size(); ++i) s << (i ? " " : "") << px(i) << "," << py(curves[k][i]);
    s << "\"/>\n";
    s << "<text x=\"" << left + plot_w + 10 << "\" y=\"" << top + 14 * (k + 1) << "\" fill=\"" << kPalette[k % 8]
      << "\">" << xml_escape(names[k]) << "</text>\n";
  }
  s << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << top + plot_h + 40 << "\" text-anchor=\"middle\">epoch</text>\n";
  s << "</svg>\n";
  return s.str();
}

const std::vector<std::string>& report_metric_names() {
  static const std::vector<std::string> names{"roc_auc", "accuracy", "precision", "recall"};
  return names;
}

double report_metric(const EvalReport& r, const std::string& name) {
  if (name == "roc_auc") return r.roc_auc;
  if (name == "accuracy") return r.accuracy;
  if (name == "precision") return r.precision;
  if (name == "recall") return r.recall;
  throw KeyError(name, "unknown report metric");
}

}  // namespace biov
