#include "synprobe/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace synprobe {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 400;
constexpr double kLeft = 64;
constexpr double kRight = 160;
constexpr double kTop = 40;
constexpr double kBottom = 56;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

const char* colour(std::size_t i) { return kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))]; }

struct Frame {
  double x_min = 0;
  double x_max = 1;
  double y_min = 0;
  double y_max = 1;

  double px(double x) const {
    const double span = x_max > x_min ? x_max - x_min : 1.0;
    return kLeft + (x - x_min) / span * (kWidth - kLeft - kRight);
  }
  double py(double y) const {
    const double span = y_max > y_min ? y_max - y_min : 1.0;
    const double f = (std::clamp(y, y_min, y_max) - y_min) / span;
    return kTop + (1.0 - f) * (kHeight - kTop - kBottom);
  }
};

void open_svg(std::ostringstream& out, std::string_view provenance, const ChartText& text) {
  std::string comment(provenance);
  for (std::size_t pos = comment.find("--"); pos != std::string::npos; pos = comment.find("--", pos)) {
    comment.replace(pos, 2, "- ");
  }
  out << "<!-- " << comment << " -->\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(text.title)
      << "</text>\n";
}

void draw_y_axis(std::ostringstream& out, const ChartText& text, const Frame& frame) {
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  for (int k = 0; k <= 5; ++k) {
    const double v = frame.y_min + (frame.y_max - frame.y_min) * k / 5.0;
    const double y = frame.py(v);
    out << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(y)
        << "\" stroke=\"#e0e0e0\"/>\n";
    out << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
  const double base = std::clamp(0.0, frame.y_min, frame.y_max);
  out << "<line x1=\"" << num(x0) << "\" y1=\"" << num(frame.py(base)) << "\" x2=\"" << num(x1) << "\" y2=\""
      << num(frame.py(base)) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << num(x0) << "\" y1=\"" << num(frame.py(frame.y_max)) << "\" x2=\"" << num(x0) << "\" y2=\""
      << num(frame.py(frame.y_min)) << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(kHeight - 12) << "\" text-anchor=\"middle\">"
      << xml_escape(text.x_label) << "</text>\n";
  const double ym = (frame.py(frame.y_min) + frame.py(frame.y_max)) / 2;
  out << "<text x=\"16\" y=\"" << num(ym) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << num(ym)
      << ")\">" << xml_escape(text.y_label) << "</text>\n";
}

void draw_legend(std::ostringstream& out, const std::vector<Series>& series) {
  const double x = kWidth - kRight + 16;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 10 + 20.0 * static_cast<double>(i);
    out << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 9) << "\" width=\"12\" height=\"12\" fill=\"" << colour(i)
        << "\"/>\n";
    out << "<text x=\"" << num(x + 18) << "\" y=\"" << num(y + 2) << "\">" << xml_escape(series[i].name)
        << "</text>\n";
  }
}

}  // namespace

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string line_chart_svg(const ChartText& text, const std::vector<Series>& series, std::string_view provenance,
                           const std::vector<std::string>& x_ticks) {
  Frame frame;
  frame.y_min = text.y_min;
  frame.y_max = text.y_max;
  bool any = false;
  for (const auto& s : series) {
    for (double x : s.x) {
      frame.x_min = any ? std::min(frame.x_min, x) : x;
      frame.x_max = any ? std::max(frame.x_max, x) : x;
      any = true;
    }
  }
  std::ostringstream out;
  open_svg(out, provenance, text);
  draw_y_axis(out, text, frame);

  if (!x_ticks.empty()) {
    for (std::size_t i = 0; i < x_ticks.size(); ++i) {
      const double x = frame.px(static_cast<double>(i + 1));
      out << "<text x=\"" << num(x) << "\" y=\"" << num(frame.py(frame.y_min) + 16) << "\" text-anchor=\"middle\">"
          << xml_escape(x_ticks[i]) << "</text>\n";
    }
  } else if (any) {
    const double step = std::max(1.0, std::ceil((frame.x_max - frame.x_min) / 10.0));
    for (double v = frame.x_min; v <= frame.x_max + 1e-9; v += step) {
      out << "<text x=\"" << num(frame.px(v)) << "\" y=\"" << num(frame.py(frame.y_min) + 16) << "\" text-anchor=\"middle\">"
          << num(v) << "</text>\n";
    }
  }

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (n == 0) continue;
    if (s.err.size() >= n) {
      out << "<polygon fill=\"" << colour(i) << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t k = 0; k < n; ++k) out << num(frame.px(s.x[k])) << ',' << num(frame.py(s.y[k] + s.err[k])) << ' ';
      for (std::size_t k = n; k-- > 0;) out << num(frame.px(s.x[k])) << ',' << num(frame.py(s.y[k] - s.err[k])) << ' ';
      out << "\"/>\n";
    }
    out << "<polyline fill=\"none\" stroke=\"" << colour(i) << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < n; ++k) out << num(frame.px(s.x[k])) << ',' << num(frame.py(s.y[k])) << ' ';
    out << "\"/>\n";
    for (std::size_t k = 0; k < n; ++k) {
      out << "<circle cx=\"" << num(frame.px(s.x[k])) << "\" cy=\"" << num(frame.py(s.y[k])) << "\" r=\"3\" fill=\""
          << colour(i) << "\"/>\n";
    }
  }
  draw_legend(out, series);
  out << "</svg>\n";
  return out.str();
}

std::string bar_chart_svg(const ChartText& text, const std::vector<std::string>& categories,
                          const std::vector<Series>& series, std::string_view provenance) {
  std::ostringstream out;
  open_svg(out, provenance, text);
  Frame frame;
  frame.y_min = text.y_min;
  frame.y_max = text.y_max;
  draw_y_axis(out, text, frame);
  const double base = std::clamp(0.0, frame.y_min, frame.y_max);
  const double plot_w = kWidth - kLeft - kRight;
  const double cat_w = categories.empty() ? plot_w : plot_w / static_cast<double>(categories.size());
  const double bar_w = series.empty() ? 0.0 : cat_w * 0.8 / static_cast<double>(series.size());
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double x0 = kLeft + cat_w * static_cast<double>(c) + cat_w * 0.1;
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (c >= series[s].y.size()) continue;
      const double v = series[s].y[c];
      const double x = x0 + bar_w * static_cast<double>(s);
      const double top = std::min(frame.py(v), frame.py(base));
      const double height = std::abs(frame.py(v) - frame.py(base));
      out << "<rect x=\"" << num(x) << "\" y=\"" << num(top) << "\" width=\"" << num(bar_w * 0.9) << "\" height=\""
          << num(height) << "\" fill=\"" << colour(s) << "\"/>\n";
      if (c < series[s].err.size() && series[s].err[c] > 0) {
        const double cx = x + bar_w * 0.45;
        out << "<line x1=\"" << num(cx) << "\" y1=\"" << num(frame.py(v + series[s].err[c])) << "\" x2=\"" << num(cx)
            << "\" y2=\"" << num(frame.py(v - series[s].err[c])) << "\" stroke=\"black\"/>\n";
      }
    }
    out << "<text x=\"" << num(kLeft + cat_w * (static_cast<double>(c) + 0.5)) << "\" y=\"" << num(frame.py(frame.y_min) + 16)
        << "\" text-anchor=\"middle\">" << xml_escape(categories[c]) << "</text>\n";
  }
  draw_legend(out, series);
  out << "</svg>\n";
  return out.str();
}

}  // namespace synprobe
