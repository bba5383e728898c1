#pragma once

// Static SVG 1.1 rendering of figure extracts. Output depends only on the
// input text, so identical extracts give identical bytes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sernn/error.hpp"
#include "sernn/metrics_table.hpp"

namespace sernn {

enum class PlotStyle { LineBand, Scatter, ComplexPlane };

struct PlotOptions {
  std::optional<PlotStyle> style;   // inferred from the header when unset
  std::optional<bool> log_y;        // inferred: ln-scale for lambda_max
  std::string title;
};

struct ExtractTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline ExtractTable parse_extract(const std::string& csv) {
  ExtractTable t;
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("plot: empty extract");
  t.header = split_csv_line(line);
  if (t.header.size() < 3) throw FormatError("plot: extract needs at least 3 columns");
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != t.header.size()) throw FormatError("plot: ragged row '" + line + "'");
    t.rows.push_back(std::move(f));
  }
  return t;
}

inline PlotStyle infer_style(const ExtractTable& t) {
  if (std::find(t.header.begin(), t.header.end(), "band") != t.header.end()) return PlotStyle::LineBand;
  if (t.header[1] == "re" && t.header[2] == "im") return PlotStyle::ComplexPlane;
  return PlotStyle::Scatter;
}

namespace detail {

inline constexpr double kWidth = 640.0;
inline constexpr double kHeight = 440.0;
inline constexpr double kLeft = 70.0;
inline constexpr double kRight = 170.0;
inline constexpr double kTop = 40.0;
inline constexpr double kBottom = 60.0;

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[i % 10];
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

inline std::string escape(const std::string& s) {
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

inline double parse_number(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw FormatError("plot: bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw FormatError("plot: bad number '" + s + "'");
  }
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool valid() const { return lo <= hi; }
  void pad() {
    if (!valid()) {
      lo = 0.0;
      hi = 1.0;
    } else if (hi - lo < 1e-12) {
      const double d = std::max(std::abs(lo) * 0.1, 0.5);
      lo -= d;
      hi += d;
    } else {
      const double d = 0.05 * (hi - lo);
      lo -= d;
      hi += d;
    }
  }
};

struct Frame {
  Range x;
  Range y;
  double px(double v) const { return kLeft + (v - x.lo) / (x.hi - x.lo) * (kWidth - kLeft - kRight); }
  double py(double v) const { return kTop + (y.hi - v) / (y.hi - y.lo) * (kHeight - kTop - kBottom); }
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  std::optional<double> band;
};

struct Series {
  std::string name;
  std::vector<Point> points;
};

inline void axes(std::ostringstream& o, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kTop;
  const double y1 = kHeight - kBottom;
  o << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(x1 - x0) << "\" height=\""
    << num(y1 - y0) << "\" fill=\"none\" stroke=\"#000\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x.lo + (f.x.hi - f.x.lo) * i / 4.0;
    const double yv = f.y.lo + (f.y.hi - f.y.lo) * i / 4.0;
    const double tx = f.px(xv);
    const double ty = f.py(yv);
    o << "<line x1=\"" << num(tx) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(tx) << "\" y2=\"" << num(y1 + 5)
      << "\" stroke=\"#000\"/>\n";
    o << "<text x=\"" << num(tx) << "\" y=\"" << num(y1 + 18) << "\" font-size=\"11\" text-anchor=\"middle\">"
      << tick_label(xv) << "</text>\n";
    o << "<line x1=\"" << num(x0 - 5) << "\" y1=\"" << num(ty) << "\" x2=\"" << num(x0) << "\" y2=\"" << num(ty)
      << "\" stroke=\"#000\"/>\n";
    o << "<text x=\"" << num(x0 - 8) << "\" y=\"" << num(ty + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
      << tick_label(yv) << "</text>\n";
  }
  o << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(kHeight - 18)
    << "\" font-size=\"13\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
  o << "<text x=\"18\" y=\"" << num((y0 + y1) / 2) << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << num((y0 + y1) / 2) << ")\">" << escape(ylabel) << "</text>\n";
}

inline void legend(std::ostringstream& o, const std::vector<Series>& series) {
  double y = kTop + 10;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double x = kWidth - kRight + 15;
    o << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 8) << "\" width=\"10\" height=\"10\" fill=\"" << palette(i)
      << "\"/>\n";
    o << "<text x=\"" << num(x + 15) << "\" y=\"" << num(y + 1) << "\" font-size=\"11\">" << escape(series[i].name)
      << "</text>\n";
    y += 16;
  }
}

}  // namespace detail

// Renders an extract (header + rows; first column names the series).
inline std::string render_svg(const std::string& csv, const PlotOptions& opt = {}) {
  using namespace detail;
  const ExtractTable t = parse_extract(csv);
  const PlotStyle style = opt.style.value_or(infer_style(t));
  const std::size_t xcol = 1;
  std::size_t ycol = 2;
  std::optional<std::size_t> bandcol;
  if (style == PlotStyle::LineBand) {
    const auto y_it = std::find(t.header.begin(), t.header.end(), "y");
    const auto b_it = std::find(t.header.begin(), t.header.end(), "band");
    ycol = y_it != t.header.end() ? static_cast<std::size_t>(y_it - t.header.begin()) : 2;
    if (b_it != t.header.end()) bandcol = static_cast<std::size_t>(b_it - t.header.begin());
  }
  const bool log_y = opt.log_y.value_or(t.header[ycol] == "lambda_max");

  std::vector<Series> series;
  std::map<std::string, std::size_t> index;
  for (const auto& row : t.rows) {
    Point p;
    p.x = parse_number(row[xcol]);
    p.y = parse_number(row[ycol]);
    if (bandcol && !row[*bandcol].empty()) p.band = parse_number(row[*bandcol]);
    if (log_y) {
      if (!(p.y > 0.0)) continue;
      if (p.band) {
        const double lo = p.y - *p.band;
        const double hi = p.y + *p.band;
        p.band = lo > 0.0 ? 0.5 * (std::log(hi) - std::log(lo)) : std::optional<double>{};
      }
      p.y = std::log(p.y);
    }
    auto [it, fresh] = index.try_emplace(row[0], series.size());
    if (fresh) series.push_back(Series{row[0], {}});
    series[it->second].points.push_back(p);
  }
  if (style == PlotStyle::LineBand) {
    for (auto& s : series)
      std::stable_sort(s.points.begin(), s.points.end(), [](const Point& a, const Point& b) { return a.x < b.x; });
  }

  Frame f;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      f.x.add(p.x);
      f.y.add(p.y);
      if (p.band) {
        f.y.add(p.y - *p.band);
        f.y.add(p.y + *p.band);
      }
    }
  }
  if (style == PlotStyle::ComplexPlane) {
    double reach = 1.1;
    if (f.x.valid()) reach = std::max({reach, std::abs(f.x.lo), std::abs(f.x.hi)});
    if (f.y.valid()) reach = std::max({reach, std::abs(f.y.lo), std::abs(f.y.hi)});
    reach *= 1.05;
    f.x = {-reach, reach};
    f.y = {-reach, reach};
  } else {
    f.x.pad();
    f.y.pad();
  }

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(kWidth) << "\" height=\""
    << num(kHeight) << "\" viewBox=\"0 0 " << num(kWidth) << " " << num(kHeight) << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
  if (!opt.title.empty()) {
    o << "<text x=\"" << num((kLeft + kWidth - kRight) / 2) << "\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">"
      << escape(opt.title) << "</text>\n";
  }
  const std::string ylabel = log_y ? "ln(" + t.header[ycol] + ")" : t.header[ycol];
  axes(o, f, t.header[xcol], ylabel);

  if (series.empty()) {
    o << "<text x=\"" << num((kLeft + kWidth - kRight) / 2) << "\" y=\"" << num((kTop + kHeight - kBottom) / 2)
      << "\" font-size=\"14\" text-anchor=\"middle\" fill=\"#777\">no data</text>\n";
    o << "</svg>\n";
    return o.str();
  }

  if (style == PlotStyle::ComplexPlane) {
    const double r = f.px(1.0) - f.px(0.0);
    o << "<circle cx=\"" << num(f.px(0.0)) << "\" cy=\"" << num(f.py(0.0)) << "\" r=\"" << num(r)
      << "\" fill=\"none\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    o << "<line x1=\"" << num(f.px(f.x.lo)) << "\" y1=\"" << num(f.py(0.0)) << "\" x2=\"" << num(f.px(f.x.hi))
      << "\" y2=\"" << num(f.py(0.0)) << "\" stroke=\"#ccc\"/>\n";
  }

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = palette(i);
    if (style == PlotStyle::LineBand) {
      std::vector<const Point*> banded;
      for (const auto& p : s.points)
        if (p.band) banded.push_back(&p);
      if (banded.size() >= 2) {
        o << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
        for (const Point* p : banded) o << num(f.px(p->x)) << "," << num(f.py(p->y + *p->band)) << " ";
        for (auto it = banded.rbegin(); it != banded.rend(); ++it) {
          o << num(f.px((*it)->x)) << "," << num(f.py((*it)->y - *(*it)->band));
          if (std::next(it) != banded.rend()) o << " ";
        }
        o << "\"/>\n";
      }
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (std::size_t k = 0; k < s.points.size(); ++k) {
        if (k > 0) o << " ";
        o << num(f.px(s.points[k].x)) << "," << num(f.py(s.points[k].y));
      }
      o << "\"/>\n";
    } else {
      for (const auto& p : s.points) {
        o << "<circle cx=\"" << num(f.px(p.x)) << "\" cy=\"" << num(f.py(p.y)) << "\" r=\"3\" fill=\"" << color
          << "\" fill-opacity=\"0.7\"/>\n";
      }
    }
  }
  legend(o, series);
  o << "</svg>\n";
  return o.str();
}

}  // namespace sernn
