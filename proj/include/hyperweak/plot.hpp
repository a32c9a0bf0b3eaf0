#pragma once

// Static SVG line plots. Axes are log2 unless switched off; reference lines are
// given as d(log2 y) / d(log2 x) (or per unit x on a linear x axis).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace hyperweak::plot {

struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct Spec {
  std::string title, xlabel, ylabel;
  bool logx = true, logy = true;
  std::vector<double> slopes;
};

namespace detail {

inline std::string fx(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", v);
  return b;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '&') o += "&amp;";
    else if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else o += c;
  }
  return o;
}

inline std::string tick_label(double v, bool log) {
  char b[32];
  if (log) std::snprintf(b, sizeof b, "2^%d", static_cast<int>(std::lround(v)));
  else std::snprintf(b, sizeof b, "%g", v);
  return b;
}

}  // namespace detail

inline std::string svg(const Spec& s, const std::vector<Series>& series) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};
  const double W = 720, H = 460, L = 70, R = 200, T = 40, B = 50;
  const double X0 = L, X1 = W - R, Y0 = T, Y1 = H - B;
  auto tx = [&](double v) { return s.logx ? std::log2(v) : v; };
  auto ty = [&](double v) { return s.logy ? std::log2(v) : v; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!s.logx || x > 0) && (!s.logy || y > 0);
  };

  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& se : series)
    for (std::size_t i = 0; i < se.x.size(); ++i)
      if (usable(se.x[i], se.y[i])) {
        xmin = std::min(xmin, tx(se.x[i])), xmax = std::max(xmax, tx(se.x[i]));
        ymin = std::min(ymin, ty(se.y[i])), ymax = std::max(ymax, ty(se.y[i]));
      }
  const bool empty = !(xmin <= xmax);
  if (empty) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax - xmin < 1e-9) xmin -= 1, xmax += 1;
  if (ymax - ymin < 1e-9) ymin -= 1, ymax += 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad, ymax += ypad;
  auto px = [&](double u) { return X0 + (u - xmin) / (xmax - xmin) * (X1 - X0); };
  auto py = [&](double v) { return Y1 - (v - ymin) / (ymax - ymin) * (Y1 - Y0); };

  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fx(W) + "\" height=\"" + detail::fx(H) +
       "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<defs><clipPath id=\"area\"><rect x=\"" + detail::fx(X0) + "\" y=\"" + detail::fx(Y0) + "\" width=\"" +
       detail::fx(X1 - X0) + "\" height=\"" + detail::fx(Y1 - Y0) + "\"/></clipPath></defs>\n";
  o += "<text x=\"" + detail::fx(W / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
       detail::escape(s.title) + "</text>\n";
  o += "<rect x=\"" + detail::fx(X0) + "\" y=\"" + detail::fx(Y0) + "\" width=\"" + detail::fx(X1 - X0) +
       "\" height=\"" + detail::fx(Y1 - Y0) + "\" fill=\"none\" stroke=\"black\"/>\n";

  auto ticks = [&](double lo, double hi, bool log, bool xaxis) {
    const double step = std::max(1.0, std::ceil((hi - lo) / 8));
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9; v += step) {
      if (xaxis) {
        o += "<line x1=\"" + detail::fx(px(v)) + "\" y1=\"" + detail::fx(Y1) + "\" x2=\"" + detail::fx(px(v)) +
             "\" y2=\"" + detail::fx(Y1 + 5) + "\" stroke=\"black\"/>\n";
        o += "<text x=\"" + detail::fx(px(v)) + "\" y=\"" + detail::fx(Y1 + 18) + "\" text-anchor=\"middle\">" +
             detail::tick_label(v, log) + "</text>\n";
      } else {
        o += "<line x1=\"" + detail::fx(X0 - 5) + "\" y1=\"" + detail::fx(py(v)) + "\" x2=\"" + detail::fx(X0) +
             "\" y2=\"" + detail::fx(py(v)) + "\" stroke=\"black\"/>\n";
        o += "<text x=\"" + detail::fx(X0 - 8) + "\" y=\"" + detail::fx(py(v) + 4) + "\" text-anchor=\"end\">" +
             detail::tick_label(v, log) + "</text>\n";
      }
    }
  };
  ticks(xmin, xmax, s.logx, true);
  ticks(ymin, ymax, s.logy, false);
  o += "<text x=\"" + detail::fx((X0 + X1) / 2) + "\" y=\"" + detail::fx(H - 10) + "\" text-anchor=\"middle\">" +
       detail::escape(s.xlabel) + "</text>\n";
  o += "<text transform=\"translate(16," + detail::fx((Y0 + Y1) / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       detail::escape(s.ylabel) + "</text>\n";

  // reference lines through the centre of the data box
  const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
  for (double sl : s.slopes) {
    const double ya = cy + sl * (xmin - cx), yb = cy + sl * (xmax - cx);
    o += "<line clip-path=\"url(#area)\" x1=\"" + detail::fx(px(xmin)) + "\" y1=\"" + detail::fx(py(ya)) +
         "\" x2=\"" + detail::fx(px(xmax)) + "\" y2=\"" + detail::fx(py(yb)) +
         "\" stroke=\"#999999\" stroke-dasharray=\"6,4\"/>\n";
  }

  int legend = 0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& se = series[k];
    const std::string col = palette[k % 10];
    std::string pts;
    for (std::size_t i = 0; i < se.x.size(); ++i)
      if (usable(se.x[i], se.y[i])) pts += detail::fx(px(tx(se.x[i]))) + "," + detail::fx(py(ty(se.y[i]))) + " ";
    if (!pts.empty()) {
      pts.pop_back();
      o += "<polyline clip-path=\"url(#area)\" fill=\"none\" stroke=\"" + col + "\" stroke-width=\"1.5\" points=\"" +
           pts + "\"/>\n";
    }
    if (legend < 20 && !se.label.empty()) {
      const double ly = Y0 + 14 * legend + 6;
      o += "<line x1=\"" + detail::fx(X1 + 10) + "\" y1=\"" + detail::fx(ly) + "\" x2=\"" + detail::fx(X1 + 30) +
           "\" y2=\"" + detail::fx(ly) + "\" stroke=\"" + col + "\" stroke-width=\"2\"/>\n";
      o += "<text x=\"" + detail::fx(X1 + 35) + "\" y=\"" + detail::fx(ly + 4) + "\">" + detail::escape(se.label) +
           "</text>\n";
      ++legend;
    }
  }
  for (std::size_t k = 0; k < s.slopes.size(); ++k) {
    const double ly = Y0 + 14 * (legend + static_cast<int>(k)) + 6;
    char b[48];
    std::snprintf(b, sizeof b, "slope %g", s.slopes[k]);
    o += "<line x1=\"" + detail::fx(X1 + 10) + "\" y1=\"" + detail::fx(ly) + "\" x2=\"" + detail::fx(X1 + 30) +
         "\" y2=\"" + detail::fx(ly) + "\" stroke=\"#999999\" stroke-dasharray=\"6,4\"/>\n";
    o += "<text x=\"" + detail::fx(X1 + 35) + "\" y=\"" + detail::fx(ly + 4) + "\">" + b + "</text>\n";
  }
  if (empty)
    o += "<text x=\"" + detail::fx((X0 + X1) / 2) + "\" y=\"" + detail::fx((Y0 + Y1) / 2) +
         "\" text-anchor=\"middle\">no positive data</text>\n";
  o += "</svg>\n";
  return o;
}

}  // namespace hyperweak::plot
