#include "artuda/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "artuda/errors.hpp"

namespace artuda::svg {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 40, kTop = 50, kBottom = 60;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void write_line_plot(const std::filesystem::path& path,
                     const std::string& title, const std::string& x_label,
                     const std::string& y_label,
                     const std::vector<Series>& series) {
  if (series.empty()) throw ConfigError("svg: no series to plot");

  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  bool first = true;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty()) {
      throw ConfigError("svg: series '" + s.label + "' is empty or ragged");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        first = false;
      }
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  // pad the y range a little so flat lines are visible
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double v) { return kLeft + (v - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double v) { return kTop + ph - (v - ymin) / (ymax - ymin) * ph; };

  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("svg: cannot open " + path.string());
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
    << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
    << kHeight << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
       "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

  // axes
  f << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\""
    << kLeft + pw << "\" y2=\"" << kTop + ph
    << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  f << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
    << "\" y2=\"" << kTop + ph << "\" stroke=\"black\" stroke-width=\"1\"/>\n";

  const int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    double xv = xmin + (xmax - xmin) * i / kTicks;
    double yv = ymin + (ymax - ymin) * i / kTicks;
    f << "<line x1=\"" << sx(xv) << "\" y1=\"" << kTop + ph << "\" x2=\""
      << sx(xv) << "\" y2=\"" << kTop + ph + 5 << "\" stroke=\"black\"/>\n";
    f << "<text x=\"" << sx(xv) << "\" y=\"" << kTop + ph + 20
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"11\">" << fmt(xv) << "</text>\n";
    f << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << sy(yv) << "\" x2=\""
      << kLeft << "\" y2=\"" << sy(yv) << "\" stroke=\"black\"/>\n";
    f << "<text x=\"" << kLeft - 9 << "\" y=\"" << sy(yv) + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
      << fmt(yv) << "</text>\n";
  }
  f << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 14
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"13\">" << x_label << "</text>\n";
  f << "<text x=\"18\" y=\"" << kTop + ph / 2
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
       "transform=\"rotate(-90 18 " << kTop + ph / 2 << ")\">" << y_label
    << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(*kPalette))];
    f << "<polyline fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) f << ' ';
      f << fmt(sx(s.x[i])) << ',' << fmt(sy(s.y[i]));
    }
    f << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      f << "<circle cx=\"" << fmt(sx(s.x[i])) << "\" cy=\"" << fmt(sy(s.y[i]))
        << "\" r=\"2.6\" fill=\"" << color << "\"/>\n";
    }
    double ly = kTop + 6 + 16 * static_cast<double>(si);
    f << "<line x1=\"" << kLeft + pw - 130 << "\" y1=\"" << ly << "\" x2=\""
      << kLeft + pw - 108 << "\" y2=\"" << ly << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/>\n";
    f << "<text x=\"" << kLeft + pw - 102 << "\" y=\"" << ly + 4
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label
      << "</text>\n";
  }
  f << "</svg>\n";
}

}  // namespace artuda::svg
