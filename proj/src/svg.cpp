#include "fednh/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace fednh {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                    "#d62728", "#9467bd", "#8c564b"};

const char* color(int c) { return kPalette[static_cast<std::size_t>(c) % 6]; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string header(int w, int h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + std::to_string(w) + " " +
         std::to_string(h) + "\" width=\"" + std::to_string(w) + "\" height=\"" +
         std::to_string(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

}  // namespace

std::string scatter_svg(const Eigen::MatrixXd& points, std::span<const int> labels,
                        const Eigen::MatrixXd& rays, const std::string& title) {
  if (points.rows() != 2 || static_cast<std::size_t>(points.cols()) != labels.size())
    throw std::invalid_argument("scatter_svg: expected 2 x N points matching the labels");
  if (rays.size() > 0 && rays.cols() != 2)
    throw std::invalid_argument("scatter_svg: rays must be C x 2");

  constexpr int size = 600;
  constexpr double center = size / 2.0, half = size / 2.0 - 30.0;
  double extent = 1.0;
  for (Eigen::Index i = 0; i < points.cols(); ++i)
    extent = std::max({extent, std::abs(points(0, i)), std::abs(points(1, i))});
  const double k = half / extent;

  std::string out = header(size, size);
  out += "<text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" + escape(title) +
         "</text>\n";
  out += "<line x1=\"" + num(center - half) + "\" y1=\"" + num(center) + "\" x2=\"" +
         num(center + half) + "\" y2=\"" + num(center) + "\" stroke=\"#ccc\"/>\n";
  out += "<line x1=\"" + num(center) + "\" y1=\"" + num(center - half) + "\" x2=\"" +
         num(center) + "\" y2=\"" + num(center + half) + "\" stroke=\"#ccc\"/>\n";
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    out += "<circle cx=\"" + num(center + k * points(0, i)) + "\" cy=\"" +
           num(center - k * points(1, i)) + "\" r=\"1.5\" fill=\"" + color(labels[i]) +
           "\" fill-opacity=\"0.5\"/>\n";
  }
  for (Eigen::Index c = 0; c < rays.rows(); ++c) {
    const double n = rays.row(c).norm();
    if (n == 0.0) continue;
    const double x = center + half * rays(c, 0) / n, y = center - half * rays(c, 1) / n;
    out += "<line x1=\"" + num(center) + "\" y1=\"" + num(center) + "\" x2=\"" + num(x) +
           "\" y2=\"" + num(y) + "\" stroke=\"" + color(static_cast<int>(c)) +
           "\" stroke-width=\"3\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string heatmap_svg(const Eigen::MatrixXd& values, const std::string& title) {
  if (values.rows() != values.cols() || values.rows() == 0)
    throw std::invalid_argument("heatmap_svg: expected a non-empty square matrix");
  const int n = static_cast<int>(values.rows());
  constexpr int cell = 60, margin = 40;
  const int size = 2 * margin + n * cell;

  std::string out = header(size, size);
  out += "<text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" + escape(title) +
         "</text>\n";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double v = std::clamp(values(i, j), -1.0, 1.0);
      const int fade = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(v))));
      char fill[8];
      if (v >= 0)
        std::snprintf(fill, sizeof fill, "#ff%02x%02x", fade, fade);
      else
        std::snprintf(fill, sizeof fill, "#%02x%02xff", fade, fade);
      const int x = margin + j * cell, y = margin + i * cell;
      out += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
             std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"" + fill +
             "\" stroke=\"#888\"/>\n";
      out += "<text x=\"" + std::to_string(x + cell / 2) + "\" y=\"" +
             std::to_string(y + cell / 2 + 4) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
             num(values(i, j)) + "</text>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace fednh
