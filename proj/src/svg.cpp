#include "repq/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "repq/errors.hpp"

namespace repq {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape_text(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

void open_document(std::string& svg, int width, int height) {
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(width) + "\" height=\"" + std::to_string(height) +
         "\" viewBox=\"0 0 " + std::to_string(width) + " " +
         std::to_string(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void add_text(std::string& svg, double x, double y, const std::string& text,
              int size, const std::string& anchor) {
  svg += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" font-size=\"" +
         std::to_string(size) +
         "\" font-family=\"sans-serif\" text-anchor=\"" + anchor + "\">" +
         escape_text(text) + "</text>\n";
}

void add_line(std::string& svg, double x1, double y1, double x2, double y2,
              const std::string& stroke, const std::string& extra = "") {
  svg += "<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" +
         fmt(x2) + "\" y2=\"" + fmt(y2) + "\" stroke=\"" + stroke + "\"" +
         extra + "/>\n";
}

}  // namespace

std::string render_energy_svg(const EnergySeries& energy, const CutSet& cuts,
                              const std::string& title, int width,
                              int height) {
  if (width < 200 || height < 120)
    throw ParamError("render_energy_svg: canvas must be at least 200x120");
  if (energy.values.empty())
    throw DataError("render_energy_svg: empty energy series");

  const double margin_left = 64.0, margin_right = 16.0;
  const double margin_top = 36.0, margin_bottom = 40.0;
  const double plot_w = width - margin_left - margin_right;
  const double plot_h = height - margin_top - margin_bottom;

  double lo = *std::min_element(energy.values.begin(), energy.values.end());
  double hi = *std::max_element(energy.values.begin(), energy.values.end());
  if (!(std::isfinite(lo) && std::isfinite(hi)))
    throw NumericError("render_energy_svg: non-finite energy values");
  if (hi <= lo) hi = lo + 1.0;

  const std::size_t n = energy.values.size();
  auto to_x = [&](double i) {
    return margin_left + (n > 1 ? i / double(n - 1) : 0.5) * plot_w;
  };
  auto to_y = [&](double v) {
    return margin_top + (1.0 - (v - lo) / (hi - lo)) * plot_h;
  };

  std::string svg;
  open_document(svg, width, height);
  add_text(svg, width / 2.0, 22.0, title, 15, "middle");

  // Axes with min/max ticks.
  add_line(svg, margin_left, margin_top, margin_left, margin_top + plot_h,
           "#444");
  add_line(svg, margin_left, margin_top + plot_h, margin_left + plot_w,
           margin_top + plot_h, "#444");
  add_text(svg, margin_left - 6, to_y(hi) + 4, fmt(hi), 11, "end");
  add_text(svg, margin_left - 6, to_y(lo) + 4, fmt(lo), 11, "end");
  add_text(svg, margin_left, height - 12.0, "0", 11, "middle");
  add_text(svg, margin_left + plot_w, height - 12.0, std::to_string(n - 1), 11,
           "middle");
  add_text(svg, width / 2.0, height - 12.0, "sample", 11, "middle");

  // Cut markers under the curve so the profile stays visible.
  for (std::size_t k = 0; k < cuts.cuts.size(); ++k) {
    const double x = to_x(double(cuts.cuts[k]));
    const bool manual = k < cuts.provenance.size() &&
                        cuts.provenance[k] == CutProvenance::Manual;
    add_line(svg, x, margin_top, x, margin_top + plot_h,
             manual ? "#c22" : "#2a7",
             " stroke-width=\"1.5\" stroke-dasharray=\"5,3\"");
    add_text(svg, x, margin_top - 4, std::to_string(cuts.cuts[k]), 10,
             "middle");
  }

  std::string points;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) points += ' ';
    points += fmt(to_x(double(i))) + "," + fmt(to_y(energy.values[i]));
  }
  svg += "<polyline fill=\"none\" stroke=\"#26c\" stroke-width=\"1.5\" "
         "points=\"" + points + "\"/>\n";
  svg += "</svg>\n";
  return svg;
}

std::string render_confusion_svg(
    const std::vector<std::vector<std::int64_t>>& matrix,
    const std::vector<std::string>& class_names, const std::string& title,
    int cell_size) {
  const std::size_t k = matrix.size();
  if (k == 0) throw DataError("render_confusion_svg: empty matrix");
  for (const auto& row : matrix)
    if (row.size() != k)
      throw DataError("render_confusion_svg: matrix must be square");
  if (!class_names.empty() && class_names.size() != k)
    throw ParamError(
        "render_confusion_svg: class name count does not match matrix size");
  if (cell_size < 24)
    throw ParamError("render_confusion_svg: cell size must be at least 24");

  std::int64_t peak = 1;
  for (const auto& row : matrix)
    for (std::int64_t v : row) {
      if (v < 0) throw DataError("render_confusion_svg: negative count");
      peak = std::max(peak, v);
    }

  const double margin_left = 96.0, margin_top = 72.0;
  const double margin_right = 16.0, margin_bottom = 16.0;
  const int width = int(margin_left + k * cell_size + margin_right);
  const int height = int(margin_top + k * cell_size + margin_bottom);

  auto name_of = [&](std::size_t i) {
    return class_names.empty() ? std::to_string(i) : class_names[i];
  };

  std::string svg;
  open_document(svg, width, height);
  add_text(svg, width / 2.0, 22.0, title, 15, "middle");
  add_text(svg, margin_left + k * cell_size / 2.0, 44.0, "predicted", 12,
           "middle");

  for (std::size_t j = 0; j < k; ++j)
    add_text(svg, margin_left + (j + 0.5) * cell_size, margin_top - 8,
             name_of(j), 11, "middle");

  for (std::size_t i = 0; i < k; ++i) {
    const double y0 = margin_top + i * cell_size;
    add_text(svg, margin_left - 10, y0 + cell_size / 2.0 + 4, name_of(i), 11,
             "end");
    for (std::size_t j = 0; j < k; ++j) {
      const double x0 = margin_left + j * cell_size;
      const double shade = double(matrix[i][j]) / double(peak);
      // Interpolate white -> steel blue; keep text legible on dark cells.
      const int r = int(std::lround(255 - shade * (255 - 38)));
      const int g = int(std::lround(255 - shade * (255 - 102)));
      const int b = int(std::lround(255 - shade * (255 - 204)));
      svg += "<rect x=\"" + fmt(x0) + "\" y=\"" + fmt(y0) + "\" width=\"" +
             std::to_string(cell_size) + "\" height=\"" +
             std::to_string(cell_size) + "\" fill=\"rgb(" +
             std::to_string(r) + "," + std::to_string(g) + "," +
             std::to_string(b) + ")\" stroke=\"#999\"/>\n";
      const bool dark = shade > 0.55;
      svg += "<text x=\"" + fmt(x0 + cell_size / 2.0) + "\" y=\"" +
             fmt(y0 + cell_size / 2.0 + 4) +
             "\" font-size=\"12\" font-family=\"sans-serif\" "
             "text-anchor=\"middle\" fill=\"" +
             (dark ? std::string("white") : std::string("#222")) + "\">" +
             std::to_string(matrix[i][j]) + "</text>\n";
    }
  }
  add_text(svg, 20.0, margin_top + k * cell_size / 2.0, "true", 12, "middle");
  svg += "</svg>\n";
  return svg;
}

void save_svg(const std::string& svg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << svg;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace repq
