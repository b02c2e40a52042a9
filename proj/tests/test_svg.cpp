#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "repq/errors.hpp"
#include "repq/svg.hpp"

using namespace repq;

namespace {

std::size_t count_occurrences(const std::string& haystack,
                              const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string::npos;
       pos = haystack.find(needle, pos + needle.size()))
    ++n;
  return n;
}

}  // namespace

TEST_CASE("energy plot is a standalone SVG with one marker per cut") {
  EnergySeries e;
  for (int i = 0; i < 200; ++i) e.values.push_back(1.0 + (i % 37) * 0.01);
  CutSet cuts;
  cuts.recording_id = "rec";
  cuts.cuts = {50, 120};
  cuts.provenance = {CutProvenance::Auto, CutProvenance::Manual};

  const std::string svg = render_energy_svg(e, cuts, "energy <demo>");
  CHECK(svg.rfind("<svg xmlns=\"http://www.w3.org/2000/svg\"", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("energy &lt;demo&gt;") != std::string::npos);
  // Two cut markers (dashed) plus their sample-index labels.
  CHECK(count_occurrences(svg, "stroke-dasharray") == 2);
  CHECK(svg.find(">50</text>") != std::string::npos);
  CHECK(svg.find(">120</text>") != std::string::npos);
  // Manual cuts are drawn in a different color than automatic ones.
  CHECK(svg.find("#c22") != std::string::npos);
  CHECK(svg.find("#2a7") != std::string::npos);

  CHECK(render_energy_svg(e, cuts, "energy <demo>") == svg);  // deterministic

  EnergySeries empty;
  CHECK_THROWS_AS(render_energy_svg(empty, cuts, "t"), DataError);
  CHECK_THROWS_AS(render_energy_svg(e, cuts, "t", 100, 50), ParamError);
}

TEST_CASE("confusion heatmap renders every cell with its count") {
  const std::vector<std::vector<std::int64_t>> m = {
      {5, 1, 0}, {0, 7, 2}, {1, 0, 9}};
  const std::vector<std::string> names = {"30", "60", "90"};

  const std::string svg = render_confusion_svg(m, names, "confusion");
  CHECK(count_occurrences(svg, "<rect x=") == 9);
  CHECK(svg.find(">9</text>") != std::string::npos);
  CHECK(svg.find(">0</text>") != std::string::npos);
  // Peak cell is shaded darkest and switches to white text.
  CHECK(svg.find("fill=\"rgb(38,102,204)\"") != std::string::npos);
  CHECK(svg.find("fill=\"white\"") != std::string::npos);
  // Axis labels present.
  CHECK(svg.find(">predicted</text>") != std::string::npos);
  CHECK(svg.find(">true</text>") != std::string::npos);
  for (const auto& n : names)
    CHECK(svg.find(">" + n + "</text>") != std::string::npos);

  // Class names are optional; indices are used instead.
  const std::string bare = render_confusion_svg(m, {}, "confusion");
  CHECK(bare.find(">2</text>") != std::string::npos);

  CHECK_THROWS_AS(render_confusion_svg({}, {}, "t"), DataError);
  CHECK_THROWS_AS(render_confusion_svg({{1, 2}}, {}, "t"), DataError);
  CHECK_THROWS_AS(render_confusion_svg({{1, 2}, {3, -4}}, {}, "t"), DataError);
  CHECK_THROWS_AS(render_confusion_svg(m, {"a", "b"}, "t"), ParamError);
  CHECK_THROWS_AS(render_confusion_svg(m, names, "t", 8), ParamError);
}

TEST_CASE("save_svg writes the document verbatim") {
  const std::vector<std::vector<std::int64_t>> m = {{1, 0}, {0, 1}};
  const std::string svg = render_confusion_svg(m, {}, "io");
  const auto path = std::filesystem::temp_directory_path() / "repq_plot.svg";
  save_svg(svg, path);
  std::ifstream in(path, std::ios::binary);
  std::string back((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  CHECK(back == svg);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(save_svg(svg, "/nonexistent-dir/x.svg"), DataError);
}
