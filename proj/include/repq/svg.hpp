#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "repq/segmentation.hpp"

namespace repq {

// Static SVG renderings used by the `plot` subcommand and the evaluation
// reports.  Both renderers return a complete standalone SVG document; the
// output is deterministic for identical inputs.

// Energy profile with proposed cut positions overlaid as vertical markers.
std::string render_energy_svg(const EnergySeries& energy, const CutSet& cuts,
                              const std::string& title, int width = 960,
                              int height = 320);

// Square heatmap of a confusion matrix; cell shade tracks the count and the
// count itself is printed in each cell.
std::string render_confusion_svg(
    const std::vector<std::vector<std::int64_t>>& matrix,
    const std::vector<std::string>& class_names, const std::string& title,
    int cell_size = 72);

void save_svg(const std::string& svg, const std::filesystem::path& path);

}  // namespace repq
