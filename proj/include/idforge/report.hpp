#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace idforge {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct SvgOptions {
    std::size_t width = 640;
    std::size_t height = 400;
    double margin_left = 60.0;
    double margin_right = 20.0;
    double margin_top = 30.0;
    double margin_bottom = 42.0;
    std::string title;
    std::string x_label;
    std::string y_label;
    // When set, ticks go at x = 0..n-1 with these captions instead of the
    // numeric ticks (used for categorical axes).
    std::vector<std::string> x_tick_labels;
};

// Renders one or more line series as a standalone SVG document. Data points
// map into the plot box through one affine transform per axis:
//   px = margin_left + (x - xmin) / (xmax - xmin) * inner_width
//   py = height - margin_bottom - (y - ymin) / (ymax - ymin) * inner_height
// where [xmin, xmax] and [ymin, ymax] span all series (a degenerate span is
// widened by max(0.5, 0.05 |v|) on both sides). Coordinates are printed with
// six significant digits, so the polylines can be checked numerically.
std::string render_line_svg(const std::vector<Series>& series, const SvgOptions& options);

// Writes summary.txt plus SVG charts derived from the files of a run
// directory (manifest present) or an ablation root (summary table present).
// Output is a pure function of the input files, so reruns are byte-identical.
// Returns the names of the files written.
std::vector<std::string> write_report(const std::filesystem::path& dir);

} // namespace idforge
