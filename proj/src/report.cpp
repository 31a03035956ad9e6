#include "idforge/report.hpp"

#include "idforge/errors.hpp"
#include "idforge/io.hpp"
#include "idforge/pipeline.hpp"
#include "idforge/rl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fs = std::filesystem;

namespace idforge {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

std::string fmt_g(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

std::string coord(double v) { return fmt_g(v, 6); }

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
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

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

Range padded(double lo, double hi) {
    if (lo < hi) return {lo, hi};
    const double pad = std::max(0.5, 0.05 * std::abs(lo));
    return {lo - pad, hi + pad};
}

// --- report-side CSV loading: every failure names the offending file -------

CsvTable load_csv_for_report(const fs::path& path) {
    if (!fs::exists(path)) throw ReportError("missing input file: " + path.string());
    try {
        return csv_from_string(read_text_file(path));
    } catch (const Error& e) {
        throw ReportError("corrupt input file " + path.string() + ": " + e.what());
    }
}

double report_value(const std::string& text, const fs::path& path) {
    double v = 0.0;
    try {
        std::size_t used = 0;
        v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ReportError("corrupt input file " + path.string() + ": non-numeric value '" +
                          text + "'");
    }
    if (!std::isfinite(v))
        throw ReportError("corrupt input file " + path.string() + ": non-finite value '" + text +
                          "'");
    return v;
}

std::size_t column_index(const CsvTable& t, const std::string& name, const fs::path& path) {
    const auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end())
        throw ReportError("corrupt input file " + path.string() + ": missing column '" + name +
                          "'");
    return static_cast<std::size_t>(it - t.header.begin());
}

std::vector<double> column_values(const CsvTable& t, const std::string& name,
                                  const fs::path& path) {
    const std::size_t idx = column_index(t, name, path);
    std::vector<double> out;
    out.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        if (idx >= row.size())
            throw ReportError("corrupt input file " + path.string() + ": short row");
        out.push_back(report_value(row[idx], path));
    }
    return out;
}

// --- summary.txt helpers ----------------------------------------------------

void append_table(std::ostringstream& out, const std::vector<std::vector<std::string>>& rows) {
    if (rows.empty()) return;
    std::vector<std::size_t> widths(rows.front().size(), 0);
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c)
            widths[c] = std::max(widths[c], row[c].size());
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << row[c];
            if (c + 1 < row.size())
                out << std::string(widths[c] - row[c].size() + 3, ' ');
        }
        out << "\n";
    }
}

void append_heading(std::ostringstream& out, const std::string& text) {
    out << text << "\n" << std::string(text.size(), '-') << "\n";
}

struct RewardHistory {
    bool present = false; // file exists and has at least one row
    std::size_t steps = 0;
    double first_r_norm = 0.0;
    double last_r_norm = 0.0;
};

} // namespace

std::string render_line_svg(const std::vector<Series>& series, const SvgOptions& options) {
    if (series.empty()) throw ArgumentError("render_line_svg: need at least one series");
    const double inner_w =
        static_cast<double>(options.width) - options.margin_left - options.margin_right;
    const double inner_h =
        static_cast<double>(options.height) - options.margin_top - options.margin_bottom;
    if (inner_w < 10.0 || inner_h < 10.0)
        throw ArgumentError("render_line_svg: canvas too small for the margins");

    double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;
    bool first = true;
    for (const Series& s : series) {
        if (s.x.size() != s.y.size())
            throw DimensionError("render_line_svg: series '" + s.label + "' has mismatched axes");
        if (s.x.empty())
            throw ArgumentError("render_line_svg: series '" + s.label + "' is empty");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]))
                throw NumericError("render_line_svg: series '" + s.label +
                                   "' contains a non-finite value");
            if (first) {
                xmin = xmax = s.x[i];
                ymin = ymax = s.y[i];
                first = false;
            } else {
                xmin = std::min(xmin, s.x[i]);
                xmax = std::max(xmax, s.x[i]);
                ymin = std::min(ymin, s.y[i]);
                ymax = std::max(ymax, s.y[i]);
            }
        }
    }
    const Range xr = padded(xmin, xmax);
    const Range yr = padded(ymin, ymax);

    const double plot_left = options.margin_left;
    const double plot_top = options.margin_top;
    const double plot_bottom = static_cast<double>(options.height) - options.margin_bottom;
    const double plot_right = static_cast<double>(options.width) - options.margin_right;
    auto px = [&](double x) { return plot_left + (x - xr.lo) / (xr.hi - xr.lo) * inner_w; };
    auto py = [&](double y) { return plot_bottom - (y - yr.lo) / (yr.hi - yr.lo) * inner_h; };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width << "\" height=\""
        << options.height << "\" viewBox=\"0 0 " << options.width << " " << options.height
        << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << options.width << "\" height=\"" << options.height
        << "\" fill=\"#ffffff\"/>\n";
    if (!options.title.empty()) {
        svg << "<text class=\"title\" x=\"" << coord(static_cast<double>(options.width) / 2)
            << "\" y=\"18\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"13\">"
            << xml_escape(options.title) << "</text>\n";
    }
    svg << "<rect class=\"plot\" x=\"" << coord(plot_left) << "\" y=\"" << coord(plot_top)
        << "\" width=\"" << coord(inner_w) << "\" height=\"" << coord(inner_h)
        << "\" fill=\"none\" stroke=\"#333333\"/>\n";

    // Ticks: categorical captions when provided, otherwise five even splits.
    if (!options.x_tick_labels.empty()) {
        for (std::size_t i = 0; i < options.x_tick_labels.size(); ++i) {
            const double x = px(static_cast<double>(i));
            svg << "<line x1=\"" << coord(x) << "\" y1=\"" << coord(plot_bottom) << "\" x2=\""
                << coord(x) << "\" y2=\"" << coord(plot_bottom + 4) << "\" stroke=\"#333333\"/>\n";
            svg << "<text x=\"" << coord(x) << "\" y=\"" << coord(plot_bottom + 16)
                << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"10\">"
                << xml_escape(options.x_tick_labels[i]) << "</text>\n";
        }
    } else {
        for (int i = 0; i <= 4; ++i) {
            const double v = xr.lo + (xr.hi - xr.lo) * i / 4.0;
            const double x = px(v);
            svg << "<line x1=\"" << coord(x) << "\" y1=\"" << coord(plot_bottom) << "\" x2=\""
                << coord(x) << "\" y2=\"" << coord(plot_bottom + 4) << "\" stroke=\"#333333\"/>\n";
            svg << "<text x=\"" << coord(x) << "\" y=\"" << coord(plot_bottom + 16)
                << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"10\">"
                << fmt_g(v, 4) << "</text>\n";
        }
    }
    for (int i = 0; i <= 4; ++i) {
        const double v = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        const double y = py(v);
        svg << "<line x1=\"" << coord(plot_left - 4) << "\" y1=\"" << coord(y) << "\" x2=\""
            << coord(plot_left) << "\" y2=\"" << coord(y) << "\" stroke=\"#333333\"/>\n";
        svg << "<text x=\"" << coord(plot_left - 7) << "\" y=\"" << coord(y + 3)
            << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"10\">" << fmt_g(v, 4)
            << "</text>\n";
    }
    if (!options.x_label.empty()) {
        svg << "<text x=\"" << coord((plot_left + plot_right) / 2) << "\" y=\""
            << coord(static_cast<double>(options.height) - 8)
            << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\">"
            << xml_escape(options.x_label) << "</text>\n";
    }
    if (!options.y_label.empty()) {
        const double cx = 14.0;
        const double cy = (plot_top + plot_bottom) / 2;
        svg << "<text x=\"" << coord(cx) << "\" y=\"" << coord(cy)
            << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\" "
            << "transform=\"rotate(-90 " << coord(cx) << " " << coord(cy) << ")\">"
            << xml_escape(options.y_label) << "</text>\n";
    }

    for (std::size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        const char* color = kPalette[si % kPaletteSize];
        if (s.x.size() == 1) {
            svg << "<circle class=\"series\" cx=\"" << coord(px(s.x[0])) << "\" cy=\""
                << coord(py(s.y[0])) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
            continue;
        }
        svg << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (i) svg << " ";
            svg << coord(px(s.x[i])) << "," << coord(py(s.y[i]));
        }
        svg << "\"/>\n";
    }

    // Legend in the top-right corner of the plot box.
    for (std::size_t si = 0; si < series.size(); ++si) {
        const double y = plot_top + 14.0 + 14.0 * static_cast<double>(si);
        const double x = plot_right - 120.0;
        svg << "<line x1=\"" << coord(x) << "\" y1=\"" << coord(y - 3) << "\" x2=\""
            << coord(x + 18) << "\" y2=\"" << coord(y - 3) << "\" stroke=\""
            << kPalette[si % kPaletteSize] << "\" stroke-width=\"1.5\"/>\n";
        svg << "<text x=\"" << coord(x + 24) << "\" y=\"" << coord(y)
            << "\" font-family=\"monospace\" font-size=\"10\">" << xml_escape(series[si].label)
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::vector<std::string> write_report(const fs::path& dir) {
    const bool is_run = fs::exists(dir / kManifestFile);
    const bool is_ablation = fs::exists(dir / kAblationSummaryFile);
    if (!is_run && !is_ablation)
        throw ReportError("missing input file: " + (dir / kManifestFile).string());

    std::vector<std::string> written;
    std::ostringstream summary;

    if (is_run) {
        RunManifest manifest;
        try {
            manifest = load_manifest(dir);
        } catch (const Error& e) {
            throw ReportError("corrupt input file " + (dir / kManifestFile).string() + ": " +
                              e.what());
        }

        summary << "idforge run report\n==================\n";
        summary << "run id:      " << manifest.run_id << "\n";
        summary << "seed:        " << manifest.seed << "\n";
        summary << "config hash: " << manifest.config_hash << "\n\n";

        append_heading(summary, "stages");
        std::vector<std::vector<std::string>> table;
        table.push_back({"stage", "status", "wall ms", "note"});
        for (const std::string& name : stage_order()) {
            const auto it = manifest.stages.find(name);
            if (it == manifest.stages.end()) {
                table.push_back({name, "absent", "", ""});
                continue;
            }
            const StageRecord& rec = it->second;
            table.push_back({name, rec.status,
                             rec.status == "complete" ? fmt_g(rec.wall_ms, 5) : "", rec.note});
        }
        append_table(summary, table);
        summary << "\n";

        if (fs::exists(dir / kMetricsCsvFile)) {
            append_heading(summary, "metrics");
            const CsvTable metrics = load_csv_for_report(dir / kMetricsCsvFile);
            std::vector<std::vector<std::string>> mt;
            for (const auto& row : metrics.rows) {
                if (row.size() < 2)
                    throw ReportError("corrupt input file " + (dir / kMetricsCsvFile).string() +
                                      ": short row");
                mt.push_back({row[0], fmt_g(report_value(row[1], dir / kMetricsCsvFile), 6)});
            }
            append_table(summary, mt);
            summary << "\n";
        }

        RewardHistory hist;
        if (fs::exists(dir / kRlHistoryFile)) {
            const CsvTable t = load_csv_for_report(dir / kRlHistoryFile);
            if (!t.rows.empty()) {
                const auto steps = column_values(t, "step", dir / kRlHistoryFile);
                const auto r_norm = column_values(t, "mean_r_norm", dir / kRlHistoryFile);
                hist.present = true;
                hist.steps = t.rows.size();
                hist.first_r_norm = r_norm.front();
                hist.last_r_norm = r_norm.back();

                std::vector<Series> series;
                for (const char* col :
                     {"mean_r_norm", "mean_r_sem", "mean_r_cov", "mean_r_exp"}) {
                    series.push_back({col, steps, column_values(t, col, dir / kRlHistoryFile)});
                }
                SvgOptions opt;
                opt.title = "reward components per update";
                opt.x_label = "update step";
                opt.y_label = "reward";
                atomic_write_file(dir / "reward_curve.svg", render_line_svg(series, opt));
                written.push_back("reward_curve.svg");
            }
        }
        append_heading(summary, "reward history");
        if (hist.present) {
            summary << "updates:           " << hist.steps << "\n";
            summary << "mean r_norm first: " << fmt_g(hist.first_r_norm, 6) << "\n";
            summary << "mean r_norm last:  " << fmt_g(hist.last_r_norm, 6) << "\n";
        } else {
            summary << "no RL stage (reward history empty)\n";
        }
        summary << "\n";

        if (fs::exists(dir / kTrainCurveFile)) {
            const CsvTable t = load_csv_for_report(dir / kTrainCurveFile);
            if (!t.rows.empty()) {
                Series s{"id loss", column_values(t, "step", dir / kTrainCurveFile),
                         column_values(t, "loss", dir / kTrainCurveFile)};
                SvgOptions opt;
                opt.title = "classifier training loss";
                opt.x_label = "step";
                opt.y_label = "loss";
                atomic_write_file(dir / "train_loss.svg", render_line_svg({s}, opt));
                written.push_back("train_loss.svg");
            }
        }
    }

    if (is_ablation) {
        const CsvTable t = load_csv_for_report(dir / kAblationSummaryFile);
        if (is_run) summary << "\n";
        summary << "idforge ablation report\n=======================\n\n";
        std::vector<std::vector<std::string>> table;
        table.push_back({"variant", "runs", "closed mean", "closed std", "novel mean",
                         "novel std"});
        const std::size_t vi = column_index(t, "variant", dir / kAblationSummaryFile);
        const std::size_t ri = column_index(t, "runs", dir / kAblationSummaryFile);
        const auto mc = column_values(t, "mean_closed", dir / kAblationSummaryFile);
        const auto sc = column_values(t, "std_closed", dir / kAblationSummaryFile);
        const auto mn = column_values(t, "mean_novel", dir / kAblationSummaryFile);
        const auto sn = column_values(t, "std_novel", dir / kAblationSummaryFile);
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            labels.push_back(t.rows[i].at(vi));
            table.push_back({t.rows[i].at(vi), t.rows[i].at(ri), fmt_g(mc[i], 6), fmt_g(sc[i], 6),
                             fmt_g(mn[i], 6), fmt_g(sn[i], 6)});
        }
        append_table(summary, table);

        if (!t.rows.empty()) {
            std::vector<double> idx(t.rows.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<double>(i);
            SvgOptions opt;
            opt.title = "held-out accuracy per configuration";
            opt.x_label = "configuration";
            opt.y_label = "accuracy";
            opt.x_tick_labels = labels;
            const std::string svg = render_line_svg(
                {{"closed-set", idx, mc}, {"novel", idx, mn}}, opt);
            atomic_write_file(dir / "accuracy_ladder.svg", svg);
            written.push_back("accuracy_ladder.svg");
        }
    }

    atomic_write_file(dir / "summary.txt", summary.str());
    written.insert(written.begin(), "summary.txt");
    return written;
}

} // namespace idforge
