#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nnforget/memfit.hpp"
#include "nnforget/retention.hpp"
#include "nnforget/scheduler.hpp"

namespace nnforget {

struct PlotOptions {
    std::vector<int> classes;  // empty: every class in the series
    std::string title = "Recall probability";
    int width = 800;
    int height = 480;
    bool timestamp_comment = false;
};

/// Standalone SVG: one smoothed polyline per class, a dashed best-fit curve
/// per class found in `fits`, a vertical marker at every review trigger epoch
/// of a plotted class, and labelled axes with ticks.
std::string render_svg(const RetentionSeries& series, const std::vector<ReviewEvent>& events,
                       const std::map<int, CurveModel>& fits, const PlotOptions& options = {});

void render_svg_plot(const RetentionSeries& series, const std::vector<ReviewEvent>& events,
                     const std::map<int, CurveModel>& fits, const std::filesystem::path& path,
                     const PlotOptions& options = {});

}  // namespace nnforget
