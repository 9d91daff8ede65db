#include "nnforget/svg_plot.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <set>

#include "nnforget/errors.hpp"
#include "nnforget/io_util.hpp"

namespace nnforget {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string tick_label(double v, double step) {
    char buf[32];
    const int decimals = step >= 1.0 ? 0 : static_cast<int>(std::ceil(-std::log10(step) - 1e-9));
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

double nice_step(double span, int target_ticks) {
    const double raw = span / target_ticks;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double r = raw / mag;
    const double nice = r < 1.5 ? 1.0 : r < 3.0 ? 2.0 : r < 7.0 ? 5.0 : 10.0;
    return nice * mag;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

}  // namespace

std::string render_svg(const RetentionSeries& series, const std::vector<ReviewEvent>& events,
                       const std::map<int, CurveModel>& fits, const PlotOptions& options) {
    if (series.empty()) throw DataError("cannot plot an empty retention series");

    std::vector<int> classes = options.classes;
    if (classes.empty()) {
        std::set<int> present;
        for (const auto& r : series.records()) present.insert(r.cls);
        classes.assign(present.begin(), present.end());
    }
    const std::set<int> plotted(classes.begin(), classes.end());

    double x_lo = std::numeric_limits<double>::infinity();
    double x_hi = -x_lo;
    double y_hi = 0.0;
    for (const auto& r : series.records()) {
        if (!plotted.contains(r.cls)) continue;
        x_lo = std::min(x_lo, static_cast<double>(r.epoch));
        x_hi = std::max(x_hi, static_cast<double>(r.epoch));
        y_hi = std::max(y_hi, r.recall_smoothed);
    }
    if (!std::isfinite(x_lo)) throw DataError("none of the requested classes appear in the series");
    if (x_hi <= x_lo) x_hi = x_lo + 1.0;
    const double y_step = nice_step(std::max(y_hi * 1.1, 0.1), 5);
    const double y_top = std::ceil(std::max(y_hi * 1.05, 0.05) / y_step) * y_step;
    const double x_step = nice_step(x_hi - x_lo, 8);

    const double left = 70, right = 20, top = 40, bottom = 60;
    const double pw = options.width - left - right;
    const double ph = options.height - top - bottom;
    auto sx = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * pw; };
    auto sy = [&](double y) { return top + (1.0 - std::clamp(y, 0.0, y_top) / y_top) * ph; };

    std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    if (options.timestamp_comment) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[64];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        svg += std::string("<!-- generated ") + buf + " -->\n";
    }
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(options.width) +
           "\" height=\"" + std::to_string(options.height) + "\" viewBox=\"0 0 " +
           std::to_string(options.width) + " " + std::to_string(options.height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
           escape(options.title) + "</text>\n";

    // Axes and ticks.
    svg += "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
    svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(left + pw) +
           "\" y2=\"" + num(top + ph) + "\"/>\n";
    svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" +
           num(top + ph) + "\"/>\n";
    svg += "</g>\n<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (double x = std::ceil(x_lo / x_step) * x_step; x <= x_hi + 1e-9; x += x_step) {
        svg += "<line x1=\"" + num(sx(x)) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(sx(x)) +
               "\" y2=\"" + num(top + ph + 5) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + num(sx(x)) + "\" y=\"" + num(top + ph + 18) +
               "\" text-anchor=\"middle\">" + tick_label(x, x_step) + "</text>\n";
    }
    for (double y = 0.0; y <= y_top + 1e-12; y += y_step) {
        svg += "<line x1=\"" + num(left - 5) + "\" y1=\"" + num(sy(y)) + "\" x2=\"" + num(left) +
               "\" y2=\"" + num(sy(y)) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + num(left - 8) + "\" y=\"" + num(sy(y) + 4) +
               "\" text-anchor=\"end\">" + tick_label(y, y_step) + "</text>\n";
    }
    svg += "</g>\n";
    svg += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(options.height - 15.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">Epoch</text>\n";
    svg += "<text transform=\"translate(18," + num(top + ph / 2) +
           ") rotate(-90)\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
           "Recall probability</text>\n";

    for (const auto& e : events) {
        if (!plotted.contains(e.cls)) continue;
        const double x = sx(e.trigger_epoch);
        svg += "<line class=\"review-marker\" data-class=\"" + std::to_string(e.cls) + "\" x1=\"" +
               num(x) + "\" y1=\"" + num(top) + "\" x2=\"" + num(x) + "\" y2=\"" + num(top + ph) +
               "\" stroke=\"#999999\" stroke-width=\"1\"/>\n";
    }

    for (int cls : classes) {
        const auto records = series.records_of(cls);
        if (records.empty()) continue;
        const char* color = kPalette[static_cast<std::size_t>(cls) % std::size(kPalette)];
        std::string pts;
        for (const auto& r : records) {
            if (!pts.empty()) pts += ' ';
            pts += num(sx(r.epoch)) + "," + num(sy(r.recall_smoothed));
        }
        svg += "<polyline class=\"series\" data-class=\"" + std::to_string(cls) +
               "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";

        if (auto it = fits.find(cls); it != fits.end()) {
            std::string fit_pts;
            const int samples = 200;
            for (int i = 0; i <= samples; ++i) {
                const double t = x_lo + (x_hi - x_lo) * i / samples;
                if (!fit_pts.empty()) fit_pts += ' ';
                fit_pts += num(sx(t)) + "," + num(sy(eval_model(it->second, t)));
            }
            svg += "<polyline class=\"fit\" data-class=\"" + std::to_string(cls) +
                   "\" fill=\"none\" stroke=\"" + color +
                   "\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\" points=\"" + fit_pts + "\"/>\n";
        }
    }

    // Legend.
    double ly = top + 10;
    for (int cls : classes) {
        const char* color = kPalette[static_cast<std::size_t>(cls) % std::size(kPalette)];
        svg += "<g class=\"legend\"><line x1=\"" + num(left + pw - 110) + "\" y1=\"" + num(ly) +
               "\" x2=\"" + num(left + pw - 90) + "\" y2=\"" + num(ly) + "\" stroke=\"" + color +
               "\" stroke-width=\"2\"/><text x=\"" + num(left + pw - 85) + "\" y=\"" + num(ly + 4) +
               "\" font-family=\"sans-serif\" font-size=\"11\">class " + std::to_string(cls) +
               "</text></g>\n";
        ly += 16;
    }
    svg += "</svg>\n";
    return svg;
}

void render_svg_plot(const RetentionSeries& series, const std::vector<ReviewEvent>& events,
                     const std::map<int, CurveModel>& fits, const std::filesystem::path& path,
                     const PlotOptions& options) {
    write_file_atomic(path, render_svg(series, events, fits, options));
}

}  // namespace nnforget
