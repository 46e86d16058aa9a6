#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "biphoton/error.hpp"

namespace biphoton::plot {

struct Series {
    std::string label{};
    std::vector<double> x{};
    std::vector<double> y{};
    /// Draw as a histogram-style staircase centred on each x.
    bool step = false;
    std::string color{};
};

struct Options {
    std::string title{};
    std::string x_label{};
    std::string y_label{};
    bool log_y = false;
    int width = 720;
    int height = 480;
};

namespace detail {

inline std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string tick_label(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

inline std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

/// Ticks at 1, 2 or 5 times a power of ten, about `target` of them.
inline std::vector<double> nice_ticks(double lo, double hi, int target = 6)
{
    const double raw = (hi - lo) / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    }
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) {
        ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
    }
    return ticks;
}

inline const char* palette(std::size_t i)
{
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    return colors[i % 6];
}

} // namespace detail

/// Standalone SVG line/step chart. Non-positive y values are skipped on a log axis.
inline std::string render_svg(const std::vector<Series>& series, const Options& options = {})
{
    double x_lo = std::numeric_limits<double>::infinity();
    double x_hi = -x_lo;
    double y_lo = x_lo;
    double y_hi = -x_lo;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw DomainError("plot series '" + s.label + "' has mismatched x/y");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (options.log_y && s.y[i] <= 0.0) continue;
            x_lo = std::min(x_lo, s.x[i]);
            x_hi = std::max(x_hi, s.x[i]);
            const double y = options.log_y ? std::log10(s.y[i]) : s.y[i];
            y_lo = std::min(y_lo, y);
            y_hi = std::max(y_hi, y);
        }
    }
    if (!(x_lo <= x_hi)) {
        x_lo = 0.0;
        x_hi = 1.0;
        y_lo = 0.0;
        y_hi = 1.0;
    }
    if (x_hi == x_lo) x_hi = x_lo + 1.0;
    if (!options.log_y) y_lo = std::min(y_lo, 0.0);
    if (options.log_y) {
        y_lo = std::floor(y_lo);
        y_hi = std::max(std::ceil(y_hi), y_lo + 1.0);
    } else if (y_hi == y_lo) {
        y_hi = y_lo + 1.0;
    } else {
        y_hi += 0.05 * (y_hi - y_lo);
    }

    const double left = 80;
    const double right = options.width - 20.0;
    const double top = 40;
    const double bottom = options.height - 60.0;
    auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * (right - left); };
    auto py = [&](double y) { return bottom - (y - y_lo) / (y_hi - y_lo) * (bottom - top); };

    using detail::fmt;
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(options.width)
                      + "\" height=\"" + std::to_string(options.height) + "\" font-family=\"sans-serif\" "
                      + "font-size=\"12\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<rect x=\"" + fmt(left) + "\" y=\"" + fmt(top) + "\" width=\"" + fmt(right - left) + "\" height=\""
           + fmt(bottom - top) + "\" fill=\"none\" stroke=\"black\"/>\n";

    for (double t : detail::nice_ticks(x_lo, x_hi)) {
        svg += "<line x1=\"" + fmt(px(t)) + "\" y1=\"" + fmt(bottom) + "\" x2=\"" + fmt(px(t)) + "\" y2=\""
               + fmt(bottom + 5) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt(px(t)) + "\" y=\"" + fmt(bottom + 18) + "\" text-anchor=\"middle\">"
               + detail::tick_label(t) + "</text>\n";
    }
    std::vector<double> y_ticks;
    if (options.log_y) {
        for (double e = y_lo; e <= y_hi + 1e-9; e += 1.0) y_ticks.push_back(e);
    } else {
        y_ticks = detail::nice_ticks(y_lo, y_hi);
    }
    for (double t : y_ticks) {
        const std::string label = options.log_y ? "1e" + detail::tick_label(t) : detail::tick_label(t);
        svg += "<line x1=\"" + fmt(left - 5) + "\" y1=\"" + fmt(py(t)) + "\" x2=\"" + fmt(left) + "\" y2=\""
               + fmt(py(t)) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt(left - 8) + "\" y=\"" + fmt(py(t) + 4) + "\" text-anchor=\"end\">" + label
               + "</text>\n";
    }
    if (!options.title.empty()) {
        svg += "<text x=\"" + fmt(0.5 * (left + right)) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
               + detail::escape(options.title) + "</text>\n";
    }
    svg += "<text x=\"" + fmt(0.5 * (left + right)) + "\" y=\"" + fmt(options.height - 16.0)
           + "\" text-anchor=\"middle\">" + detail::escape(options.x_label) + "</text>\n";
    svg += "<text transform=\"translate(18," + fmt(0.5 * (top + bottom)) + ") rotate(-90)\" text-anchor=\"middle\">"
           + detail::escape(options.y_label) + "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const std::string color = s.color.empty() ? detail::palette(k) : s.color;
        std::string path;
        bool pen_down = false;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            const bool valid = std::isfinite(s.x[i]) && std::isfinite(s.y[i]) && !(options.log_y && s.y[i] <= 0.0);
            if (!valid) {
                pen_down = false;
                continue;
            }
            const double y = py(options.log_y ? std::log10(s.y[i]) : s.y[i]);
            if (s.step) {
                const double half_lo = i > 0 ? 0.5 * (s.x[i] - s.x[i - 1]) : (s.x.size() > 1 ? 0.5 * (s.x[1] - s.x[0]) : 0.5);
                const double half_hi = i + 1 < s.x.size() ? 0.5 * (s.x[i + 1] - s.x[i]) : half_lo;
                path += (pen_down ? "L" : "M") + fmt(px(s.x[i] - half_lo)) + "," + fmt(y);
                path += "L" + fmt(px(s.x[i] + half_hi)) + "," + fmt(y);
            } else {
                path += (pen_down ? "L" : "M") + fmt(px(s.x[i])) + "," + fmt(y);
            }
            pen_down = true;
        }
        if (!path.empty()) {
            svg += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
        }
        if (!s.label.empty()) {
            const double ly = top + 16.0 + 16.0 * static_cast<double>(k);
            svg += "<line x1=\"" + fmt(right - 150) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" + fmt(right - 130)
                   + "\" y2=\"" + fmt(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
            svg += "<text x=\"" + fmt(right - 125) + "\" y=\"" + fmt(ly) + "\">" + detail::escape(s.label)
                   + "</text>\n";
        }
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace biphoton::plot
