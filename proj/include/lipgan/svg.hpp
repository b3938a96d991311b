#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lipgan/errors.hpp"
#include "lipgan/metrics.hpp"

namespace lipgan::svg {

// Fixed viewport used by every plot: data area between the margins.
constexpr double kWidth = 640.0, kHeight = 420.0;
constexpr double kLeft = 60.0, kRight = 620.0, kTop = 20.0, kBottom = 380.0;

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct AxisMap {
    double lo = 0.0, hi = 1.0, px0 = 0.0, px1 = 1.0;
    double map(double v) const {
        double range = hi - lo;
        if (range == 0.0) range = 1.0;
        return px0 + (v - lo) / range * (px1 - px0);
    }
};

namespace detail {

inline void open_doc(std::ostringstream& os) {
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
       << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
}

inline void axes(std::ostringstream& os, const std::string& x_label, const std::string& y_label) {
    os << "<g stroke=\"black\" stroke-width=\"1\">\n"
       << "<line x1=\"" << kLeft << "\" y1=\"" << kBottom << "\" x2=\"" << kRight << "\" y2=\"" << kBottom
       << "\"/>\n"
       << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kBottom
       << "\"/>\n</g>\n"
       << "<text x=\"" << 0.5 * (kLeft + kRight) << "\" y=\"" << kBottom + 30 << "\" font-size=\"12\" "
       << "text-anchor=\"middle\">" << x_label << "</text>\n"
       << "<text x=\"15\" y=\"" << 0.5 * (kTop + kBottom)
       << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 " << 0.5 * (kTop + kBottom)
       << ")\">" << y_label << "</text>\n";
}

inline void close_doc(std::ostringstream& os) { os << "</svg>\n"; }

}  // namespace detail

// Interval band over iterations: the per-iteration domain as a filled
// polygon, plus its midline. Renders a degenerate min==max band as a line.
inline std::string omega_band_svg(const DomainTrace& trace) {
    std::ostringstream os;
    detail::open_doc(os);
    detail::axes(os, "iteration", "omega");
    if (!trace.empty()) {
        double ylo = trace.records.front().omega[0], yhi = trace.records.front().omega[1];
        for (const IterRecord& r : trace.records) {
            ylo = std::min(ylo, r.omega[0]);
            yhi = std::max(yhi, r.omega[1]);
        }
        if (ylo == yhi) {
            ylo -= 0.5;
            yhi += 0.5;
        }
        AxisMap xm{static_cast<double>(trace.records.front().iter),
                   static_cast<double>(trace.records.back().iter), kLeft, kRight};
        AxisMap ym{ylo, yhi, kBottom, kTop};
        std::ostringstream poly;
        for (const IterRecord& r : trace.records)
            poly << fmt(xm.map(static_cast<double>(r.iter))) << "," << fmt(ym.map(r.omega[1])) << " ";
        for (auto it = trace.records.rbegin(); it != trace.records.rend(); ++it)
            poly << fmt(xm.map(static_cast<double>(it->iter))) << "," << fmt(ym.map(it->omega[0])) << " ";
        os << "<polygon points=\"" << poly.str() << "\" fill=\"#9ecae1\" stroke=\"#3182bd\" "
           << "stroke-width=\"0.5\" fill-opacity=\"0.7\"/>\n";
        std::ostringstream mid;
        for (const IterRecord& r : trace.records)
            mid << fmt(xm.map(static_cast<double>(r.iter))) << ","
                << fmt(ym.map(0.5 * (r.omega[0] + r.omega[1]))) << " ";
        os << "<polyline points=\"" << mid.str() << "\" fill=\"none\" stroke=\"#08306b\" stroke-width=\"1\"/>\n";
    }
    detail::close_doc(os);
    return os.str();
}

struct LogSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;  // (x > 0, y)
};

// Pixel vertices a log-x line plot will use; exposed so coordinate
// arithmetic is directly checkable.
inline std::vector<std::pair<double, double>> log_x_vertices(const LogSeries& series, double x_lo, double x_hi,
                                                             double y_lo, double y_hi) {
    AxisMap xm{std::log10(x_lo), std::log10(x_hi), kLeft, kRight};
    AxisMap ym{y_lo, y_hi, kBottom, kTop};
    std::vector<std::pair<double, double>> px;
    for (auto [x, y] : series.points) px.emplace_back(xm.map(std::log10(x)), ym.map(y));
    return px;
}

inline std::string line_plot_log_x_svg(const std::vector<LogSeries>& series, const std::string& x_label,
                                       const std::string& y_label) {
    std::ostringstream os;
    detail::open_doc(os);
    detail::axes(os, x_label, y_label);
    double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
    bool any = false;
    for (const LogSeries& s : series)
        for (auto [x, y] : s.points) {
            if (!(x > 0.0)) throw UsageError("log-x plot needs positive x values");
            if (!any) {
                x_lo = x_hi = x;
                y_lo = y_hi = y;
                any = true;
            } else {
                x_lo = std::min(x_lo, x);
                x_hi = std::max(x_hi, x);
                y_lo = std::min(y_lo, y);
                y_hi = std::max(y_hi, y);
            }
        }
    if (any) {
        if (x_lo == x_hi) x_hi = x_lo * 10.0;
        if (y_lo == y_hi) y_hi = y_lo + 1.0;
        const char* palette[] = {"#3378b5", "#f67e00", "#40a020", "#cd2321", "#9166bf", "#555555"};
        int color = 0;
        for (const LogSeries& s : series) {
            auto verts = log_x_vertices(s, x_lo, x_hi, y_lo, y_hi);
            std::ostringstream pts;
            for (auto [x, y] : verts) pts << fmt(x) << "," << fmt(y) << " ";
            os << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\""
               << palette[color % 6] << "\" stroke-width=\"1.5\"/>\n";
            for (auto [x, y] : verts)
                os << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(y) << "\" r=\"2.5\" fill=\""
                   << palette[color % 6] << "\"/>\n";
            os << "<text x=\"" << kRight - 90 << "\" y=\"" << kTop + 14 + 14 * color
               << "\" font-size=\"11\" fill=\"" << palette[color % 6] << "\">" << s.label << "</text>\n";
            ++color;
        }
    }
    detail::close_doc(os);
    return os.str();
}

// Generated points over real points, equal-aspect square viewport.
inline std::string scatter_svg(const std::vector<std::pair<double, double>>& real_pts,
                               const std::vector<std::pair<double, double>>& fake_pts) {
    std::ostringstream os;
    detail::open_doc(os);
    detail::axes(os, "x", "y");
    double lim = 1e-9;
    for (const auto* pts : {&real_pts, &fake_pts})
        for (auto [x, y] : *pts) lim = std::max({lim, std::abs(x), std::abs(y)});
    lim *= 1.05;
    const double side = std::min(kRight - kLeft, kBottom - kTop);
    AxisMap xm{-lim, lim, kLeft, kLeft + side};
    AxisMap ym{-lim, lim, kTop + side, kTop};
    for (auto [x, y] : real_pts)
        os << "<circle cx=\"" << fmt(xm.map(x)) << "\" cy=\"" << fmt(ym.map(y))
           << "\" r=\"1.5\" fill=\"black\"/>\n";
    for (auto [x, y] : fake_pts)
        os << "<circle cx=\"" << fmt(xm.map(x)) << "\" cy=\"" << fmt(ym.map(y))
           << "\" r=\"1.5\" fill=\"#f67e00\" fill-opacity=\"0.8\"/>\n";
    detail::close_doc(os);
    return os.str();
}

}  // namespace lipgan::svg
