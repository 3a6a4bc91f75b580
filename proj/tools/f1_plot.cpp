#include "f1_plot.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace plab::cli {
namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string num4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string escape_xml(const std::string& s) {
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

std::string render_f1_plot_svg(const MetricsReport& report) {
    const std::size_t n = report.per_class.size();
    const double bar_w = 26.0;
    const double gap = 10.0;
    const double left = 56.0;
    const double top = 24.0;
    const double plot_h = 220.0;
    const double label_h = 96.0;
    const double width = left + static_cast<double>(n) * (bar_w + gap) + 24.0;
    const double height = top + plot_h + label_h;

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
           num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"" + num(width) + "\" height=\"" + num(height) +
           "\" fill=\"white\"/>\n";

    // y axis with quarter gridlines
    for (int k = 0; k <= 4; ++k) {
        const double frac = 0.25 * k;
        const double y = top + plot_h * (1.0 - frac);
        svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(y) + "\" x2=\"" +
               num(width - 16.0) + "\" y2=\"" + num(y) +
               "\" stroke=\"#d8d8d8\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + num(left - 8.0) + "\" y=\"" + num(y + 4.0) +
               "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" + num(frac) +
               "</text>\n";
    }

    for (std::size_t i = 0; i < n; ++i) {
        const double f1 = report.per_class[i].f1;
        const double x = left + static_cast<double>(i) * (bar_w + gap) + gap / 2.0;
        const double bh = plot_h * f1;
        const double y = top + plot_h - bh;
        svg += "<rect class=\"bar\" x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" +
               num(bar_w) + "\" height=\"" + num(bh) + "\" fill=\"#4878a8\"/>\n";
        const double cx = x + bar_w / 2.0;
        const double ly = top + plot_h + 12.0;
        svg += "<text class=\"bar-label\" x=\"" + num(cx) + "\" y=\"" + num(ly) +
               "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\" transform=\"rotate(-45 " +
               num(cx) + " " + num(ly) + ")\">" + escape_xml(report.class_names[i]) + "</text>\n";
    }

    const double macro_y = top + plot_h * (1.0 - report.macro_f1);
    svg += "<line class=\"macro\" x1=\"" + num(left) + "\" y1=\"" + num(macro_y) + "\" x2=\"" +
           num(width - 16.0) + "\" y2=\"" + num(macro_y) +
           "\" stroke=\"#c03028\" stroke-width=\"1.5\" stroke-dasharray=\"6 3\"/>\n";
    svg += "<text x=\"" + num(width - 16.0) + "\" y=\"" + num(macro_y - 5.0) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\" fill=\"#c03028\">macro F1 = " +
           num4(report.macro_f1) + "</text>\n";
    svg += "</svg>\n";
    return svg;
}

void emit_f1_plot(const MetricsReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write plot: " + path.string());
    out << render_f1_plot_svg(report);
}

}  // namespace plab::cli
