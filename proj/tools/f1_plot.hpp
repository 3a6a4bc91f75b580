#pragma once

#include <filesystem>
#include <string>

#include "plab/metrics.hpp"

namespace plab::cli {

// Self-contained SVG bar chart of per-class F1 with a macro-F1 reference
// line. Byte-deterministic for a given report.
std::string render_f1_plot_svg(const MetricsReport& report);

void emit_f1_plot(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace plab::cli
