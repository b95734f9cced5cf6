#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace artuda::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal line-plot writer: axes, ticks, one polyline with point markers per
/// series, legend. Everything is deterministic text output.
void write_line_plot(const std::filesystem::path& path,
                     const std::string& title, const std::string& x_label,
                     const std::string& y_label,
                     const std::vector<Series>& series);

}  // namespace artuda::svg
