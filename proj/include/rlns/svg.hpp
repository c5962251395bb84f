#pragma once

#include <span>
#include <string>
#include <vector>

namespace rlns {

struct Series {
  std::string name;
  std::vector<double> ys;
};

// Deterministic fixed-size line chart; x values shared across series.
std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           std::span<const double> xs, const std::vector<Series>& series);

std::string svg_scatter(const std::string& title, const std::string& x_label, const std::string& y_label,
                        std::span<const double> xs, std::span<const double> ys);

}  // namespace rlns
