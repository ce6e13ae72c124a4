#pragma once

#include <string>
#include <vector>

#include "vtagent/grpo.hpp"
#include "vtagent/metrics.hpp"
#include "vtagent/oracle.hpp"

namespace vtagent {

struct SystemReports {
  std::string name;
  std::vector<MetricReport> reports;  // as produced by aggregate_by_split
};

// Table-1 layout: one row per split, ACC./ANLS per system, and a delta column
// pair for every system after the first (relative to the first).
std::string format_comparison_table(const std::vector<SystemReports>& systems);
std::string format_comparison_csv(const std::vector<SystemReports>& systems);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal standalone SVG charts.
std::string svg_line_plot(const std::string& title, const std::vector<Series>& series,
                          const std::string& x_label, const std::string& y_label);

struct BarGroup {
  std::string label;
  std::vector<std::pair<std::string, double>> bars;  // (series name, value)
};
std::string svg_bar_chart(const std::string& title, const std::vector<BarGroup>& groups,
                          const std::string& y_label);

std::string svg_learning_curve(const grpo::LearningCurve& curve);

}  // namespace vtagent
