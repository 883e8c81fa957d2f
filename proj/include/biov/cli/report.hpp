#pragma once

#include <string>
#include <vector>

#include "biov/lossmetrics/metrics.hpp"

namespace biov {

struct ChartSeries {
  std::string label;
  double value = 0.0;
};

/// Vertical bar chart, values in [0, 1], one bar per series entry.
std::string bar_chart_svg(const std::string& title, const std::vector<ChartSeries>& bars);

/// Line chart of one or more curves over epochs; y range fitted to the data.
std::string line_chart_svg(const std::string& title, const std::vector<std::string>& names,
                           const std::vector<std::vector<double>>& curves);

/// The metrics charted per run, in order: roc_auc, accuracy, precision, recall.
const std::vector<std::string>& report_metric_names();
double report_metric(const EvalReport& report, const std::string& name);

}  // namespace biov
