#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace biov {

/// Mann-Whitney AUC: P(score+ > score-) + 0.5 P(tie), via average ranks.
/// Needs at least one label of each class.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct ThresholdChoice {
  double tau = 0.0;  // predict positive when score >= tau; may be +-infinity
  double youden_j = 0.0;
  double accuracy = 0.0;
};

/// Maximizes Youden's J over -inf, +inf and the midpoints between adjacent
/// distinct scores. Ties go to higher accuracy, then to the smaller tau.
ThresholdChoice select_threshold(const std::vector<double>& scores, const std::vector<int>& labels);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;  // 1.0 when nothing is predicted positive
  double recall = 0.0;     // 1.0 when there are no positive labels
  Confusion confusion;
};

ClassificationMetrics classification_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                                             double tau);

/// One evaluated pair. score = -distance.
struct ScoredPair {
  std::string a_path;
  std::string b_path;
  int label = 0;
  double distance = 0.0;
  double score = 0.0;

  friend bool operator==(const ScoredPair&, const ScoredPair&) = default;
};

struct EvalReport {
  std::string task;
  std::string backbone;
  double roc_auc = 0.0;
  double threshold_score = 0.0;     // tau on the score scale, chosen on validation pairs
  double threshold_distance = 0.0;  // same threshold as a distance: same subject when d <= this
  double val_roc_auc = 0.0;
  double val_youden_j = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  Confusion confusion;
  std::vector<ScoredPair> pairs;  // test pairs

  friend bool operator==(const EvalReport& a, const EvalReport& b);
};

/// Test-set metrics at a threshold chosen elsewhere (validation).
EvalReport make_report(std::string task, std::string backbone, std::vector<ScoredPair> test_pairs,
                       const ThresholdChoice& val_threshold, double val_auc);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text, const std::string& source = "<report>");

/// CSV with header a_path,b_path,label,distance,score.
std::string scores_to_csv(const std::vector<ScoredPair>& pairs);

}  // namespace biov
