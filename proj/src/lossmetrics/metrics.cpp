#include "biov/lossmetrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "biov/core/errors.hpp"

namespace biov {

using ojson = nlohmann::ordered_json;

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels, const char* what,
                  bool need_both_classes) {
  if (scores.empty()) throw InvalidArgument(std::string(what) + ": empty input");
  if (scores.size() != labels.size()) throw InvalidArgument(std::string(what) + ": scores and labels differ in length");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw NumericalError(what, "NaN score at index " + std::to_string(i));
    if (labels[i] != 0 && labels[i] != 1) throw InvalidArgument(std::string(what) + ": labels must be 0 or 1");
    pos += static_cast<std::size_t>(labels[i]);
  }
  if (need_both_classes && (pos == 0 || pos == scores.size())) {
    throw InvalidArgument(std::string(what) + ": needs both positive and negative labels");
  }
}

std::vector<std::size_t> sorted_order(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels, "roc_auc", true);
  const auto order = sorted_order(scores);
  double rank_sum = 0.0;  // sum of (1-based, tie-averaged) ranks of positives
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const double p = static_cast<double>(n_pos);
  const double n = static_cast<double>(scores.size() - n_pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

ThresholdChoice select_threshold(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels, "select_threshold", true);
  const auto order = sorted_order(scores);
  const std::size_t total = scores.size();
  std::size_t P = 0;
  for (int y : labels) P += static_cast<std::size_t>(y);
  const std::size_t N = total - P;

  // Sweep tau downward from +inf. Above the k-th distinct value (from the
  // top) everything strictly higher is predicted positive.
  struct Candidate {
    double tau;
    std::size_t tp, fp;
  };
  std::vector<Candidate> cands;
  cands.push_back({std::numeric_limits<double>::infinity(), 0, 0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t hi = total; hi > 0;) {
    std::size_t lo = hi;
    const double v = scores[order[hi - 1]];
    while (lo > 0 && scores[order[lo - 1]] == v) --lo;
    for (std::size_t k = lo; k < hi; ++k) (labels[order[k]] == 1 ? tp : fp)++;
    const double tau = lo > 0 ? (scores[order[lo - 1]] + v) / 2.0 : -std::numeric_limits<double>::infinity();
    cands.push_back({tau, tp, fp});
    hi = lo;
  }

  // J * P * N = tp*N - fp*P and correct = tp + (N - fp) compare exactly.
  auto j_key = [&](const Candidate& c) {
    return static_cast<long double>(c.tp) * N - static_cast<long double>(c.fp) * P;
  };
  const Candidate* best = &cands.front();
  for (const auto& c : cands) {
    const long double jc = j_key(c), jb = j_key(*best);
    const std::size_t acc_c = c.tp + (N - c.fp), acc_b = best->tp + (N - best->fp);
    if (jc > jb || (jc == jb && (acc_c > acc_b || (acc_c == acc_b && c.tau < best->tau)))) best = &c;
  }
  ThresholdChoice out;
  out.tau = best->tau;
  out.youden_j = static_cast<double>(best->tp) / static_cast<double>(P) -
                 static_cast<double>(best->fp) / static_cast<double>(N);
  out.accuracy = static_cast<double>(best->tp + (N - best->fp)) / static_cast<double>(total);
  return out;
}

ClassificationMetrics classification_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                                             double tau) {
  check_inputs(scores, labels, "classification_metrics", false);
  if (std::isnan(tau)) throw InvalidArgument("classification_metrics: threshold is NaN");
  ClassificationMetrics m;
  auto& c = m.confusion;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= tau;
    if (labels[i] == 1) {
      (pred ? c.tp : c.fn)++;
    } else {
      (pred ? c.fp : c.tn)++;
    }
  }
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(scores.size());
  m.precision = c.tp + c.fp == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  m.recall = c.tp + c.fn == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return m;
}

bool operator==(const EvalReport& a, const EvalReport& b) { return report_to_json(a) == report_to_json(b); }

EvalReport make_report(std::string task, std::string backbone, std::vector<ScoredPair> test_pairs,
                       const ThresholdChoice& val_threshold, double val_auc) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& p : test_pairs) {
    scores.push_back(p.score);
    labels.push_back(p.label);
  }
  EvalReport r;
  r.task = std::move(task);
  r.backbone = std::move(backbone);
  r.roc_auc = roc_auc(scores, labels);
  r.threshold_score = val_threshold.tau;
  r.threshold_distance = -val_threshold.tau;
  r.val_roc_auc = val_auc;
  r.val_youden_j = val_threshold.youden_j;
  const auto m = classification_metrics(scores, labels, val_threshold.tau);
  r.accuracy = m.accuracy;
  r.precision = m.precision;
  r.recall = m.recall;
  r.confusion = m.confusion;
  r.pairs = std::move(test_pairs);
  return r;
}

namespace {

// JSON has no infinities; thresholds at +-inf are written as strings.
ojson number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double read_number_or_inf(const ojson& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw InvalidArgument("bad number '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  ojson j;
  j["task"] = r.task;
  j["backbone"] = r.backbone;
  j["roc_auc"] = r.roc_auc;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["threshold_score"] = number_or_inf(r.threshold_score);
  j["threshold_distance"] = number_or_inf(r.threshold_distance);
  j["threshold_source"] = "val";
  j["val_roc_auc"] = r.val_roc_auc;
  j["val_youden_j"] = r.val_youden_j;
  j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}};
  ojson pairs = ojson::array();
  for (const auto& p : r.pairs) {
    pairs.push_back({{"a_path", p.a_path}, {"b_path", p.b_path}, {"label", p.label}, {"distance", p.distance},
                     {"score", p.score}});
  }
  j["pairs"] = std::move(pairs);
  return j.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text, const std::string& source) {
  try {
    const auto j = ojson::parse(text);
    EvalReport r;
    r.task = j.at("task").get<std::string>();
    r.backbone = j.at("backbone").get<std::string>();
    r.roc_auc = j.at("roc_auc").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.threshold_score = read_number_or_inf(j.at("threshold_score"));
    r.threshold_distance = read_number_or_inf(j.at("threshold_distance"));
    r.val_roc_auc = j.at("val_roc_auc").get<double>();
    r.val_youden_j = j.at("val_youden_j").get<double>();
    const auto& c = j.at("confusion");
    r.confusion = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("tn").get<std::size_t>(),
                   c.at("fn").get<std::size_t>()};
    for (const auto& p : j.at("pairs")) {
      r.pairs.push_back({p.at("a_path").get<std::string>(), p.at("b_path").get<std::string>(), p.at("label").get<int>(),
                         p.at("distance").get<double>(), p.at("score").get<double>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 0, e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(source, 0, e.what());
  }
}

std::string scores_to_csv(const std::vector<ScoredPair>& pairs) {
  std::string out = "a_path,b_path,label,distance,score\n";
  char buf[64];
  for (const auto& p : pairs) {
    out += p.a_path;
    out += ',';
    out += p.b_path;
    out += ',';
    out += std::to_string(p.label);
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", p.distance, p.score);
    out += buf;
  }
  return out;
}

}  // namespace biov
