#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "biov/core/errors.hpp"
#include "biov/core/rng.hpp"
#include "biov/lossmetrics/contrastive.hpp"
#include "biov/lossmetrics/metrics.hpp"

using namespace biov;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

double loss_of(const std::vector<double>& a, const std::vector<double>& b, int y, const ContrastiveLossCfg& cfg) {
  return contrastive_loss<double>(a, b, y, cfg).loss;
}

// Central differences on both embeddings; returns the worst relative error.
double fd_check(const std::vector<double>& a, const std::vector<double>& b, int y, const ContrastiveLossCfg& cfg) {
  const auto res = contrastive_loss<double>(a, b, y, cfg);
  const double h = 1e-5;
  double worst = 0.0;
  for (int side = 0; side < 2; ++side) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      auto p = a, q = b;
      auto& t = side == 0 ? p : q;
      const double orig = t[i];
      t[i] = orig + h;
      const double up = side == 0 ? loss_of(p, b, y, cfg) : loss_of(a, q, y, cfg);
      t[i] = orig - h;
      const double dn = side == 0 ? loss_of(p, b, y, cfg) : loss_of(a, q, y, cfg);
      const double num = (up - dn) / (2 * h);
      const double ana = side == 0 ? res.grad_e1[i] : res.grad_e2[i];
      worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-8}));
    }
  }
  return worst;
}

double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, total = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      total += 1;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / total;
}

// Exhaustive sweep with the documented rule, written independently.
ThresholdChoice brute_threshold(const std::vector<double>& s, const std::vector<int>& y) {
  std::set<double> distinct(s.begin(), s.end());
  std::vector<double> sorted(distinct.begin(), distinct.end());
  std::vector<double> cands{-kInf, kInf};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) cands.push_back((sorted[i] + sorted[i + 1]) / 2);
  double P = 0, N = 0;
  for (int v : y) (v ? P : N) += 1;
  ThresholdChoice best{0, -2, -1};
  for (double t : cands) {
    double tp = 0, fp = 0, tn = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) {
        (y[i] ? tp : fp) += 1;
      } else if (!y[i]) {
        tn += 1;
      }
    }
    const double j = tp / P - fp / N;
    const double acc = (tp + tn) / static_cast<double>(s.size());
    const bool better = j > best.youden_j + 1e-12 ||
                        (std::abs(j - best.youden_j) <= 1e-12 &&
                         (acc > best.accuracy + 1e-12 || (std::abs(acc - best.accuracy) <= 1e-12 && t < best.tau)));
    if (better) best = {t, j, acc};
  }
  return best;
}

}  // namespace

TEST_CASE("contrastive loss hand values") {
  ContrastiveLossCfg cfg;
  const std::vector<double> e{0.3, -0.2, 1.5};
  auto r = contrastive_loss<double>(e, e, 1, cfg);
  CHECK(r.loss == 0.0);
  for (double g : r.grad_e1) CHECK(g == 0.0);
  for (double g : r.grad_e2) CHECK(g == 0.0);

  ContrastiveLossCfg m2{2.0, LabelConvention::standard};
  const std::vector<double> a{0.0, 0.0}, b{0.6, 0.8};  // d = 1
  CHECK(contrastive_loss<double>(a, b, 0, m2).loss == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(contrastive_loss<double>(a, b, 1, m2).loss == doctest::Approx(1.0).epsilon(1e-15));

  const std::vector<double> far{3.0, 4.0};  // d = 5 >= m
  r = contrastive_loss<double>(a, far, 0, m2);
  CHECK(r.loss == 0.0);
  for (double g : r.grad_e1) CHECK(g == 0.0);
  // exactly at the margin: zero gradient by convention
  const std::vector<double> at_m{1.2, 1.6};  // d = 2
  r = contrastive_loss<double>(a, at_m, 0, m2);
  CHECK(r.loss == 0.0);
  for (double g : r.grad_e1) CHECK(g == 0.0);
  // d = 0 with the margin term: loss m^2, gradient defined as zero
  r = contrastive_loss<double>(e, e, 0, m2);
  CHECK(r.loss == doctest::Approx(4.0));
  for (double g : r.grad_e1) CHECK(g == 0.0);

  CHECK_THROWS_AS(contrastive_loss<double>(a, e, 1, cfg), ShapeError);
  CHECK_THROWS_AS(contrastive_loss<double>(a, b, 1, ContrastiveLossCfg{0.0}), InvalidArgument);
  CHECK_THROWS_AS(contrastive_loss<double>(a, b, 2, cfg), InvalidArgument);
}

TEST_CASE("swapped convention swaps the label roles") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const auto a = random_vec(rng, 8, 0.5), b = random_vec(rng, 8, 0.5);
    ContrastiveLossCfg std_cfg{1.3, LabelConvention::standard};
    ContrastiveLossCfg lit{1.3, LabelConvention::swapped};
    for (int y : {0, 1}) {
      const auto s = contrastive_loss<double>(a, b, 1 - y, std_cfg);
      const auto l = contrastive_loss<double>(a, b, y, lit);
      CHECK(s.loss == l.loss);
      CHECK(s.grad_e1 == l.grad_e1);
    }
  }
  CHECK(parse_label_convention("swapped") == LabelConvention::swapped);
  CHECK_THROWS_AS(parse_label_convention("literal"), InvalidArgument);
}

TEST_CASE("contrastive gradients match central differences to 1e-6") {
  Rng rng(123);
  int checked = 0;
  for (int t = 0; t < 200; ++t) {
    const double margin = rng.uniform(0.5, 3.0);
    const auto a = random_vec(rng, 16, rng.uniform(0.05, 0.6));
    const auto b = random_vec(rng, 16, rng.uniform(0.05, 0.6));
    const double d = euclidean_distance<double>(a, b);
    if (std::abs(d - margin) < 1e-3) continue;  // the hinge kink
    for (auto conv : {LabelConvention::standard, LabelConvention::swapped}) {
      for (int y : {0, 1}) {
        CHECK(fd_check(a, b, y, {margin, conv}) < 1e-6);
        ++checked;
      }
    }
  }
  CHECK(checked > 700);
}

TEST_CASE("contrastive loss properties: non-negative, symmetric, zero sets") {
  Rng rng(9);
  ContrastiveLossCfg cfg;
  for (int t = 0; t < 500; ++t) {
    const auto a = random_vec(rng, 6, 0.7), b = random_vec(rng, 6, 0.7);
    for (int y : {0, 1}) {
      const double l1 = loss_of(a, b, y, cfg), l2 = loss_of(b, a, y, cfg);
      CHECK(l1 >= 0.0);
      CHECK(l1 == l2);
      const double d = euclidean_distance<double>(a, b);
      if (y == 0) CHECK((l1 == 0.0) == (d >= cfg.margin));
      if (y == 1) CHECK((l1 == 0.0) == (d == 0.0));
    }
  }
}

TEST_CASE("batch loss is the mean of per-pair losses") {
  Rng rng(31);
  Tensor<double> a({5, 4}), b({5, 4});
  for (auto& v : a.values()) v = rng.uniform(-0.5, 0.5);
  for (auto& v : b.values()) v = rng.uniform(-0.5, 0.5);
  const std::vector<int> y{1, 0, 0, 1, 0};
  ContrastiveLossCfg cfg;
  const auto bl = contrastive_batch_loss(a, b, y, cfg);
  double sum = 0;
  for (std::size_t r = 0; r < 5; ++r) {
    const std::vector<double> ra(a.data() + r * 4, a.data() + r * 4 + 4), rb(b.data() + r * 4, b.data() + r * 4 + 4);
    const auto pl = contrastive_loss<double>(ra, rb, y[r], cfg);
    sum += pl.loss;
    CHECK(bl.distances[r] == pl.distance);
    for (std::size_t k = 0; k < 4; ++k) CHECK(bl.grad_a[r * 4 + k] == doctest::Approx(pl.grad_e1[k] / 5.0));
  }
  CHECK(bl.mean_loss == doctest::Approx(sum / 5.0).epsilon(1e-15));
  CHECK_THROWS_AS(contrastive_batch_loss(a, b, std::vector<int>{1, 0}, cfg), ShapeError);
}

TEST_CASE("roc_auc examples and errors") {
  CHECK(roc_auc({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}) == 1.0);
  CHECK(roc_auc({0.1, 0.2, 0.9, 0.8}, {1, 1, 0, 0}) == 0.0);
  CHECK(roc_auc({0.5, 0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0, 0}) == 0.5);
  CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), InvalidArgument);
  CHECK_THROWS_AS(roc_auc({}, {}), InvalidArgument);
  CHECK_THROWS_AS(roc_auc({0.1, std::nan("")}, {1, 0}), NumericalError);
}

TEST_CASE("roc_auc equals the pairwise brute force to 1e-12, with ties") {
  Rng rng(2024);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = t == 0 ? 1000 : 2 + rng.index(300);
    const int levels = 1 + static_cast<int>(rng.index(40));  // few levels -> many ties
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.index(2));
      s[i] = t % 2 ? static_cast<double>(rng.index(levels)) + 0.3 * y[i] : rng.normal() + y[i];
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(std::abs(roc_auc(s, y) - brute_auc(s, y)) < 1e-12);
  }
}

TEST_CASE("roc_auc complement and monotone-transform invariance") {
  Rng rng(77);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 10 + rng.index(200);
    std::vector<double> s(n), neg(n), tr(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.index(2));
      s[i] = static_cast<double>(rng.index(30));
      neg[i] = -s[i];
      tr[i] = std::exp(s[i] / 7.0) + s[i] * s[i] * s[i];
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(std::abs(roc_auc(s, y) + roc_auc(neg, y) - 1.0) < 1e-12);
    CHECK(roc_auc(tr, y) == roc_auc(s, y));
  }
}

TEST_CASE("select_threshold hand cases") {
  auto c = select_threshold({0.9, 0.8, 0.7, 0.4, 0.3, 0.2}, {1, 1, 1, 0, 0, 0});
  CHECK(c.tau == doctest::Approx(0.55).epsilon(1e-15));
  CHECK(c.youden_j == 1.0);
  CHECK(c.accuracy == 1.0);

  c = select_threshold({5.0, 1.0, 2.0, 6.0}, {1, 0, 0, 1});
  CHECK(c.tau == 3.5);

  // Labels unrelated to scores: still deterministic.
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) {
    s.push_back(i * 0.25);
    y.push_back(i % 2);
  }
  const auto a1 = select_threshold(s, y), a2 = select_threshold(s, y);
  CHECK(a1.tau == a2.tau);
  CHECK(std::abs(a1.youden_j) <= 0.1);
  CHECK_THROWS_AS(select_threshold({0.1, 0.3}, {0, 0}), InvalidArgument);
}

TEST_CASE("select_threshold matches an exhaustive sweep on 200 randomized sets") {
  Rng rng(4242);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.index(120);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.index(2));
      s[i] = t % 3 == 0 ? static_cast<double>(rng.index(8)) : rng.normal() + 0.8 * y[i];
    }
    y[0] = 1;
    y[1] = 0;
    const auto fast = select_threshold(s, y);
    const auto slow = brute_threshold(s, y);
    CHECK(fast.tau == slow.tau);
    CHECK(fast.youden_j == doctest::Approx(slow.youden_j).epsilon(1e-12));
    CHECK(fast.accuracy == doctest::Approx(slow.accuracy).epsilon(1e-12));

    // duplicating the dataset changes nothing
    auto s2 = s;
    auto y2 = y;
    s2.insert(s2.end(), s.begin(), s.end());
    y2.insert(y2.end(), y.begin(), y.end());
    CHECK(select_threshold(s2, y2).tau == fast.tau);
  }
}

TEST_CASE("classification metrics") {
  auto m = classification_metrics({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0}, 0.5);
  CHECK(m.accuracy == 1.0);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  m = classification_metrics({0.9, 0.8, 0.3, 0.1, 0.2}, {1, 1, 0, 0, 0}, kInf);
  CHECK(m.recall == 0.0);
  CHECK(m.precision == 1.0);
  CHECK(m.accuracy == doctest::Approx(0.6));
  CHECK_THROWS_AS(classification_metrics({}, {}, 0.0), InvalidArgument);

  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.index(100);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform();
      y[i] = static_cast<int>(rng.index(2));
    }
    const double tau = rng.uniform();
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] && s[i] >= tau) ++tp;
      if (!y[i] && s[i] >= tau) ++fp;
      if (!y[i] && s[i] < tau) ++tn;
      if (y[i] && s[i] < tau) ++fn;
    }
    m = classification_metrics(s, y, tau);
    CHECK(m.confusion.tp == tp);
    CHECK(m.confusion.fn == fn);
    CHECK(m.accuracy == doctest::Approx(double(tp + tn) / n));
    CHECK(m.precision == doctest::Approx(tp + fp ? double(tp) / (tp + fp) : 1.0));
    CHECK(m.recall == doctest::Approx(tp + fn ? double(tp) / (tp + fn) : 1.0));
  }
}

TEST_CASE("eval report: recomputable from stored scores, JSON round trip, CSV") {
  Rng rng(3);
  std::vector<ScoredPair> pairs;
  for (int i = 0; i < 60; ++i) {
    const int y = i % 2;
    const double d = std::abs(rng.normal() * 0.3 + (y ? 0.2 : 0.9));
    pairs.push_back({"a" + std::to_string(i), "b" + std::to_string(i), y, d, -d});
  }
  const ThresholdChoice val{-0.55, 0.8, 0.9};
  const auto r = make_report("iris-iris", "smallcnn", pairs, val, 0.93);
  CHECK(r.threshold_distance == 0.55);
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& p : r.pairs) {
    s.push_back(p.score);
    y.push_back(p.label);
  }
  CHECK(r.roc_auc == roc_auc(s, y));
  CHECK(r.accuracy == classification_metrics(s, y, r.threshold_score).accuracy);
  const auto back = report_from_json(report_to_json(r));
  CHECK(back == r);
  CHECK(back.pairs == r.pairs);
  const auto inf_report = make_report("fp-fp", "tinyvit", pairs, ThresholdChoice{kInf, 0, 0.5}, 0.5);
  CHECK(report_from_json(report_to_json(inf_report)).threshold_score == kInf);
  const auto csv = scores_to_csv(pairs);
  CHECK(csv.rfind("a_path,b_path,label,distance,score\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 61);
  CHECK_THROWS_AS(report_from_json("{\"task\": 1}"), ParseError);
}
