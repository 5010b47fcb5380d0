#include "codelid/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "codelid/error.hpp"

namespace codelid {

std::uint64_t ConfusionMatrix::row_sum(std::size_t actual) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < k; ++p) s += at(actual, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t predicted) const {
  std::uint64_t s = 0;
  for (std::size_t a = 0; a < k; ++a) s += at(a, predicted);
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t c = 0; c < k; ++c) s += at(c, c);
  return s;
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> golds, std::size_t k) {
  if (preds.size() != golds.size()) {
    throw std::invalid_argument("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                                std::to_string(golds.size()) + " gold labels");
  }
  ConfusionMatrix m(k);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= k || golds[i] >= k) throw std::out_of_range("confusion: class id out of range at " + std::to_string(i));
    ++m.at(golds[i], preds[i]);
  }
  return m;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::vector<ClassMetrics> per_class(const ConfusionMatrix& m) {
  std::vector<ClassMetrics> out(m.k);
  for (std::size_t c = 0; c < m.k; ++c) {
    const std::uint64_t tp = m.at(c, c);
    const std::uint64_t predicted = m.col_sum(c);
    const std::uint64_t actual = m.row_sum(c);
    auto& r = out[c];
    r.precision = ratio(tp, predicted);
    r.recall = ratio(tp, actual);
    // 2PR/(P+R) reduces to 2TP/(predicted+actual) in exact arithmetic.
    r.f1 = ratio(2 * tp, predicted + actual);
    r.support = actual;
  }
  return out;
}

Aggregate aggregate(const std::vector<ClassMetrics>& metrics, const ConfusionMatrix& m, Averaging mode) {
  if (m.k == 0 || m.total() == 0) throw std::invalid_argument("aggregate: empty confusion matrix");
  if (metrics.size() != m.k) throw std::invalid_argument("aggregate: metrics do not match matrix size");
  Aggregate a;
  a.accuracy = ratio(m.trace(), m.total());
  double wsum = 0.0;
  for (const auto& c : metrics) {
    const double w = mode == Averaging::macro ? 1.0 : static_cast<double>(c.support);
    a.precision += w * c.precision;
    a.recall += w * c.recall;
    a.f1 += w * c.f1;
    wsum += w;
  }
  a.precision /= wsum;
  a.recall /= wsum;
  a.f1 /= wsum;
  return a;
}

std::vector<Confusion> confusability(const ConfusionMatrix& m, std::size_t top_n) {
  std::vector<Confusion> cells;
  for (std::size_t a = 0; a < m.k; ++a) {
    const std::uint64_t row = m.row_sum(a);
    for (std::size_t p = 0; p < m.k; ++p) {
      if (a == p || m.at(a, p) == 0) continue;
      cells.push_back({a, p, ratio(m.at(a, p), row), m.at(a, p)});
    }
  }
  std::stable_sort(cells.begin(), cells.end(), [](const Confusion& x, const Confusion& y) {
    if (x.rate != y.rate) return x.rate > y.rate;
    return x.count > y.count;
  });
  if (cells.size() > top_n) cells.resize(top_n);
  return cells;
}

std::string percent3(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", value * 100.0);
  return buf;
}

EvalReport make_report(const ConfusionMatrix& matrix, const LabelSet& labels, std::size_t top_n) {
  if (labels.size() != matrix.k) throw std::invalid_argument("report: label count does not match matrix");
  EvalReport r{labels, matrix, per_class(matrix), {}, {}, confusability(matrix, top_n)};
  r.macro = aggregate(r.per_class, matrix, Averaging::macro);
  r.weighted = aggregate(r.per_class, matrix, Averaging::weighted);
  return r;
}

nlohmann::ordered_json EvalReport::to_json() const {
  using nlohmann::ordered_json;
  auto agg = [](const Aggregate& a) {
    return ordered_json{{"accuracy", a.accuracy}, {"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
  };
  ordered_json classes = ordered_json::array();
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const auto& m = per_class[c];
    classes.push_back({{"label", labels.name(c)},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support}});
  }
  ordered_json rows = ordered_json::array();
  for (std::size_t a = 0; a < matrix.k; ++a) {
    std::vector<std::uint64_t> row(matrix.counts.begin() + a * matrix.k, matrix.counts.begin() + (a + 1) * matrix.k);
    rows.push_back(row);
  }
  ordered_json conf = ordered_json::array();
  for (const auto& c : confusability) {
    conf.push_back({{"actual", labels.name(c.actual)},
                    {"predicted", labels.name(c.predicted)},
                    {"rate", c.rate},
                    {"count", c.count}});
  }
  return ordered_json{{"labels", labels.names()},
                      {"total", matrix.total()},
                      {"macro", agg(macro)},
                      {"weighted", agg(weighted)},
                      {"per_class", std::move(classes)},
                      {"confusion_matrix", std::move(rows)},
                      {"confusability", std::move(conf)}};
}

std::string EvalReport::to_table(Averaging mode) const {
  std::size_t width = 8;
  for (const auto& n : labels.names()) width = std::max(width, n.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %10s %10s %10s %10s\n", static_cast<int>(width), "Language", "Precision",
                "Recall", "F1", "Support");
  out += buf;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const auto& m = per_class[c];
    std::snprintf(buf, sizeof buf, "%-*s %10.3f %10.3f %10.3f %10llu\n", static_cast<int>(width),
                  labels.name(c).c_str(), m.precision, m.recall, m.f1, static_cast<unsigned long long>(m.support));
    out += buf;
  }
  const Aggregate& a = mode == Averaging::macro ? macro : weighted;
  out += "\n";
  std::snprintf(buf, sizeof buf, "%-12s %12s %12s %12s %12s\n", "Averaging", "Accuracy(%)", "Precision(%)",
                "Recall(%)", "F1(%)");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-12s %12s %12s %12s %12s\n", mode == Averaging::macro ? "macro" : "weighted",
                percent3(a.accuracy).c_str(), percent3(a.precision).c_str(), percent3(a.recall).c_str(),
                percent3(a.f1).c_str());
  out += buf;
  if (!confusability.empty()) {
    out += "\nMost confused (actual -> predicted)\n";
    for (const auto& c : confusability) {
      std::snprintf(buf, sizeof buf, "  %s -> %s: %s%% (%llu)\n", labels.name(c.actual).c_str(),
                    labels.name(c.predicted).c_str(), percent3(c.rate).c_str(),
                    static_cast<unsigned long long>(c.count));
      out += buf;
    }
  }
  return out;
}

namespace {

std::vector<std::size_t> gold_ids(const LabelSet& model_labels, const Corpus& test) {
  std::vector<std::size_t> golds;
  golds.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto id = model_labels.id(test.snippets[i].label);
    if (!id) throw DataError("test label '" + test.snippets[i].label + "' is unknown to the model");
    golds.push_back(*id);
  }
  return golds;
}

void check_pred(std::size_t pred, std::size_t index, std::size_t k) {
  if (pred >= k) throw DataError("prediction for snippet " + std::to_string(index) + " is out of range");
}

}  // namespace

EvalReport evaluate_model(const PredictFn& predict, const LabelSet& model_labels, const Corpus& test,
                          std::size_t top_n) {
  const auto golds = gold_ids(model_labels, test);
  std::vector<std::size_t> preds;
  preds.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    try {
      preds.push_back(predict(test.snippets[i].text));
    } catch (const std::exception& e) {
      throw DataError("prediction failed on snippet " + std::to_string(i) + ": " + e.what());
    }
    check_pred(preds.back(), i, model_labels.size());
  }
  return make_report(confusion(preds, golds, model_labels.size()), model_labels, top_n);
}

EvalReport evaluate_batch(const PredictAllFn& predict_all, const LabelSet& model_labels, const Corpus& test,
                          std::size_t top_n) {
  const auto golds = gold_ids(model_labels, test);
  std::vector<std::string> texts;
  texts.reserve(test.size());
  for (const auto& s : test.snippets) texts.push_back(s.text);
  auto preds = predict_all(texts);
  if (preds.size() != texts.size()) throw DataError("batch prediction returned the wrong number of labels");
  for (std::size_t i = 0; i < preds.size(); ++i) check_pred(preds[i], i, model_labels.size());
  return make_report(confusion(preds, golds, model_labels.size()), model_labels, top_n);
}

}  // namespace codelid
