#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "codelid/corpus.hpp"

namespace codelid {

// Rows are actual classes, columns predicted.
struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(std::size_t classes = 0) : k(classes), counts(classes * classes, 0) {}
  std::uint64_t& at(std::size_t actual, std::size_t predicted) { return counts[actual * k + predicted]; }
  std::uint64_t at(std::size_t actual, std::size_t predicted) const { return counts[actual * k + predicted]; }
  std::uint64_t row_sum(std::size_t actual) const;
  std::uint64_t col_sum(std::size_t predicted) const;
  std::uint64_t trace() const;
  std::uint64_t total() const;
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> golds, std::size_t k);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

std::vector<ClassMetrics> per_class(const ConfusionMatrix& matrix);

enum class Averaging { macro, weighted };

struct Aggregate {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Aggregate aggregate(const std::vector<ClassMetrics>& metrics, const ConfusionMatrix& matrix,
                    Averaging mode = Averaging::macro);

struct Confusion {
  std::size_t actual = 0;
  std::size_t predicted = 0;
  double rate = 0.0;
  std::uint64_t count = 0;
};

std::vector<Confusion> confusability(const ConfusionMatrix& matrix, std::size_t top_n);

struct EvalReport {
  LabelSet labels;
  ConfusionMatrix matrix;
  std::vector<ClassMetrics> per_class;
  Aggregate macro;
  Aggregate weighted;
  std::vector<Confusion> confusability;

  nlohmann::ordered_json to_json() const;
  // Per-class table (Precision, Recall, F1, Support) and a percent summary line.
  std::string to_table(Averaging mode = Averaging::macro) const;
};

// 0.87202 -> "87.202"
std::string percent3(double value);

EvalReport make_report(const ConfusionMatrix& matrix, const LabelSet& labels, std::size_t top_n = 10);

using PredictFn = std::function<std::size_t(std::string_view)>;
using PredictAllFn = std::function<std::vector<std::size_t>(std::span<const std::string>)>;

// The matrix uses the model's label order; every test label must be known to the model.
EvalReport evaluate_model(const PredictFn& predict, const LabelSet& model_labels, const Corpus& test,
                          std::size_t top_n = 10);
EvalReport evaluate_batch(const PredictAllFn& predict_all, const LabelSet& model_labels, const Corpus& test,
                          std::size_t top_n = 10);

}  // namespace codelid
