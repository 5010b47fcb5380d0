#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "codelid/corpus.hpp"

namespace codelid {

// Multinomial Naive Bayes over word_tokenize tokens. Each class keeps one
// extra likelihood slot for tokens outside the training vocabulary.
class NaiveBayes {
 public:
  static NaiveBayes fit(const Corpus& train, double alpha = 1.0);
  static NaiveBayes load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::vector<double> log_posterior(std::string_view text) const;
  std::vector<double> posterior(std::string_view text) const;
  std::size_t predict(std::string_view text) const;

  double alpha() const { return alpha_; }
  const LabelSet& labels() const { return labels_; }
  const std::map<std::string, std::size_t>& vocabulary() const { return vocabulary_; }
  const std::vector<double>& log_prior() const { return log_prior_; }
  // log_likelihood()[c][t]; index vocabulary().size() is the OOV bucket.
  const std::vector<std::vector<double>>& log_likelihood() const { return log_likelihood_; }
  std::size_t oov_index() const { return vocabulary_.size(); }

  bool operator==(const NaiveBayes&) const = default;

 private:
  double alpha_ = 1.0;
  LabelSet labels_;
  std::map<std::string, std::size_t> vocabulary_;
  std::vector<double> log_prior_;
  std::vector<std::vector<double>> log_likelihood_;
};

}  // namespace codelid
