#include "codelid/naive_bayes.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "codelid/bpe.hpp"
#include "codelid/error.hpp"
#include "codelid/json_io.hpp"
#include "codelid/text.hpp"

namespace codelid {

NaiveBayes NaiveBayes::fit(const Corpus& train, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be positive");
  if (train.size() == 0) throw std::invalid_argument("training corpus is empty");

  NaiveBayes nb;
  nb.alpha_ = alpha;
  nb.labels_ = train.labels;
  const std::size_t k = train.labels.size();
  const auto ids = train.label_ids();

  std::vector<std::vector<std::string>> docs;
  docs.reserve(train.size());
  for (const auto& s : train.snippets) {
    docs.push_back(word_tokenize(s.text));
    for (const auto& t : docs.back()) nb.vocabulary_.emplace(t, 0);
  }
  std::size_t next = 0;
  for (auto& [token, id] : nb.vocabulary_) id = next++;

  const std::size_t width = nb.vocabulary_.size() + 1;
  std::vector<std::vector<double>> counts(k, std::vector<double>(width, 0.0));
  std::vector<double> totals(k, 0.0), class_docs(k, 0.0);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    class_docs[ids[d]] += 1.0;
    for (const auto& t : docs[d]) {
      counts[ids[d]][nb.vocabulary_.at(t)] += 1.0;
      totals[ids[d]] += 1.0;
    }
  }

  const double n = static_cast<double>(train.size());
  nb.log_prior_.resize(k);
  nb.log_likelihood_.assign(k, std::vector<double>(width));
  for (std::size_t c = 0; c < k; ++c) {
    nb.log_prior_[c] = std::log(class_docs[c] / n);
    const double denom = totals[c] + alpha * static_cast<double>(width);
    for (std::size_t t = 0; t < width; ++t) nb.log_likelihood_[c][t] = std::log((counts[c][t] + alpha) / denom);
  }
  return nb;
}

std::vector<double> NaiveBayes::log_posterior(std::string_view text) const {
  std::vector<double> score = log_prior_;
  for (const auto& t : word_tokenize(text)) {
    auto it = vocabulary_.find(t);
    const std::size_t f = it == vocabulary_.end() ? oov_index() : it->second;
    for (std::size_t c = 0; c < score.size(); ++c) score[c] += log_likelihood_[c][f];
  }
  return score;
}

std::vector<double> NaiveBayes::posterior(std::string_view text) const {
  auto s = log_posterior(text);
  const double hi = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double& v : s) z += (v = std::exp(v - hi));
  for (double& v : s) v /= z;
  return s;
}

std::size_t NaiveBayes::predict(std::string_view text) const {
  auto s = log_posterior(text);
  return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
}

void NaiveBayes::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json vocab = nlohmann::ordered_json::object();
  for (const auto& [token, id] : vocabulary_) vocab[token] = id;
  nlohmann::ordered_json j;
  j["alpha"] = alpha_;
  j["labels"] = labels_.names();
  j["vocabulary"] = std::move(vocab);
  j["log_prior"] = log_prior_;
  j["log_likelihood"] = log_likelihood_;
  write_file(path, j.dump(1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n");
}

NaiveBayes NaiveBayes::load(const std::filesystem::path& path) {
  NaiveBayes nb;
  try {
    auto j = nlohmann::json::parse(read_file(path));
    nb.alpha_ = j.at("alpha").get<double>();
    nb.labels_ = LabelSet(j.at("labels").get<std::vector<std::string>>());
    nb.vocabulary_ = j.at("vocabulary").get<std::map<std::string, std::size_t>>();
    nb.log_prior_ = j.at("log_prior").get<std::vector<double>>();
    nb.log_likelihood_ = j.at("log_likelihood").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  const std::size_t k = nb.labels_.size();
  if (k == 0 || nb.log_prior_.size() != k || nb.log_likelihood_.size() != k) {
    throw DataError(path.string() + ": class count mismatch");
  }
  for (const auto& row : nb.log_likelihood_) {
    if (row.size() != nb.vocabulary_.size() + 1) throw DataError(path.string() + ": likelihood width mismatch");
  }
  return nb;
}

}  // namespace codelid
