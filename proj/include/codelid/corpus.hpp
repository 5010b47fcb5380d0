#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace codelid {

// Ordered language names with a name -> id index. Ids are positions.
class LabelSet {
 public:
  LabelSet() = default;
  // Keeps the given order; throws std::invalid_argument on duplicates.
  explicit LabelSet(std::vector<std::string> names);
  // Distinct names in lexicographic order.
  static LabelSet sorted(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  const std::string& name(std::size_t id) const { return names_.at(id); }
  std::optional<std::size_t> id(std::string_view name) const;
  bool contains(std::string_view name) const { return id(name).has_value(); }
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const LabelSet& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Snippet {
  std::string text;
  std::string label;

  bool operator==(const Snippet&) const = default;
};

struct Corpus {
  std::vector<Snippet> snippets;
  LabelSet labels;

  std::size_t size() const { return snippets.size(); }
  // Label id of every snippet; throws DataError for labels outside `labels`.
  std::vector<std::size_t> label_ids() const;
};

struct CleaningPolicy {
  std::size_t min_chars = 10;
  std::size_t max_chars = 10000;
  bool normalize_newlines = true;
  bool strip_trailing_whitespace = true;
  std::vector<std::string> excluded_labels;

  void validate() const;
};

struct Split {
  Corpus train;
  Corpus test;
};

// JSON Lines with exactly the string fields "text" and "label".
Corpus load_jsonl(const std::filesystem::path& path);
Corpus parse_jsonl(std::string_view contents);
void save_jsonl(const std::filesystem::path& path, const Corpus& corpus);

Corpus clean_and_filter(const Corpus& corpus, const CleaningPolicy& policy);
std::string clean_text(std::string_view text, const CleaningPolicy& policy);

// Per-class test counts: round-half-up of n_c * fraction, then adjusted one
// snippet at a time (largest classes first) until the total equals
// round-half-up of N * fraction.
std::vector<std::size_t> stratified_test_counts(const std::vector<std::size_t>& class_sizes,
                                                double test_fraction);
Split stratified_split(const Corpus& corpus, double test_fraction, std::uint64_t seed);

std::map<std::string, std::size_t> class_histogram(const Corpus& corpus);

}  // namespace codelid
