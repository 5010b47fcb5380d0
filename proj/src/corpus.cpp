#include "codelid/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "codelid/error.hpp"
#include "codelid/text.hpp"

namespace codelid {

using nlohmann::json;

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], i).second) {
      throw std::invalid_argument("duplicate label: " + names_[i]);
    }
  }
}

LabelSet LabelSet::sorted(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return LabelSet(std::move(names));
}

std::optional<std::size_t> LabelSet::id(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> Corpus::label_ids() const {
  std::vector<std::size_t> ids;
  ids.reserve(snippets.size());
  for (const auto& s : snippets) {
    auto id = labels.id(s.label);
    if (!id) throw DataError("label not in label set: " + s.label);
    ids.push_back(*id);
  }
  return ids;
}

void CleaningPolicy::validate() const {
  if (min_chars == 0 || min_chars > max_chars) {
    throw std::invalid_argument("cleaning policy requires 0 < min_chars <= max_chars");
  }
}

Corpus parse_jsonl(std::string_view contents) {
  Corpus corpus;
  std::vector<std::string> names;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < contents.size()) {
    std::size_t end = contents.find('\n', pos);
    if (end == std::string_view::npos) end = contents.size();
    std::string_view line = contents.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    if (!record.is_object()) {
      throw DataError("line " + std::to_string(line_no) + ": expected a JSON object");
    }
    for (const char* key : {"text", "label"}) {
      auto it = record.find(key);
      if (it == record.end()) {
        throw DataError("line " + std::to_string(line_no) + ": missing field \"" + key + "\"");
      }
      if (!it->is_string()) {
        throw DataError("line " + std::to_string(line_no) + ": field \"" + key +
                        "\" must be a string");
      }
    }
    Snippet s{record["text"].get<std::string>(), record["label"].get<std::string>()};
    names.push_back(s.label);
    corpus.snippets.push_back(std::move(s));
  }
  corpus.labels = LabelSet::sorted(std::move(names));
  return corpus;
}

Corpus load_jsonl(const std::filesystem::path& path) {
  return parse_jsonl(read_file(path));
}

void save_jsonl(const std::filesystem::path& path, const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.snippets) {
    json record = {{"text", s.text}, {"label", s.label}};
    out += record.dump(-1, ' ', false, json::error_handler_t::replace);
    out += '\n';
  }
  write_file(path, out);
}

std::string clean_text(std::string_view text, const CleaningPolicy& policy) {
  std::string s;
  s.reserve(text.size());
  if (policy.normalize_newlines) {
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (text[i] == '\r') {
        s += '\n';
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      } else {
        s += text[i];
      }
    }
  } else {
    s.assign(text);
  }

  s.resize(utf8_prefix_bytes(s, policy.max_chars));

  if (policy.strip_trailing_whitespace) {
    std::string stripped;
    stripped.reserve(s.size());
    std::size_t line_start = 0;
    while (line_start <= s.size()) {
      std::size_t nl = s.find('\n', line_start);
      std::size_t line_end = nl == std::string::npos ? s.size() : nl;
      std::size_t keep = line_end;
      while (keep > line_start && (s[keep - 1] == ' ' || s[keep - 1] == '\t' ||
                                   s[keep - 1] == '\r' || s[keep - 1] == '\f' ||
                                   s[keep - 1] == '\v')) {
        --keep;
      }
      stripped.append(s, line_start, keep - line_start);
      if (nl == std::string::npos) break;
      stripped += '\n';
      line_start = nl + 1;
    }
    s = std::move(stripped);
  }
  return s;
}

Corpus clean_and_filter(const Corpus& corpus, const CleaningPolicy& policy) {
  policy.validate();
  std::set<std::string, std::less<>> excluded(policy.excluded_labels.begin(),
                                              policy.excluded_labels.end());
  Corpus out;
  std::vector<std::string> names;
  for (const auto& s : corpus.snippets) {
    if (excluded.contains(s.label)) continue;
    std::string text = clean_text(s.text, policy);
    if (utf8_length(text) < policy.min_chars) continue;
    names.push_back(s.label);
    out.snippets.push_back({std::move(text), s.label});
  }
  out.labels = LabelSet::sorted(std::move(names));
  return out;
}

namespace {

std::size_t round_half_up(double x) {
  return static_cast<std::size_t>(std::floor(x + 0.5));
}

}  // namespace

std::vector<std::size_t> stratified_test_counts(const std::vector<std::size_t>& class_sizes,
                                                double test_fraction) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) {
    throw std::invalid_argument("test_fraction must lie in [0, 1]");
  }
  const std::size_t total = std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0});
  std::vector<std::size_t> counts(class_sizes.size());
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < class_sizes.size(); ++c) {
    counts[c] = std::min(class_sizes[c], round_half_up(static_cast<double>(class_sizes[c]) * test_fraction));
    assigned += counts[c];
  }
  const std::size_t target = round_half_up(static_cast<double>(total) * test_fraction);

  std::vector<std::size_t> order(class_sizes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return class_sizes[a] > class_sizes[b]; });

  // Each pass moves at most one snippet per class.
  while (assigned != target) {
    bool moved = false;
    for (std::size_t c : order) {
      if (assigned == target) break;
      if (assigned < target && counts[c] < class_sizes[c]) {
        ++counts[c];
        ++assigned;
        moved = true;
      } else if (assigned > target && counts[c] > 0) {
        --counts[c];
        --assigned;
        moved = true;
      }
    }
    if (!moved) break;
  }
  return counts;
}

Split stratified_split(const Corpus& corpus, double test_fraction, std::uint64_t seed) {
  const auto ids = corpus.label_ids();
  std::vector<std::vector<std::size_t>> members(corpus.labels.size());
  for (std::size_t i = 0; i < ids.size(); ++i) members[ids[i]].push_back(i);

  std::vector<std::size_t> sizes;
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (members[c].empty()) {
      throw std::invalid_argument("class without snippets: " + corpus.labels.name(c));
    }
    sizes.push_back(members[c].size());
  }
  const auto test_counts = stratified_test_counts(sizes, test_fraction);

  std::mt19937_64 rng(seed);
  std::vector<bool> in_test(corpus.size(), false);
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto shuffled = members[c];
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (std::size_t j = 0; j < test_counts[c]; ++j) in_test[shuffled[j]] = true;
  }

  Split split;
  split.train.labels = corpus.labels;
  split.test.labels = corpus.labels;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    (in_test[i] ? split.test : split.train).snippets.push_back(corpus.snippets[i]);
  }
  return split;
}

std::map<std::string, std::size_t> class_histogram(const Corpus& corpus) {
  std::map<std::string, std::size_t> hist;
  for (const auto& s : corpus.snippets) ++hist[s.label];
  return hist;
}

}  // namespace codelid
