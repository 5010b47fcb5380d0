#include "codelid/bpe.hpp"

#include <algorithm>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "codelid/error.hpp"
#include "codelid/text.hpp"

namespace codelid {

namespace {

std::string encode_utf8(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

std::array<std::string, 256> build_byte_alphabet() {
  std::array<std::string, 256> table;
  auto visible = [](int b) {
    return (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
  };
  char32_t next = 256;
  for (int b = 0; b < 256; ++b) {
    table[b] = visible(b) ? encode_utf8(static_cast<char32_t>(b)) : encode_utf8(next++);
  }
  return table;
}

const std::unordered_map<std::string, unsigned char>& alphabet_inverse() {
  static const auto inverse = [] {
    std::unordered_map<std::string, unsigned char> inv;
    const auto& table = byte_alphabet();
    for (int b = 0; b < 256; ++b) inv.emplace(table[b], static_cast<unsigned char>(b));
    return inv;
  }();
  return inverse;
}

// Maps a token string in alphabet form back to raw bytes.
std::optional<std::string> token_bytes(std::string_view token) {
  const auto& inv = alphabet_inverse();
  std::string out;
  for (std::size_t i = 0; i < token.size();) {
    std::size_t len = utf8_sequence_length(static_cast<unsigned char>(token[i]));
    auto it = inv.find(std::string(token.substr(i, len)));
    if (it == inv.end()) return std::nullopt;
    out += static_cast<char>(it->second);
    i += len;
  }
  return out;
}

enum class CharClass { space, whitespace, letter, digit, other };

CharClass classify(unsigned char c) {
  if (c == ' ') return CharClass::space;
  if (c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') return CharClass::whitespace;
  if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c >= 0x80) return CharClass::letter;
  if (c >= '0' && c <= '9') return CharClass::digit;
  return CharClass::other;
}

bool is_ws(CharClass k) { return k == CharClass::space || k == CharClass::whitespace; }

std::uint64_t pair_key(std::uint32_t left, std::uint32_t right) {
  return (static_cast<std::uint64_t>(left) << 32) | right;
}

}  // namespace

const std::array<std::string, 256>& byte_alphabet() {
  static const auto table = build_byte_alphabet();
  return table;
}

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> chunks;
  const std::size_t n = text.size();
  auto cls = [&](std::size_t i) { return classify(static_cast<unsigned char>(text[i])); };
  std::size_t i = 0;
  while (i < n) {
    std::size_t start = i;
    CharClass k = cls(i);
    if (is_ws(k)) {
      std::size_t j = i;
      while (j < n && is_ws(cls(j))) ++j;
      if (j == n) {
        chunks.push_back(text.substr(i, j - i));
        i = j;
        continue;
      }
      // Whitespace followed by a word: keep the final space for that word.
      if (j - i >= 2) chunks.push_back(text.substr(i, j - 1 - i));
      i = j - 1;
      if (cls(i) != CharClass::space) {
        chunks.push_back(text.substr(i, 1));
        ++i;
        continue;
      }
      start = i;
      ++i;
      k = cls(i);
    }
    std::size_t j = i;
    while (j < n && cls(j) == k) ++j;
    chunks.push_back(text.substr(start, j - start));
    i = j;
  }
  return chunks;
}

BpeModel BpeModel::from_merges(std::vector<Merge> merges, std::vector<std::string> specials,
                               std::size_t max_length) {
  std::unordered_map<std::string, TokenId> vocab;
  TokenId next = 0;
  auto add = [&](const std::string& token) {
    if (vocab.emplace(token, next).second) ++next;
  };
  for (const auto& s : specials) {
    if (vocab.contains(s)) throw std::invalid_argument("duplicate special token: " + s);
    add(s);
  }
  for (const auto& sym : byte_alphabet()) {
    if (vocab.contains(sym)) throw std::invalid_argument("special token collides with byte symbol: " + sym);
    add(sym);
  }
  for (const auto& m : merges) add(m.left + m.right);
  return from_parts(std::move(merges), std::move(vocab), std::move(specials), max_length);
}

BpeModel BpeModel::from_parts(std::vector<Merge> merges,
                              std::unordered_map<std::string, TokenId> vocab,
                              std::vector<std::string> specials, std::size_t max_length) {
  BpeModel model;
  model.merges_ = std::move(merges);
  model.specials_ = std::move(specials);
  model.max_length_ = max_length;
  model.id_to_token_.assign(vocab.size(), std::string());
  std::vector<bool> seen(vocab.size(), false);
  for (auto& [token, id] : vocab) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size() || seen[id]) {
      throw DataError("vocabulary ids must be dense and unique (bad id for \"" + token + "\")");
    }
    seen[id] = true;
    model.id_to_token_[id] = token;
  }
  model.token_to_id_ = std::move(vocab);
  model.build_index();
  return model;
}

void BpeModel::build_index() {
  std::unordered_set<std::string> special_set(specials_.begin(), specials_.end());
  for (const auto& s : specials_) {
    if (!token_to_id_.contains(s)) throw DataError("special token missing from vocabulary: " + s);
  }
  const auto& alphabet = byte_alphabet();
  for (int b = 0; b < 256; ++b) {
    auto it = token_to_id_.find(alphabet[b]);
    if (it == token_to_id_.end() || special_set.contains(alphabet[b])) {
      throw DataError("byte symbol missing from vocabulary: " + alphabet[b]);
    }
    byte_ids_[b] = it->second;
  }

  merge_rules_.clear();
  for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
    const auto& m = merges_[rank];
    const std::string merged = m.left + m.right;
    auto left = token_to_id_.find(m.left);
    auto right = token_to_id_.find(m.right);
    auto out = token_to_id_.find(merged);
    if (left == token_to_id_.end() || right == token_to_id_.end() || out == token_to_id_.end()) {
      throw DataError("merge " + std::to_string(rank) + " (" + m.left + " " + m.right +
                      ") references a token outside the vocabulary");
    }
    if (special_set.contains(m.left) || special_set.contains(m.right) || special_set.contains(merged)) {
      throw DataError("merge " + std::to_string(rank) + " involves a special token");
    }
    merge_rules_.try_emplace(pair_key(static_cast<std::uint32_t>(left->second),
                                      static_cast<std::uint32_t>(right->second)),
                             MergeRule{rank, out->second});
  }

  decoded_bytes_.assign(id_to_token_.size(), std::string());
  decoded_bytes_valid_.assign(id_to_token_.size(), 0);
  for (std::size_t id = 0; id < id_to_token_.size(); ++id) {
    if (special_set.contains(id_to_token_[id])) continue;
    auto bytes = token_bytes(id_to_token_[id]);
    if (!bytes) throw DataError("token outside the byte alphabet: " + id_to_token_[id]);
    decoded_bytes_[id] = std::move(*bytes);
    decoded_bytes_valid_[id] = 1;
  }
}

void BpeModel::encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const {
  std::vector<TokenId> word;
  word.reserve(chunk.size());
  for (unsigned char c : chunk) word.push_back(byte_ids_[c]);

  std::vector<TokenId> next;
  while (word.size() > 1) {
    const MergeRule* best = nullptr;
    std::uint64_t best_key = 0;
    for (std::size_t i = 0; i + 1 < word.size(); ++i) {
      auto key = pair_key(static_cast<std::uint32_t>(word[i]), static_cast<std::uint32_t>(word[i + 1]));
      auto it = merge_rules_.find(key);
      if (it != merge_rules_.end() && (!best || it->second.rank < best->rank)) {
        best = &it->second;
        best_key = key;
      }
    }
    if (!best) break;
    next.clear();
    for (std::size_t i = 0; i < word.size();) {
      if (i + 1 < word.size() &&
          pair_key(static_cast<std::uint32_t>(word[i]), static_cast<std::uint32_t>(word[i + 1])) == best_key) {
        next.push_back(best->output);
        i += 2;
      } else {
        next.push_back(word[i]);
        ++i;
      }
    }
    word.swap(next);
  }
  out.insert(out.end(), word.begin(), word.end());
}

std::vector<TokenId> BpeModel::encode(std::string_view text) const {
  return encode(text, max_length_);
}

std::vector<TokenId> BpeModel::encode(std::string_view text, std::size_t max_length) const {
  std::vector<TokenId> ids;
  for (auto chunk : pretokenize(text)) {
    encode_chunk(chunk, ids);
    if (max_length != 0 && ids.size() >= max_length) {
      ids.resize(max_length);
      break;
    }
  }
  return ids;
}

std::vector<std::string> BpeModel::encode_to_tokens(std::string_view text) const {
  std::vector<std::string> tokens;
  for (TokenId id : encode(text)) tokens.push_back(id_to_token_[id]);
  return tokens;
}

std::string BpeModel::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(id_to_token_.size()));
    }
    if (decoded_bytes_valid_[id]) out += decoded_bytes_[id];
  }
  return out;
}

const std::string& BpeModel::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  }
  return id_to_token_[id];
}

std::optional<TokenId> BpeModel::token_id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> BpeModel::special_ids() const {
  std::vector<TokenId> ids;
  for (const auto& s : specials_) ids.push_back(token_to_id_.at(s));
  return ids;
}

bool BpeModel::is_special(TokenId id) const {
  return id >= 0 && static_cast<std::size_t>(id) < decoded_bytes_valid_.size() && !decoded_bytes_valid_[id];
}

BpeModel BpeModel::load(const std::filesystem::path& dir) {
  using nlohmann::json;
  std::vector<Merge> merges;
  {
    std::istringstream in(read_file(dir / "merges.txt"));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto sp = line.find(' ');
      if (sp == std::string::npos || sp == 0 || sp + 1 == line.size() ||
          line.find(' ', sp + 1) != std::string::npos) {
        throw DataError("merges.txt line " + std::to_string(line_no) + ": expected \"left right\"");
      }
      merges.push_back({line.substr(0, sp), line.substr(sp + 1)});
    }
  }
  std::unordered_map<std::string, TokenId> vocab;
  json manifest;
  try {
    const json vocab_json = json::parse(read_file(dir / "vocab.json"));
    for (auto& [token, id] : vocab_json.items()) {
      vocab.emplace(token, id.get<TokenId>());
    }
    manifest = json::parse(read_file(dir / "tokenizer.json"));
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid tokenizer files: ") + e.what());
  }
  auto specials = manifest.value("specials", std::vector<std::string>{});
  auto max_length = manifest.value("max_length", kDefaultMaxLength);
  return from_parts(std::move(merges), std::move(vocab), std::move(specials), max_length);
}

void BpeModel::save(const std::filesystem::path& dir) const {
  using nlohmann::ordered_json;
  std::filesystem::create_directories(dir);
  std::string merges;
  for (const auto& m : merges_) merges += m.left + " " + m.right + "\n";
  write_file(dir / "merges.txt", merges);

  ordered_json vocab = ordered_json::object();
  for (std::size_t id = 0; id < id_to_token_.size(); ++id) vocab[id_to_token_[id]] = id;
  write_file(dir / "vocab.json", vocab.dump(1) + "\n");

  ordered_json manifest = {{"specials", specials_},
                           {"max_length", max_length_},
                           {"vocab_size", id_to_token_.size()}};
  write_file(dir / "tokenizer.json", manifest.dump(2) + "\n");
}

BpeModel train_bpe(std::span<const std::string> texts, std::size_t vocab_size,
                   std::vector<std::string> specials, std::size_t max_length) {
  const std::size_t base = 256 + specials.size();
  if (vocab_size < base) {
    throw std::invalid_argument("vocab_size must be at least 256 + number of specials (" +
                                std::to_string(base) + ")");
  }
  const std::unordered_set<std::string> special_set(specials.begin(), specials.end());

  // Distinct chunks with frequencies, in first-seen order.
  std::unordered_map<std::string_view, std::size_t> chunk_index;
  std::vector<std::vector<std::uint32_t>> words;
  std::vector<std::int64_t> freq;
  for (const auto& text : texts) {
    for (auto chunk : pretokenize(text)) {
      auto [it, inserted] = chunk_index.try_emplace(chunk, words.size());
      if (inserted) {
        std::vector<std::uint32_t> w;
        for (unsigned char c : chunk) w.push_back(c);
        words.push_back(std::move(w));
        freq.push_back(0);
      }
      ++freq[it->second];
    }
  }

  std::vector<std::string> symbols(byte_alphabet().begin(), byte_alphabet().end());
  std::unordered_map<std::string, std::uint32_t> symbol_ids;
  for (std::uint32_t s = 0; s < symbols.size(); ++s) symbol_ids.emplace(symbols[s], s);

  std::unordered_map<std::uint64_t, std::int64_t> counts;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where;
  for (std::uint32_t w = 0; w < words.size(); ++w) {
    for (std::size_t i = 0; i + 1 < words[w].size(); ++i) {
      auto key = pair_key(words[w][i], words[w][i + 1]);
      counts[key] += freq[w];
      where[key].push_back(w);
    }
  }

  struct Entry {
    std::int64_t count;
    std::uint32_t left;
    std::uint32_t right;
  };
  // Highest count first; on equal counts the lexicographically smallest pair.
  auto lower_priority = [&symbols](const Entry& a, const Entry& b) {
    if (a.count != b.count) return a.count < b.count;
    int cl = symbols[a.left].compare(symbols[b.left]);
    if (cl != 0) return cl > 0;
    return symbols[a.right].compare(symbols[b.right]) > 0;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(lower_priority)> heap(lower_priority);
  for (const auto& [key, c] : counts) {
    heap.push({c, static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key & 0xFFFFFFFFu)});
  }

  std::vector<Merge> merges;
  std::size_t vocab_count = base;
  std::unordered_set<std::uint64_t> banned;
  while (vocab_count < vocab_size && !heap.empty()) {
    Entry top = heap.top();
    heap.pop();
    const auto key = pair_key(top.left, top.right);
    auto cit = counts.find(key);
    if (cit == counts.end() || cit->second != top.count || banned.contains(key)) continue;
    if (top.count < 2) break;

    std::string merged = symbols[top.left] + symbols[top.right];
    if (special_set.contains(merged)) {
      banned.insert(key);
      continue;
    }
    std::uint32_t out_id;
    if (auto sit = symbol_ids.find(merged); sit != symbol_ids.end()) {
      out_id = sit->second;
    } else {
      out_id = static_cast<std::uint32_t>(symbols.size());
      symbols.push_back(merged);
      symbol_ids.emplace(merged, out_id);
      ++vocab_count;
    }
    merges.push_back({symbols[top.left], symbols[top.right]});

    auto affected = std::move(where[key]);
    where.erase(key);
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());

    std::unordered_set<std::uint64_t> changed;
    std::vector<std::uint32_t> merged_word;
    for (std::uint32_t w : affected) {
      auto& word = words[w];
      bool present = false;
      for (std::size_t i = 0; i + 1 < word.size() && !present; ++i) {
        present = word[i] == top.left && word[i + 1] == top.right;
      }
      if (!present) continue;
      for (std::size_t i = 0; i + 1 < word.size(); ++i) {
        auto k = pair_key(word[i], word[i + 1]);
        counts[k] -= freq[w];
        changed.insert(k);
      }
      merged_word.clear();
      for (std::size_t i = 0; i < word.size();) {
        if (i + 1 < word.size() && word[i] == top.left && word[i + 1] == top.right) {
          merged_word.push_back(out_id);
          i += 2;
        } else {
          merged_word.push_back(word[i]);
          ++i;
        }
      }
      word = merged_word;
      for (std::size_t i = 0; i + 1 < word.size(); ++i) {
        auto k = pair_key(word[i], word[i + 1]);
        counts[k] += freq[w];
        changed.insert(k);
        if (k != key) where[k].push_back(w);
      }
    }
    for (auto k : changed) {
      auto c = counts[k];
      if (c <= 0) {
        counts.erase(k);
        continue;
      }
      heap.push({c, static_cast<std::uint32_t>(k >> 32), static_cast<std::uint32_t>(k & 0xFFFFFFFFu)});
    }
  }
  return BpeModel::from_merges(std::move(merges), std::move(specials), max_length);
}

}  // namespace codelid
