#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace codelid {

using TokenId = std::int32_t;

// Printable stand-in for every byte value (the GPT-2 byte alphabet): bytes
// that are already visible Latin-1 map to themselves, the rest to U+0100 and
// up. Space becomes "Ġ" and newline "Ċ".
const std::array<std::string, 256>& byte_alphabet();

// Splits text into the chunks BPE merges may not cross: an optional single
// leading space followed by a run of letters, a run of digits or a run of
// other symbols, or a run of whitespace. The last space of a whitespace run
// is handed to the following chunk, so a subword after a space starts with Ġ.
std::vector<std::string_view> pretokenize(std::string_view text);

struct Merge {
  std::string left;
  std::string right;

  bool operator==(const Merge&) const = default;
};

inline const std::vector<std::string>& default_specials() {
  static const std::vector<std::string> specials{"<s>", "<pad>", "</s>", "<mask>"};
  return specials;
}

// Byte-level BPE: 256-symbol alphabet, ranked merges, dense vocabulary.
// Immutable once built; encode/decode are safe to call concurrently.
class BpeModel {
 public:
  static constexpr std::size_t kDefaultMaxLength = 256;

  // Vocabulary ids: specials first (given order), then the 256 byte symbols,
  // then each new merge output in rank order.
  static BpeModel from_merges(std::vector<Merge> merges,
                              std::vector<std::string> specials = default_specials(),
                              std::size_t max_length = kDefaultMaxLength);
  static BpeModel from_parts(std::vector<Merge> merges,
                             std::unordered_map<std::string, TokenId> vocab,
                             std::vector<std::string> specials, std::size_t max_length);

  // merges.txt, vocab.json and tokenizer.json inside `dir`.
  static BpeModel load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  // Token ids truncated to max_length (0 disables truncation).
  std::vector<TokenId> encode(std::string_view text) const;
  std::vector<TokenId> encode(std::string_view text, std::size_t max_length) const;
  std::vector<std::string> encode_to_tokens(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  std::size_t vocab_size() const { return id_to_token_.size(); }
  std::size_t max_length() const { return max_length_; }
  const std::vector<Merge>& merges() const { return merges_; }
  const std::vector<std::string>& specials() const { return specials_; }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> token_id(std::string_view token) const;
  std::vector<TokenId> special_ids() const;
  bool is_special(TokenId id) const;

  std::optional<TokenId> bos_id() const { return token_id("<s>"); }
  std::optional<TokenId> eos_id() const { return token_id("</s>"); }
  std::optional<TokenId> pad_id() const { return token_id("<pad>"); }
  std::optional<TokenId> mask_id() const { return token_id("<mask>"); }

  bool operator==(const BpeModel& other) const {
    return merges_ == other.merges_ && id_to_token_ == other.id_to_token_ &&
           specials_ == other.specials_ && max_length_ == other.max_length_;
  }

 private:
  struct PairHash {
    std::size_t operator()(std::uint64_t key) const { return std::hash<std::uint64_t>{}(key); }
  };
  struct MergeRule {
    std::size_t rank;
    TokenId output;
  };

  void build_index();
  void encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const;

  std::vector<Merge> merges_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> specials_;
  std::size_t max_length_ = kDefaultMaxLength;
  std::array<TokenId, 256> byte_ids_{};
  std::vector<std::uint8_t> decoded_bytes_valid_;
  std::vector<std::string> decoded_bytes_;
  std::unordered_map<std::uint64_t, MergeRule, PairHash> merge_rules_;
};

// Greedy BPE training: count adjacent symbol pairs over pretokenized chunks,
// merge the most frequent pair (ties: lexicographically smallest left, then
// right symbol), recount, and stop once the vocabulary holds vocab_size
// entries or no pair occurs at least twice.
BpeModel train_bpe(std::span<const std::string> texts, std::size_t vocab_size,
                   std::vector<std::string> specials = default_specials(),
                   std::size_t max_length = BpeModel::kDefaultMaxLength);

// Baseline tokenizer: whitespace separates tokens, runs of [A-Za-z0-9_] form
// one token, every other character is its own token, and each newline is
// kept as a "\n" token.
std::vector<std::string> word_tokenize(std::string_view text);

}  // namespace codelid
