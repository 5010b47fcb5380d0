#include <doctest.h>

#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "codelid/bpe.hpp"
#include "codelid/error.hpp"
#include "codelid/text.hpp"
#include "oracles.hpp"

using namespace codelid;
using Texts = std::vector<std::string>;

namespace {

const char* kSnippet = "def split_lines(s): return s.split('\n')";

}  // namespace

TEST_CASE("byte alphabet") {
  const auto& a = byte_alphabet();
  CHECK(std::set<std::string>(a.begin(), a.end()).size() == 256);
  CHECK(a[' '] == "Ġ");
  CHECK(a['\n'] == "Ċ");
  CHECK(a['a'] == "a");
}

TEST_CASE("pretokenize") {
  auto chunks = pretokenize("def f(x):  return  x\n");
  std::vector<std::string> got(chunks.begin(), chunks.end());
  CHECK(got == std::vector<std::string>{"def", " f", "(", "x", "):", " ", " return", " ", " x", "\n"});
  CHECK(pretokenize("").empty());
}

TEST_CASE("banana example") {
  auto model = train_bpe(Texts{"banana banana"}, 256 + 4 + 1);
  REQUIRE(model.merges().size() == 1);
  CHECK(model.merges()[0] == Merge{"a", "n"});
  CHECK(model.encode_to_tokens("banana") == std::vector<std::string>{"b", "an", "an", "a"});
  CHECK(model.decode(model.encode("banana")) == "banana");
}

TEST_CASE("minimum vocabulary means raw bytes") {
  auto model = train_bpe(Texts{"aaaa bbbb aaaa"}, 260);
  CHECK(model.merges().empty());
  CHECK(model.encode("ab").size() == 2);
  CHECK_THROWS_AS(train_bpe(Texts{"x"}, 259), std::invalid_argument);
}

TEST_CASE("merge sequence matches brute force") {
  const std::vector<std::vector<std::string>> corpora = {
      {"banana banana"},
      {"low lower lowest newer wider"},
      {"ab ba ab ba"},
      {"aaa aaa aaaa"},
      {"the cat sat on the mat", "the bat sat"},
      {"abab baba abab"},
      {"xy yx xy yx zz zz"},
      {"hello hello help helm hell"},
  };
  for (const auto& texts : corpora) {
    for (std::size_t extra : {1u, 3u, 8u, 40u}) {
      auto model = train_bpe(texts, 260 + extra);
      CAPTURE(texts[0]);
      CAPTURE(extra);
      CHECK(model.merges() == oracle::bpe_merges(texts, extra));
    }
  }
}

TEST_CASE("tie broken lexicographically") {
  // ba, ab each occur twice; "a b" < "b a".
  auto model = train_bpe(Texts{"ab ba ab ba"}, 261);
  REQUIRE(model.merges().size() == 1);
  CHECK(model.merges()[0] == Merge{"a", "b"});
}

TEST_CASE("specials are never produced by merges") {
  auto model = train_bpe(Texts{"<s> <s> <s> <s>"}, 300);
  for (const auto& m : model.merges()) CHECK_FALSE(model.is_special(*model.token_id(m.left + m.right)));
  auto ids = model.encode("<s>");
  for (auto id : ids) CHECK_FALSE(model.is_special(id));
}

TEST_CASE("vocabulary layout") {
  auto model = train_bpe(Texts{"banana banana"}, 261);
  CHECK(model.vocab_size() == 261);
  CHECK(model.bos_id() == 0);
  CHECK(model.pad_id() == 1);
  CHECK(model.eos_id() == 2);
  CHECK(model.mask_id() == 3);
  CHECK(model.token(4) == byte_alphabet()[0]);
  CHECK(model.token(260) == "an");
  CHECK_THROWS_AS(model.token(261), std::out_of_range);
  std::vector<TokenId> bad{261};
  CHECK_THROWS_AS(model.decode(bad), std::out_of_range);
  std::vector<TokenId> with_special{0, *model.token_id("b"), 2};
  CHECK(model.decode(with_special) == "b");
}

TEST_CASE("roundtrip and no unknown tokens on random text") {
  std::vector<std::string> train;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) train.push_back(oracle::random_utf8(rng));
  train.push_back(kSnippet);
  auto model = train_bpe(train, 600, default_specials(), 0);
  for (int i = 0; i < 1000; ++i) {
    std::string s = oracle::random_utf8(rng);
    auto ids = model.encode(s);
    for (auto id : ids) {
      REQUIRE(id >= 0);
      REQUIRE(static_cast<std::size_t>(id) < model.vocab_size());
      REQUIRE_FALSE(model.is_special(id));
    }
    REQUIRE(model.decode(ids) == s);
  }
  CHECK(model.encode("").empty());
}

TEST_CASE("truncation") {
  auto model = train_bpe(Texts{"banana banana"}, 261, default_specials(), 3);
  CHECK(model.encode("banana banana").size() == 3);
  CHECK(model.encode("banana banana", 0).size() > 3);
}

TEST_CASE("retraining is deterministic and compression is monotone") {
  std::vector<std::string> texts = {"for i in range(10):\n    print(i)", "SELECT * FROM users WHERE id = 1;",
                                    "public static void main(String[] args) {}", "echo $HOME | grep root"};
  CHECK(train_bpe(texts, 320) == train_bpe(texts, 320));
  std::size_t prev = SIZE_MAX;
  for (std::size_t v : {260u, 270u, 290u, 320u, 400u}) {
    auto model = train_bpe(texts, v, default_specials(), 0);
    std::size_t n = 0;
    for (const auto& t : texts) n += model.encode(t).size();
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("reference vocabulary reproduces the published segmentation") {
  auto model = BpeModel::load(CODELID_DATA_DIR "/reference_bpe");
  const std::vector<std::string> expected = {"def", "Ġsplit", "_", "lines", "(", "s", ")", ":", "Ġreturn",
                                             "Ġs", ".", "split", "(", "'", "Ċ", "'", ")"};
  CHECK(model.encode_to_tokens(kSnippet) == expected);
  CHECK(model.decode(model.encode(kSnippet)) == kSnippet);
}

TEST_CASE("locally trained vocabulary marks space-adjacent subwords") {
  std::vector<std::string> texts;
  for (int i = 0; i < 30; ++i) {
    texts.push_back("def split_lines(s): return s.split('\\n')");
    texts.push_back("x = s.strip().split(',')\nreturn x");
  }
  auto model = train_bpe(texts, 320);
  auto tokens = model.encode_to_tokens(kSnippet);
  CHECK(model.decode(model.encode(kSnippet)) == kSnippet);
  // Every token that follows a space in the text starts with the marker.
  std::size_t offset = 0;
  std::string text = kSnippet;
  for (const auto& t : tokens) {
    if (offset > 0 && text[offset - 1] == ' ') CHECK(t.rfind("Ġ", 0) == 0);
    std::vector<TokenId> one{*model.token_id(t)};
    offset += model.decode(one).size();
  }
  CHECK(offset == text.size());
  CHECK(std::find(tokens.begin(), tokens.end(), "Ġreturn") != tokens.end());
}

TEST_CASE("save and load") {
  auto dir = std::filesystem::temp_directory_path() / "codelid_bpe_test";
  std::filesystem::remove_all(dir);
  auto model = train_bpe(Texts{"hello world hello there world"}, 270, default_specials(), 64);
  model.save(dir);
  auto back = BpeModel::load(dir);
  CHECK(back == model);
  write_file(dir / "merges.txt", "only_one_symbol\n");
  CHECK_THROWS_AS(BpeModel::load(dir), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("word_tokenize") {
  using V = std::vector<std::string>;
  CHECK(word_tokenize("").empty());
  CHECK(word_tokenize("def f(x):") == V{"def", "f", "(", "x", ")", ":"});
  CHECK(word_tokenize("s.split('\n')") == V{"s", ".", "split", "(", "'", "\n", "'", ")"});
  CHECK(word_tokenize("a_1+=b\t\tc") == V{"a_1", "+", "=", "b", "c"});
  CHECK(word_tokenize("x→y") == V{"x", "→", "y"});
  std::mt19937_64 rng(11);
  auto ident = [](unsigned char c) { return std::isalnum(c) || c == '_'; };
  for (int i = 0; i < 300; ++i) {
    for (const auto& t : word_tokenize(oracle::random_utf8(rng))) {
      REQUIRE_FALSE(t.empty());
      bool has_ident = false, has_other = false;
      for (unsigned char c : t) (ident(c) ? has_ident : has_other) = true;
      CHECK_FALSE((has_ident && has_other));
    }
  }
}
