#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "codelid/error.hpp"
#include "codelid/json_io.hpp"
#include "codelid/text.hpp"
#include "codelid/nn/grad_check.hpp"
#include "codelid/nn/ops.hpp"
#include "codelid/transformer.hpp"

using namespace codelid;
using nn::Graph;
using nn::Var;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.vocab_size = 100;
  c.max_len = 16;
  c.model_dim = 8;
  c.num_heads = 2;
  c.num_layers = 1;
  c.ff_dim = 32;
  c.num_classes = 3;
  c.dropout = 0.0;
  return c;
}

TokenBatch tiny_batch() {
  std::vector<std::vector<TokenId>> rows{{0, 11, 12, 2}, {0, 13, 2}};
  return make_batch(rows, 0, 1, 16);
}

}  // namespace

TEST_CASE("layout and parameter count") {
  const auto c = tiny_config();
  auto layout = encoder_layout(c);
  REQUIRE(layout.size() == 2 + 16 + 2 + 2);
  CHECK(layout[0].name == "embeddings.token.weight");
  CHECK(layout[0].shape == nn::Shape{100, 8});
  CHECK(layout[1].name == "embeddings.position.weight");
  CHECK(layout[2].name == "layers.0.attention_norm.weight");
  CHECK(layout[4].name == "layers.0.attention.query.weight");
  CHECK(layout.back().name == "classifier.bias");
  CHECK(layout.back().shape == nn::Shape{3});
  auto params = init_params<double>(c, 1);
  // 100*8 + 16*8 + per layer (2*8 + 4*(64+8) + 2*8 + 8*32+32 + 32*8+8) + 2*8 + 8*3+3
  CHECK(params.scalar_count() == 1843);
}

TEST_CASE("initialization") {
  EncoderConfig c = tiny_config();
  c.vocab_size = 400;
  auto p = init_params<double>(c, 3);
  const auto& emb = p.tensors()[p.token_embedding()].value;
  double mean = 0, sq = 0;
  for (double x : emb.data) {
    mean += x;
    sq += x * x;
  }
  mean /= emb.size();
  CHECK(std::abs(mean) < 0.002);
  CHECK(std::sqrt(sq / emb.size()) == doctest::Approx(0.02).epsilon(0.05));
  for (double x : p.get("layers.0.attention_norm.weight").value.data) CHECK(x == 1.0);
  for (double x : p.get("layers.0.ffn.input.bias").value.data) CHECK(x == 0.0);
  CHECK(init_params<double>(c, 3) == p);
  CHECK_FALSE(init_params<double>(c, 4) == p);
  CHECK_THROWS_AS(p.get("nope"), std::out_of_range);
}

TEST_CASE("config validation") {
  auto c = tiny_config();
  c.num_heads = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("batching") {
  auto b = tiny_batch();
  CHECK(b.batch == 2);
  CHECK(b.len == 4);
  CHECK(b.ids == std::vector<TokenId>{0, 11, 12, 2, 0, 13, 2, 1});
  CHECK(b.mask == std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1, 1, 0});
  std::vector<std::vector<TokenId>> too_long{std::vector<TokenId>(20, 5)};
  CHECK_THROWS_AS(make_batch(too_long, 0, 1, 16), std::invalid_argument);
  std::vector<std::vector<TokenId>> empty{{}};
  CHECK_THROWS_AS(make_batch(empty, 0, 1, 16), std::invalid_argument);

  auto tok = BpeModel::from_merges({});
  auto framed = frame_tokens(tok, "hello world", 6);
  CHECK(framed.size() == 6);
  CHECK(framed.front() == *tok.bos_id());
  CHECK(framed.back() == *tok.eos_id());
  CHECK(frame_tokens(tok, "", 6) == std::vector<TokenId>{*tok.bos_id(), *tok.eos_id()});
}

TEST_CASE("full model gradients match finite differences in 64-bit") {
  EncoderConfig c = tiny_config();
  c.max_len = 4;
  auto params = init_params<double>(c, 7);
  // Larger weights make the check sensitive to every term.
  std::mt19937_64 rng(8);
  std::normal_distribution<double> d(0.0, 0.1);
  for (auto& p : params.tensors())
    for (auto& x : p.value.data) x += d(rng);
  std::vector<std::vector<TokenId>> rows{{0, 11, 12, 2}, {0, 13, 2}};
  auto batch = make_batch(rows, 0, 1, 4);
  std::vector<nn::Parameter<double>*> ptrs;
  for (auto& p : params.tensors()) ptrs.push_back(&p);

  SUBCASE("masked LM loss") {
    std::vector<std::int32_t> targets{nn::kIgnoreIndex, 40, nn::kIgnoreIndex, 7, nn::kIgnoreIndex, 9, nn::kIgnoreIndex,
                                      nn::kIgnoreIndex};
    auto loss = [&](Graph<double>& g) {
      auto vars = bind_params(g, params);
      Var h = encoder_forward(g, params, vars, batch);
      return nn::cross_entropy(g, mlm_logits(g, params, vars, h), targets);
    };
    auto r = nn::grad_check_detailed(loss, ptrs);
    CAPTURE(r.analytic_at_worst);
    CAPTURE(r.numeric_at_worst);
    CHECK(r.max_relative_error < 1e-4);
  }
  SUBCASE("classification loss") {
    std::vector<std::int32_t> labels{2, 0};
    auto loss = [&](Graph<double>& g) {
      auto vars = bind_params(g, params);
      Var h = encoder_forward(g, params, vars, batch);
      return nn::cross_entropy(g, classify(g, params, vars, batch, h), labels);
    };
    auto r = nn::grad_check_detailed(loss, ptrs);
    CAPTURE(r.worst_parameter);
    CAPTURE(r.worst_index);
    CAPTURE(r.analytic_at_worst);
    CAPTURE(r.numeric_at_worst);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("padding does not change real positions") {
  auto c = tiny_config();
  auto params = init_params<double>(c, 5);
  std::vector<std::vector<TokenId>> one{{0, 13, 2}};
  std::vector<std::vector<TokenId>> two{{0, 13, 2}, {0, 20, 21, 22, 23, 2}};
  auto h1 = encode_hidden(params, make_batch(one, 0, 1, 16));
  auto h2 = encode_hidden(params, make_batch(two, 0, 1, 16));
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < c.model_dim; ++j)
      CHECK(h1.data[t * c.model_dim + j] == doctest::Approx(h2.data[t * c.model_dim + j]).epsilon(1e-12));
}

TEST_CASE("evaluation helpers agree with the graph") {
  auto c = tiny_config();
  auto params = init_params<double>(c, 5);
  auto batch = tiny_batch();
  Graph<double> g;
  auto vars = bind_params(g, params);
  Var h = encoder_forward(g, params, vars, batch);
  const auto logits = g.value(classify(g, params, vars, batch, h));
  auto direct = classify_logits(params, batch);
  REQUIRE(direct.shape == nn::Shape{2, 3});
  for (std::size_t i = 0; i < direct.size(); ++i) CHECK(direct[i] == doctest::Approx(logits[i]).epsilon(1e-12));

  auto hidden = encode_hidden(params, batch);
  CHECK(hidden.shape == nn::Shape{2, 4, 8});
  auto mlm = mlm_logits(params, hidden);
  CHECK(mlm.cols() == 100);

  auto bad = batch;
  bad.ids[0] = 5;
  CHECK_THROWS(classify_logits(params, bad));
}

TEST_CASE("initial masked LM loss is near ln V") {
  EncoderConfig c = tiny_config();
  c.vocab_size = 500;
  c.model_dim = 32;
  c.ff_dim = 64;
  auto params = init_params<float>(c, 1);
  std::vector<std::vector<TokenId>> rows;
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<TokenId> tok(4, 499);
  for (int r = 0; r < 8; ++r) {
    std::vector<TokenId> row{0};
    for (int i = 0; i < 10; ++i) row.push_back(tok(rng));
    row.push_back(2);
    rows.push_back(row);
  }
  auto batch = make_batch(rows, 0, 1, 16);
  std::vector<std::int32_t> targets(batch.ids.size(), nn::kIgnoreIndex);
  for (std::size_t i = 0; i < batch.ids.size(); ++i) {
    if (batch.ids[i] >= 4) {
      targets[i] = batch.ids[i];
      batch.ids[i] = 3;
    }
  }
  Graph<float> g;
  auto vars = bind_params(g, params);
  Var h = encoder_forward(g, params, vars, batch);
  float loss = g.value(nn::cross_entropy(g, mlm_logits(g, params, vars, h), targets))[0];
  CHECK(loss == doctest::Approx(std::log(500.0)).epsilon(0.05));
}

TEST_CASE("argmax ties go low") {
  std::vector<float> v{1.0f, 3.0f, 3.0f};
  CHECK(argmax<float>(v) == 1);
}

TEST_CASE("classifier head reset") {
  auto params = init_params<float>(tiny_config(), 1);
  auto before = params.get("layers.0.ffn.input.weight").value;
  params.reset_classifier(5, 9);
  CHECK(params.config().num_classes == 5);
  CHECK(params.get("classifier.weight").value.shape == nn::Shape{8, 5});
  CHECK(params.get("layers.0.ffn.input.weight").value == before);
}

TEST_CASE("encoder files roundtrip") {
  auto dir = std::filesystem::temp_directory_path() / "codelid_encoder_test";
  std::filesystem::remove_all(dir);
  auto params = init_params<float>(tiny_config(), 1);
  save_encoder(dir, params);
  auto back = load_encoder(dir);
  CHECK(back == params);

  auto blob = read_file(dir / "params.bin");
  write_file(dir / "params.bin", blob.substr(0, blob.size() - 4));
  CHECK_THROWS_AS(load_encoder(dir), DataError);
  std::filesystem::remove_all(dir);
}
