#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "codelid/error.hpp"
#include "codelid/json_io.hpp"
#include "codelid/nn/ops.hpp"
#include "codelid/training.hpp"

using namespace codelid;
using nn::Parameter;
using nn::Tensor;

namespace {

std::vector<Parameter<double>> scalar_params(std::initializer_list<const char*> names, double value, double grad) {
  std::vector<Parameter<double>> ps;
  for (const char* n : names) {
    Parameter<double> p(n, Tensor<double>({1}, {value}));
    p.grad[0] = grad;
    ps.push_back(std::move(p));
  }
  return ps;
}

OptimizerHyper hand_hyper(double wd) {
  OptimizerHyper h;
  h.lr_peak = 0.1;
  h.weight_decay = wd;
  h.warmup_steps = 0;
  h.total_steps = 10;
  return h;
}

Corpus toy_corpus(std::size_t per_class) {
  Corpus c;
  for (std::size_t i = 0; i < per_class; ++i) {
    c.snippets.push_back({"SELECT name FROM users WHERE id = " + std::to_string(i) + ";", "SQL"});
    c.snippets.push_back({"def f" + std::to_string(i) + "(x):\n    return x + " + std::to_string(i), "Python"});
  }
  c.labels = LabelSet({"Python", "SQL"});
  return c;
}

EncoderConfig small_config(std::size_t vocab) {
  EncoderConfig c;
  c.vocab_size = vocab;
  c.max_len = 32;
  c.model_dim = 16;
  c.num_heads = 2;
  c.num_layers = 1;
  c.ff_dim = 32;
  c.num_classes = 2;
  c.dropout = 0.1;
  return c;
}

}  // namespace

TEST_CASE("adamw hand-computed single step") {
  // t=1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  SUBCASE("no decay") {
    auto ps = scalar_params({"w"}, 1.0, 1.0);
    auto part = partition_params<double>(ps);
    auto state = OptState<double>::zeros(ps);
    adamw_step<double>(ps, part, state, hand_hyper(0.0), 0.1);
    CHECK(state.step == 1);
    CHECK(std::abs(state.m[0][0] - 0.1) < 1e-15);
    CHECK(std::abs(state.v[0][0] - 0.001) < 1e-15);
    CHECK(std::abs(ps[0].value[0] - (1.0 - 0.1 / (1.0 + 1e-8))) < 1e-12);
    CHECK(std::abs(ps[0].value[0] - 0.9) < 1e-8);
  }
  SUBCASE("decoupled decay") {
    auto ps = scalar_params({"w"}, 1.0, 1.0);
    auto part = partition_params<double>(ps);
    auto state = OptState<double>::zeros(ps);
    adamw_step<double>(ps, part, state, hand_hyper(0.01), 0.1);
    CHECK(std::abs(ps[0].value[0] - (1.0 - 0.1 / (1.0 + 1e-8) - 0.1 * 0.01)) < 1e-12);
    CHECK(std::abs(ps[0].value[0] - 0.899) < 1e-8);
  }
  SUBCASE("negligible eps gives the rounded values") {
    auto hyper = hand_hyper(0.0);
    hyper.eps = 1e-16;
    auto ps = scalar_params({"w"}, 1.0, 1.0);
    auto part = partition_params<double>(ps);
    auto state = OptState<double>::zeros(ps);
    adamw_step<double>(ps, part, state, hyper, 0.1);
    CHECK(std::abs(ps[0].value[0] - 0.9) < 1e-12);
  }
}

TEST_CASE("adamw invariants") {
  SUBCASE("zero gradient and zero lr") {
    auto ps = scalar_params({"w", "b.bias"}, 0.7, 0.0);
    auto part = partition_params<double>(ps);
    auto state = OptState<double>::zeros(ps);
    adamw_step<double>(ps, part, state, hand_hyper(0.0), 0.1);
    CHECK(ps[0].value[0] == 0.7);
    CHECK(ps[1].value[0] == 0.7);
    ps[0].grad[0] = 3.0;
    adamw_step<double>(ps, part, state, hand_hyper(0.5), 0.0);
    CHECK(ps[0].value[0] == 0.7);
  }
  SUBCASE("no_decay updates ignore weight_decay") {
    auto run = [](double wd) {
      auto ps = scalar_params({"w", "x.bias", "y_norm.weight"}, 0.5, 0.3);
      auto part = partition_params<double>(ps);
      auto state = OptState<double>::zeros(ps);
      for (int i = 0; i < 3; ++i) adamw_step<double>(ps, part, state, hand_hyper(wd), 0.05);
      return ps;
    };
    auto a = run(0.0), b = run(0.3);
    CHECK(a[1].value[0] == b[1].value[0]);
    CHECK(a[2].value[0] == b[2].value[0]);
    CHECK(a[0].value[0] != b[0].value[0]);
  }
  SUBCASE("freeze_no_decay leaves exempt tensors alone") {
    auto ps = scalar_params({"w", "x.bias"}, 0.5, 0.3);
    auto part = partition_params<double>(ps);
    auto state = OptState<double>::zeros(ps);
    auto hyper = hand_hyper(0.01);
    hyper.freeze_no_decay = true;
    adamw_step<double>(ps, part, state, hyper, 0.1);
    CHECK(ps[1].value[0] == 0.5);
    CHECK(ps[0].value[0] != 0.5);
  }
  SUBCASE("non-finite gradient") {
    auto ps = scalar_params({"w"}, 0.5, std::nan(""));
    auto part = partition_params<double>(ps);
    auto state = OptState<double>::zeros(ps);
    CHECK_THROWS_AS(adamw_step<double>(ps, part, state, hand_hyper(0.0), 0.1), DataError);
    CHECK(ps[0].value[0] == 0.5);
  }
}

TEST_CASE("parameter partition") {
  EncoderConfig c = small_config(300);
  auto params = init_params<float>(c, 1);
  auto part = partition_params<float>(params.tensors());
  // One layer: 2 norms x (weight, bias) + 6 linear biases; final norm 2; classifier bias 1.
  CHECK(part.no_decay.size() == 4 + 6 + 2 + 1);
  CHECK(part.decay.size() + part.no_decay.size() == params.tensors().size());
  std::set<std::size_t> all(part.decay.begin(), part.decay.end());
  for (auto i : part.no_decay) CHECK(all.insert(i).second);
  for (auto i : part.decay) CHECK(params.tensors()[i].name.find("bias") == std::string::npos);

  std::vector<std::string> emb_only{"embeddings.token.weight", "embeddings.position.weight"};
  CHECK(partition_params(emb_only).no_decay.empty());
  std::vector<std::string> unnamed{"w", ""};
  CHECK_THROWS_AS(partition_params(unnamed), std::invalid_argument);
}

TEST_CASE("learning-rate schedule") {
  OptimizerHyper h;
  h.lr_peak = 1e-3;
  h.warmup_steps = 100;
  h.total_steps = 1100;
  CHECK(lr_at(0, h) == 0.0);
  CHECK(lr_at(50, h) == doctest::Approx(5e-4));
  CHECK(lr_at(100, h) == 1e-3);
  CHECK(lr_at(600, h) == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(lr_at(1100, h) == 0.0);
  CHECK_THROWS_AS(lr_at(1101, h), std::out_of_range);
  h.warmup_steps = 2000;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
}

TEST_CASE("masking") {
  std::vector<std::vector<TokenId>> rows;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<TokenId> tok(4, 999);
  for (int r = 0; r < 1000; ++r) {
    std::vector<TokenId> row{0};
    for (int i = 0; i < 100; ++i) row.push_back(tok(rng));
    row.push_back(2);
    rows.push_back(std::move(row));
  }
  rows.push_back({0, 5, 2});
  auto batch = make_batch(rows, 0, 1, 128);
  MaskVocabulary vocab{1000, 3, {0, 1, 2, 3}};

  SUBCASE("proportions") {
    auto m = mask_for_mlm(batch, MaskingPolicy{}, vocab, 17);
    std::size_t real = 0, masked = 0, kept = 0;
    for (std::size_t i = 0; i < batch.ids.size(); ++i) {
      if (batch.mask[i] && batch.ids[i] >= 4) ++real;
      if (m.targets[i] == nn::kIgnoreIndex) {
        CHECK(m.batch.ids[i] == batch.ids[i]);
        continue;
      }
      CHECK(batch.ids[i] >= 4);
      CHECK(m.targets[i] == batch.ids[i]);
      masked += m.batch.ids[i] == 3;
      kept += m.batch.ids[i] == batch.ids[i];
      CHECK(m.batch.ids[i] != 0);
      CHECK(m.batch.ids[i] != 1);
      CHECK(m.batch.ids[i] != 2);
    }
    const double frac = static_cast<double>(m.selected) / static_cast<double>(real);
    CHECK(real >= 100000);
    CHECK(frac >= 0.14);
    CHECK(frac <= 0.16);
    const double mask_frac = static_cast<double>(masked) / static_cast<double>(m.selected);
    CHECK(mask_frac >= 0.78);
    CHECK(mask_frac <= 0.82);
    CHECK(static_cast<double>(kept) / m.selected > 0.08);
    auto again = mask_for_mlm(batch, MaskingPolicy{}, vocab, 17);
    CHECK(again.batch.ids == m.batch.ids);
  }
  SUBCASE("zero probability and invalid policy") {
    MaskingPolicy none{0.0, 0.8, 0.1, 0.1};
    auto m = mask_for_mlm(batch, none, vocab, 1);
    CHECK(m.selected == 0);
    CHECK(m.batch.ids == batch.ids);
    MaskingPolicy bad{0.15, 0.8, 0.1, 0.2};
    CHECK_THROWS_AS(mask_for_mlm(batch, bad, vocab, 1), std::invalid_argument);
    MaskingPolicy all{1.0, 1.0, 0.0, 0.0};
    auto everything = mask_for_mlm(batch, all, vocab, 1);
    for (std::size_t i = 0; i < batch.ids.size(); ++i) {
      if (batch.ids[i] < 4) CHECK(everything.targets[i] == nn::kIgnoreIndex);
    }
  }
}

TEST_CASE("rng streams are independent and reproducible") {
  auto a = make_rng(1, 2, 3)();
  CHECK(make_rng(1, 2, 3)() == a);
  CHECK(make_rng(1, 2, 4)() != a);
  CHECK(make_rng(1, 3, 3)() != a);
  CHECK(make_rng(2, 2, 3)() != a);
}

TEST_CASE("pretraining loop") {
  Corpus corpus = toy_corpus(40);
  std::vector<std::string> texts;
  for (const auto& s : corpus.snippets) texts.push_back(s.text);
  auto tok = train_bpe(texts, 300);
  auto config = small_config(tok.vocab_size());
  OptimizerHyper hyper;
  hyper.lr_peak = 3e-3;
  hyper.warmup_steps = 5;
  hyper.total_steps = 60;
  TrainOptions opts{16, 3, {}};
  std::size_t calls = 0;
  opts.on_step = [&](std::size_t, double, double) { ++calls; };
  auto r = pretrain_mlm(corpus, tok, config, hyper, MaskingPolicy{}, opts);
  CHECK(calls == 60);
  REQUIRE(r.history.loss.size() == 60);
  CHECK(r.history.loss.front() == doctest::Approx(std::log(static_cast<double>(tok.vocab_size()))).epsilon(0.05));
  double head = 0, tail = 0;
  for (int i = 0; i < 10; ++i) {
    head += r.history.loss[i];
    tail += r.history.loss[50 + i];
  }
  CHECK(tail < head);
  CHECK(r.state.step == 60);
  CHECK_FALSE(r.history.epoch_accuracy.empty());

  auto again = pretrain_mlm(corpus, tok, config, hyper, MaskingPolicy{}, TrainOptions{16, 3, {}});
  CHECK(again.history.loss == r.history.loss);
  CHECK(again.params == r.params);

  auto csv = r.history.to_csv();
  CHECK(csv.rfind("step,lr,loss\n1,", 0) == 0);

  auto wrong = config;
  wrong.vocab_size += 1;
  CHECK_THROWS_AS(pretrain_mlm(corpus, tok, wrong, hyper, MaskingPolicy{}, opts), std::invalid_argument);

  SUBCASE("checkpoint roundtrip") {
    auto dir = std::filesystem::temp_directory_path() / "codelid_ckpt_test";
    std::filesystem::remove_all(dir);
    save_checkpoint(dir, r.params, r.state);
    auto params = load_encoder(dir);
    CHECK(params == r.params);
    auto state = load_optimizer_state(dir, params);
    CHECK(state.step == r.state.step);
    CHECK(state.m == r.state.m);
    CHECK(state.v == r.state.v);
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("fine-tuning memorizes a small training set") {
  Corpus corpus = toy_corpus(16);
  std::vector<std::string> texts;
  for (const auto& s : corpus.snippets) texts.push_back(s.text);
  auto tok = train_bpe(texts, 300);
  auto config = small_config(tok.vocab_size());
  config.dropout = 0.0;
  OptimizerHyper hyper;
  hyper.lr_peak = 3e-3;
  hyper.warmup_steps = 10;
  hyper.total_steps = 200;
  auto result = finetune(corpus, tok, init_params<float>(config, 1), hyper, TrainOptions{16, 5, {}});
  CHECK(result.history.loss.front() == doctest::Approx(std::log(2.0)).epsilon(0.05));
  std::size_t correct = 0;
  auto preds = result.model.predict_all(texts, 7);
  auto ids = corpus.label_ids();
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == ids[i];
  CHECK(correct == corpus.size());
  CHECK(result.model.predict(texts[0]) == preds[0]);
  auto proba = result.model.predict_proba(texts[1]);
  CHECK(proba.size() == 2);
  CHECK(proba[0] + proba[1] == doctest::Approx(1.0));

  auto again = finetune(corpus, tok, init_params<float>(config, 1), hyper, TrainOptions{16, 5, {}});
  CHECK(again.model.params() == result.model.params());

  auto dir = std::filesystem::temp_directory_path() / "codelid_classifier_test";
  std::filesystem::remove_all(dir);
  result.model.save(dir);
  auto loaded = ClassifierModel::load(dir);
  CHECK(loaded.params() == result.model.params());
  CHECK(loaded.labels() == result.model.labels());
  CHECK(loaded.predict_all(texts) == preds);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config json") {
  nlohmann::json j = {{"lr_peak", 0.5}, {"total_steps", 7}, {"warmup_steps", 1}};
  auto h = j.get<OptimizerHyper>();
  CHECK(h.lr_peak == 0.5);
  CHECK(h.total_steps == 7);
  CHECK(h.beta1 == 0.9);
  nlohmann::json typo = {{"lr_peek", 0.5}};
  CHECK_THROWS_AS(typo.get<OptimizerHyper>(), DataError);
  nlohmann::json back = h;
  CHECK(back.get<OptimizerHyper>().lr_peak == 0.5);
}
