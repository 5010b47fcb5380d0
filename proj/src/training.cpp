#include "codelid/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "codelid/error.hpp"
#include "codelid/json_io.hpp"
#include "codelid/nn/ops.hpp"

namespace codelid {

using nn::Graph;
using nn::Parameter;
using nn::Tensor;
using nn::Var;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

namespace {

enum Stream : std::uint64_t { kInit = 1, kShuffle = 2, kDropout = 3, kMasking = 4, kHead = 5 };

}  // namespace

void MaskingPolicy::validate() const {
  for (double p : {mask_prob, replace_mask, replace_random, keep}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("masking probabilities must lie in [0, 1]");
  }
  if (std::abs(replace_mask + replace_random + keep - 1.0) > 1e-9) {
    throw std::invalid_argument("replace_mask + replace_random + keep must equal 1");
  }
}

MaskVocabulary MaskVocabulary::from(const BpeModel& tokenizer) {
  auto mask = tokenizer.mask_id();
  if (!mask) throw std::invalid_argument("tokenizer has no <mask> token");
  return {tokenizer.vocab_size(), *mask, tokenizer.special_ids()};
}

MaskedBatch mask_for_mlm(const TokenBatch& batch, const MaskingPolicy& policy, const MaskVocabulary& vocab,
                         std::uint64_t seed) {
  policy.validate();
  std::unordered_set<TokenId> protected_ids(vocab.protected_ids.begin(), vocab.protected_ids.end());
  protected_ids.insert(batch.bos_id);
  protected_ids.insert(batch.pad_id);
  std::vector<TokenId> candidates;
  for (std::size_t id = 0; id < vocab.vocab_size; ++id) {
    if (!protected_ids.contains(static_cast<TokenId>(id))) candidates.push_back(static_cast<TokenId>(id));
  }
  if (candidates.empty()) throw std::invalid_argument("vocabulary has no maskable tokens");

  MaskedBatch out{batch, std::vector<std::int32_t>(batch.ids.size(), nn::kIgnoreIndex), 0};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  for (std::size_t i = 0; i < batch.ids.size(); ++i) {
    const TokenId id = batch.ids[i];
    if (!batch.mask[i] || protected_ids.contains(id)) continue;
    if (unit(rng) >= policy.mask_prob) continue;
    out.targets[i] = id;
    ++out.selected;
    const double r = unit(rng);
    if (r < policy.replace_mask) {
      out.batch.ids[i] = vocab.mask_id;
    } else if (r < policy.replace_mask + policy.replace_random) {
      out.batch.ids[i] = candidates[pick(rng)];
    }
  }
  return out;
}

void OptimizerHyper::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("optimizer betas must lie in (0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("optimizer eps must be positive");
  if (!(lr_peak >= 0.0) || !(weight_decay >= 0.0)) throw std::invalid_argument("lr_peak and weight_decay must be >= 0");
  if (warmup_steps > total_steps) throw std::invalid_argument("warmup_steps must not exceed total_steps");
}

template <typename T>
OptState<T> OptState<T>::zeros(std::span<const Parameter<T>> params) {
  OptState<T> s;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.shape);
    s.v.emplace_back(p.value.shape);
  }
  return s;
}

ParamPartition partition_params(std::span<const std::string> names) {
  ParamPartition part;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& n = names[i];
    if (n.empty()) throw std::invalid_argument("parameter " + std::to_string(i) + " has no name");
    const bool exempt = n.ends_with(".bias") || n.ends_with("_norm.weight");
    (exempt ? part.no_decay : part.decay).push_back(i);
  }
  return part;
}

template <typename T>
void adamw_step(std::span<Parameter<T>> params, const ParamPartition& partition, OptState<T>& state,
                const OptimizerHyper& hyper, double lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("optimizer state does not match parameters");
  }
  for (const auto& p : params) {
    if (p.grad.shape != p.value.shape) throw std::invalid_argument("gradient shape mismatch for " + p.name);
    for (T g : p.grad.data) {
      if (!std::isfinite(g)) throw DataError("non-finite gradient in " + p.name);
    }
  }

  ++state.step;
  const T b1 = static_cast<T>(hyper.beta1);
  const T b2 = static_cast<T>(hyper.beta2);
  const T bc1 = T(1) - static_cast<T>(std::pow(hyper.beta1, static_cast<double>(state.step)));
  const T bc2 = T(1) - static_cast<T>(std::pow(hyper.beta2, static_cast<double>(state.step)));
  const T eps = static_cast<T>(hyper.eps);
  const T step_lr = static_cast<T>(lr);

  auto update = [&](std::size_t idx, T wd) {
    auto& p = params[idx];
    auto& m = state.m[idx];
    auto& v = state.v[idx];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const T m_hat = m[i] / bc1;
      const T v_hat = v[i] / bc2;
      p.value[i] -= step_lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * p.value[i]);
    }
  };
  for (std::size_t idx : partition.decay) update(idx, static_cast<T>(hyper.weight_decay));
  if (!hyper.freeze_no_decay) {
    for (std::size_t idx : partition.no_decay) update(idx, T(0));
  }
}

double lr_at(std::size_t step, const OptimizerHyper& hyper) {
  if (step > hyper.total_steps) {
    throw std::out_of_range("step " + std::to_string(step) + " beyond total_steps " + std::to_string(hyper.total_steps));
  }
  if (step < hyper.warmup_steps) {
    return hyper.lr_peak * static_cast<double>(step) / static_cast<double>(hyper.warmup_steps);
  }
  if (hyper.total_steps == hyper.warmup_steps) return hyper.lr_peak;
  return hyper.lr_peak * static_cast<double>(hyper.total_steps - step) /
         static_cast<double>(hyper.total_steps - hyper.warmup_steps);
}

std::string TrainHistory::to_csv() const {
  std::string out = "step,lr,loss\n";
  char buf[96];
  for (std::size_t i = 0; i < loss.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", i + 1, i < lr.size() ? lr[i] : 0.0, loss[i]);
    out += buf;
  }
  return out;
}

namespace {

// Cycles through a seeded permutation of [0, n), reshuffling per epoch.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(make_rng(seed, kShuffle)) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
  }

  // Returns the indices of the next batch and whether an epoch ended before it.
  std::vector<std::size_t> next(std::size_t batch_size, bool& epoch_ended) {
    epoch_ended = false;
    std::vector<std::size_t> out;
    const std::size_t size = std::min(batch_size, order_.size());
    while (out.size() < size) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
        epoch_ended = true;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::mt19937_64 rng_;
};

std::vector<std::vector<TokenId>> frame_corpus(const Corpus& corpus, const BpeModel& tokenizer, std::size_t max_len) {
  std::vector<std::vector<TokenId>> rows;
  rows.reserve(corpus.size());
  for (const auto& s : corpus.snippets) rows.push_back(frame_tokens(tokenizer, s.text, max_len));
  return rows;
}

void check_tokenizer(const EncoderConfig& config, const BpeModel& tokenizer) {
  if (config.vocab_size != tokenizer.vocab_size()) {
    throw std::invalid_argument("encoder vocab_size " + std::to_string(config.vocab_size) +
                                " does not match tokenizer vocabulary " + std::to_string(tokenizer.vocab_size()));
  }
  if (!tokenizer.bos_id() || !tokenizer.eos_id() || !tokenizer.pad_id()) {
    throw std::invalid_argument("tokenizer lacks <s>, </s> or <pad>");
  }
}

TokenBatch gather_batch(const std::vector<std::vector<TokenId>>& rows, std::span<const std::size_t> idx,
                        const BpeModel& tokenizer, std::size_t max_len) {
  std::vector<std::vector<TokenId>> picked;
  picked.reserve(idx.size());
  for (auto i : idx) picked.push_back(rows[i]);
  return make_batch(picked, *tokenizer.bos_id(), *tokenizer.pad_id(), max_len);
}

using Clock = std::chrono::steady_clock;

}  // namespace

PretrainResult pretrain_mlm(const Corpus& corpus, const BpeModel& tokenizer, const EncoderConfig& config,
                            const OptimizerHyper& hyper, const MaskingPolicy& policy, const TrainOptions& options,
                            const EncoderParams<float>* init) {
  config.validate();
  hyper.validate();
  policy.validate();
  check_tokenizer(config, tokenizer);
  if (corpus.size() == 0) throw std::invalid_argument("pretraining corpus is empty");
  if (options.batch_size == 0) throw std::invalid_argument("batch_size must be positive");

  EncoderParams<float> params = init ? *init : init_params<float>(config, make_rng(options.seed, kInit)());
  if (!(params.config() == config)) throw std::invalid_argument("initial parameters do not match the encoder config");
  auto state = OptState<float>::zeros(params.tensors());
  const auto partition = partition_params<float>(params.tensors());
  const auto vocab = MaskVocabulary::from(tokenizer);
  const auto rows = frame_corpus(corpus, tokenizer, config.max_len);

  BatchSampler sampler(rows.size(), options.seed);
  auto dropout_rng = make_rng(options.seed, kDropout);
  TrainHistory history;
  std::size_t correct = 0, seen = 0;

  for (std::size_t step = 1; step <= hyper.total_steps; ++step) {
    const auto started = Clock::now();
    bool epoch_ended = false;
    auto idx = sampler.next(options.batch_size, epoch_ended);
    if (epoch_ended && seen > 0) {
      history.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(seen));
      correct = seen = 0;
    }
    const double lr = lr_at(step, hyper);
    auto masked = mask_for_mlm(gather_batch(rows, idx, tokenizer, config.max_len), policy, vocab,
                               make_rng(options.seed, kMasking, step)());
    double loss_value = 0.0;
    if (masked.selected > 0) {
      std::vector<std::size_t> positions;
      std::vector<std::int32_t> targets;
      for (std::size_t i = 0; i < masked.targets.size(); ++i) {
        if (masked.targets[i] != nn::kIgnoreIndex) {
          positions.push_back(i);
          targets.push_back(masked.targets[i]);
        }
      }
      params.zero_grad();
      Graph<float> g;
      auto vars = bind_params(g, params);
      Var hidden = encoder_forward(g, params, vars, masked.batch, {true, &dropout_rng});
      Var logits = mlm_logits(g, params, vars, nn::gather_rows(g, hidden, positions));
      Var loss = nn::cross_entropy(g, logits, targets);
      loss_value = g.value(loss)[0];

      const auto& L = g.value(logits);
      for (std::size_t r = 0; r < targets.size(); ++r) {
        auto row = std::span<const float>(L.ptr() + r * L.cols(), L.cols());
        correct += argmax(row) == static_cast<std::size_t>(targets[r]);
      }
      seen += targets.size();

      g.backward(loss);
      adamw_step<float>(params.tensors(), partition, state, hyper, lr);
    }
    history.loss.push_back(loss_value);
    history.lr.push_back(lr);
    history.step_seconds.push_back(std::chrono::duration<double>(Clock::now() - started).count());
    if (options.on_step) options.on_step(step, lr, loss_value);
  }
  if (seen > 0) history.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(seen));
  return {std::move(params), std::move(state), std::move(history)};
}

ClassifierModel::ClassifierModel(EncoderParams<float> params, LabelSet labels, BpeModel tokenizer)
    : params_(std::move(params)), labels_(std::move(labels)), tokenizer_(std::move(tokenizer)) {
  if (params_.config().num_classes != labels_.size()) {
    throw DataError("classifier head has " + std::to_string(params_.config().num_classes) + " outputs but " +
                    std::to_string(labels_.size()) + " labels");
  }
  check_tokenizer(params_.config(), tokenizer_);
}

std::vector<float> ClassifierModel::predict_proba(std::string_view text) const {
  std::vector<std::vector<TokenId>> rows{frame_tokens(tokenizer_, text, params_.config().max_len)};
  auto batch = make_batch(rows, *tokenizer_.bos_id(), *tokenizer_.pad_id(), params_.config().max_len);
  auto logits = classify_logits(params_, batch);
  return nn::softmax<float>(logits.data);
}

std::size_t ClassifierModel::predict(std::string_view text) const {
  auto p = predict_proba(text);
  return argmax<float>(p);
}

std::vector<std::size_t> ClassifierModel::predict_all(std::span<const std::string> texts, std::size_t batch_size) const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  std::vector<std::size_t> out;
  out.reserve(texts.size());
  const std::size_t max_len = params_.config().max_len;
  for (std::size_t start = 0; start < texts.size(); start += batch_size) {
    const std::size_t end = std::min(texts.size(), start + batch_size);
    std::vector<std::vector<TokenId>> rows;
    for (std::size_t i = start; i < end; ++i) rows.push_back(frame_tokens(tokenizer_, texts[i], max_len));
    auto logits = classify_logits(params_, make_batch(rows, *tokenizer_.bos_id(), *tokenizer_.pad_id(), max_len));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.push_back(argmax(std::span<const float>(logits.ptr() + r * logits.cols(), logits.cols())));
    }
  }
  return out;
}

void ClassifierModel::save(const std::filesystem::path& dir) const {
  save_encoder(dir, params_);
  tokenizer_.save(dir);
  write_json(dir / "labels.json", nlohmann::json{{"labels", labels_.names()}});
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& dir) {
  auto labels = read_json(dir / "labels.json").at("labels").get<std::vector<std::string>>();
  return ClassifierModel(load_encoder(dir), LabelSet(std::move(labels)), BpeModel::load(dir));
}

FinetuneResult finetune(const Corpus& train, const BpeModel& tokenizer, EncoderParams<float> params,
                        const OptimizerHyper& hyper, const TrainOptions& options) {
  hyper.validate();
  check_tokenizer(params.config(), tokenizer);
  if (train.size() == 0) throw std::invalid_argument("fine-tuning corpus is empty");
  if (options.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  const auto label_ids = train.label_ids();

  params.reset_classifier(train.labels.size(), make_rng(options.seed, kHead)());
  const std::size_t max_len = params.config().max_len;
  auto state = OptState<float>::zeros(params.tensors());
  const auto partition = partition_params<float>(params.tensors());
  const auto rows = frame_corpus(train, tokenizer, max_len);

  BatchSampler sampler(rows.size(), options.seed);
  auto dropout_rng = make_rng(options.seed, kDropout);
  TrainHistory history;
  std::size_t correct = 0, seen = 0;

  for (std::size_t step = 1; step <= hyper.total_steps; ++step) {
    const auto started = Clock::now();
    bool epoch_ended = false;
    auto idx = sampler.next(options.batch_size, epoch_ended);
    if (epoch_ended && seen > 0) {
      history.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(seen));
      correct = seen = 0;
    }
    const double lr = lr_at(step, hyper);
    TokenBatch batch = gather_batch(rows, idx, tokenizer, max_len);
    std::vector<std::int32_t> targets;
    for (auto i : idx) targets.push_back(static_cast<std::int32_t>(label_ids[i]));

    params.zero_grad();
    Graph<float> g;
    auto vars = bind_params(g, params);
    Var hidden = encoder_forward(g, params, vars, batch, {true, &dropout_rng});
    Var logits = classify(g, params, vars, batch, hidden);
    Var loss = nn::cross_entropy(g, logits, targets);
    const double loss_value = g.value(loss)[0];

    const auto& L = g.value(logits);
    for (std::size_t r = 0; r < targets.size(); ++r) {
      correct += argmax(std::span<const float>(L.ptr() + r * L.cols(), L.cols())) ==
                 static_cast<std::size_t>(targets[r]);
    }
    seen += targets.size();

    g.backward(loss);
    adamw_step<float>(params.tensors(), partition, state, hyper, lr);

    history.loss.push_back(loss_value);
    history.lr.push_back(lr);
    history.step_seconds.push_back(std::chrono::duration<double>(Clock::now() - started).count());
    if (options.on_step) options.on_step(step, lr, loss_value);
  }
  if (seen > 0) history.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(seen));
  return {ClassifierModel(std::move(params), train.labels, tokenizer), std::move(state), std::move(history)};
}

template struct OptState<float>;
template struct OptState<double>;
template void adamw_step<float>(std::span<Parameter<float>>, const ParamPartition&, OptState<float>&,
                                const OptimizerHyper&, double);
template void adamw_step<double>(std::span<Parameter<double>>, const ParamPartition&, OptState<double>&,
                                 const OptimizerHyper&, double);

}  // namespace codelid
