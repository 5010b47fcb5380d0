#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "codelid/bpe.hpp"
#include "codelid/corpus.hpp"
#include "codelid/nn/tensor.hpp"
#include "codelid/transformer.hpp"

namespace codelid {

// Independent generator for (seed, stream[, index]).
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

struct MaskingPolicy {
  double mask_prob = 0.15;
  double replace_mask = 0.8;
  double replace_random = 0.1;
  double keep = 0.1;

  void validate() const;
};

// What the masker needs to know about the vocabulary.
struct MaskVocabulary {
  std::size_t vocab_size = 0;
  TokenId mask_id = 0;
  std::vector<TokenId> protected_ids;  // never selected, never sampled

  static MaskVocabulary from(const BpeModel& tokenizer);
};

struct MaskedBatch {
  TokenBatch batch;
  std::vector<std::int32_t> targets;  // original id at selected positions, nn::kIgnoreIndex elsewhere
  std::size_t selected = 0;
};

MaskedBatch mask_for_mlm(const TokenBatch& batch, const MaskingPolicy& policy, const MaskVocabulary& vocab,
                         std::uint64_t seed);

struct OptimizerHyper {
  double lr_peak = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 100;
  std::size_t total_steps = 1000;
  // Literal reading of the bias/LayerNorm.weight exclusion: skip those
  // tensors entirely instead of only exempting them from decay.
  bool freeze_no_decay = false;

  void validate() const;
};

template <typename T>
struct OptState {
  std::vector<nn::Tensor<T>> m;
  std::vector<nn::Tensor<T>> v;
  std::uint64_t step = 0;

  static OptState zeros(std::span<const nn::Parameter<T>> params);
};

struct ParamPartition {
  std::vector<std::size_t> decay;
  std::vector<std::size_t> no_decay;
};

// Biases (".bias") and layer-norm gains ("_norm.weight") go to no_decay,
// everything else to decay. Throws std::invalid_argument for empty names.
ParamPartition partition_params(std::span<const std::string> names);

template <typename T>
ParamPartition partition_params(std::span<const nn::Parameter<T>> params) {
  std::vector<std::string> names;
  for (const auto& p : params) names.push_back(p.name);
  return partition_params(names);
}

// One decoupled-weight-decay Adam update from the accumulated grads:
//   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
//   p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)     (wd = 0 for no_decay)
// Throws DataError on a non-finite gradient.
template <typename T>
void adamw_step(std::span<nn::Parameter<T>> params, const ParamPartition& partition, OptState<T>& state,
                const OptimizerHyper& hyper, double lr);

// Linear warmup 0 -> lr_peak over warmup_steps, then linear decay to 0 at
// total_steps.
double lr_at(std::size_t step, const OptimizerHyper& hyper);

struct TrainHistory {
  std::vector<double> loss;
  std::vector<double> lr;
  std::vector<double> step_seconds;
  std::vector<double> epoch_accuracy;

  // "step,lr,loss" with 1-based steps.
  std::string to_csv() const;
};

using StepCallback = std::function<void(std::size_t step, double lr, double loss)>;

struct TrainOptions {
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  StepCallback on_step;
};

struct PretrainResult {
  EncoderParams<float> params;
  OptState<float> state;
  TrainHistory history;
};

// Masked-LM training over shuffled fixed-size batches for hyper.total_steps
// steps. Starts from `init` when given, otherwise from init_params(config).
PretrainResult pretrain_mlm(const Corpus& corpus, const BpeModel& tokenizer, const EncoderConfig& config,
                            const OptimizerHyper& hyper, const MaskingPolicy& policy, const TrainOptions& options,
                            const EncoderParams<float>* init = nullptr);

// Encoder + classifier head + the tokenizer and label order it was trained
// with. Immutable after training; predictions may run concurrently.
class ClassifierModel {
 public:
  ClassifierModel(EncoderParams<float> params, LabelSet labels, BpeModel tokenizer);

  const EncoderParams<float>& params() const { return params_; }
  const LabelSet& labels() const { return labels_; }
  const BpeModel& tokenizer() const { return tokenizer_; }

  std::vector<float> predict_proba(std::string_view text) const;
  std::size_t predict(std::string_view text) const;
  // Batched prediction, results in input order.
  std::vector<std::size_t> predict_all(std::span<const std::string> texts, std::size_t batch_size = 32) const;

  // Encoder files, tokenizer files and labels.json.
  void save(const std::filesystem::path& dir) const;
  static ClassifierModel load(const std::filesystem::path& dir);

 private:
  EncoderParams<float> params_;
  LabelSet labels_;
  BpeModel tokenizer_;
};

struct FinetuneResult {
  ClassifierModel model;
  OptState<float> state;
  TrainHistory history;
};

// Cross-entropy training of encoder + a freshly initialized classifier head
// (one output per label of `train`) for hyper.total_steps steps.
FinetuneResult finetune(const Corpus& train, const BpeModel& tokenizer, EncoderParams<float> params,
                        const OptimizerHyper& hyper, const TrainOptions& options);

// Checkpoint = encoder files + optimizer.bin (m then v per tensor, float32
// little-endian in manifest order) + checkpoint.json with the step counter.
void save_checkpoint(const std::filesystem::path& dir, const EncoderParams<float>& params,
                     const OptState<float>& state);
OptState<float> load_optimizer_state(const std::filesystem::path& dir, const EncoderParams<float>& params);

}  // namespace codelid
