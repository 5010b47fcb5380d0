#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "codelid/bpe.hpp"
#include "codelid/nn/graph.hpp"
#include "codelid/nn/tensor.hpp"

namespace codelid {

struct EncoderConfig {
  std::size_t vocab_size = 8000;
  std::size_t max_len = 256;
  std::size_t model_dim = 128;
  std::size_t num_heads = 4;
  std::size_t num_layers = 2;
  std::size_t ff_dim = 512;
  double dropout = 0.1;
  std::size_t num_classes = 19;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

// Parameter layout in manifest order. Names ending in ".bias" and the
// "*_norm.weight" gains form the no-decay group used by the optimizer.
struct TensorSpec {
  std::string name;
  nn::Shape shape;
};
std::vector<TensorSpec> encoder_layout(const EncoderConfig& config);

template <typename T>
class EncoderParams {
 public:
  struct LayerSlots {
    std::size_t attention_norm_weight, attention_norm_bias;
    std::size_t query_weight, query_bias, key_weight, key_bias, value_weight, value_bias;
    std::size_t output_weight, output_bias;
    std::size_t ffn_norm_weight, ffn_norm_bias;
    std::size_t ffn_in_weight, ffn_in_bias, ffn_out_weight, ffn_out_bias;
  };

  EncoderParams() = default;
  // Zero-filled tensors in layout order.
  explicit EncoderParams(EncoderConfig config);

  const EncoderConfig& config() const { return config_; }
  std::vector<nn::Parameter<T>>& tensors() { return tensors_; }
  const std::vector<nn::Parameter<T>>& tensors() const { return tensors_; }
  nn::Parameter<T>& get(const std::string& name);
  const nn::Parameter<T>& get(const std::string& name) const;
  std::size_t scalar_count() const;

  std::size_t token_embedding() const { return 0; }
  std::size_t position_embedding() const { return 1; }
  const LayerSlots& layer(std::size_t i) const { return layers_.at(i); }
  std::size_t final_norm_weight() const { return final_norm_; }
  std::size_t final_norm_bias() const { return final_norm_ + 1; }
  std::size_t classifier_weight() const { return final_norm_ + 2; }
  std::size_t classifier_bias() const { return final_norm_ + 3; }

  // Replaces the classifier head with a fresh [dim x num_classes] one.
  void reset_classifier(std::size_t num_classes, std::uint64_t seed);
  void zero_grad();

  template <typename U>
  EncoderParams<U> cast() const {
    EncoderParams<U> out(config_);
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      out.tensors()[i].value = tensors_[i].value.template cast<U>();
    }
    return out;
  }

  bool operator==(const EncoderParams& other) const;

 private:
  void index_layout();

  EncoderConfig config_;
  std::vector<nn::Parameter<T>> tensors_;
  std::unordered_map<std::string, std::size_t> by_name_;
  std::vector<LayerSlots> layers_;
  std::size_t final_norm_ = 0;
};

// Weights ~ Normal(0, 0.02) drawn in layout order from a generator seeded
// with `seed`; biases 0; layer-norm gains 1.
template <typename T>
EncoderParams<T> init_params(const EncoderConfig& config, std::uint64_t seed);

// Padded ids [batch x len] (row-major), mask 1 for real tokens, optional
// class labels. Every row starts with bos_id.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> mask;
  std::vector<std::int32_t> labels;
  TokenId bos_id = 0;
  TokenId pad_id = 1;
};

// <s> + encode(text) + </s>, content truncated so the whole fits max_len.
std::vector<TokenId> frame_tokens(const BpeModel& tokenizer, std::string_view text, std::size_t max_len);

// Pads rows to the longest one. Throws std::invalid_argument for empty rows
// or rows longer than max_len.
TokenBatch make_batch(std::span<const std::vector<TokenId>> rows, TokenId bos_id, TokenId pad_id,
                      std::size_t max_len);

struct ForwardOptions {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // dropout source, required when training
};

// Graph variables for every tensor of `params`, in layout order.
template <typename T>
std::vector<nn::Var> bind_params(nn::Graph<T>& g, EncoderParams<T>& params);

// Pre-norm encoder stack; returns final hidden states as [batch*len x dim].
template <typename T>
nn::Var encoder_forward(nn::Graph<T>& g, const EncoderParams<T>& params, std::span<const nn::Var> vars,
                        const TokenBatch& batch, const ForwardOptions& options = {});

// hidden * token_embedding^T, one row of vocabulary logits per hidden row.
template <typename T>
nn::Var mlm_logits(nn::Graph<T>& g, const EncoderParams<T>& params, std::span<const nn::Var> vars, nn::Var hidden);

// Classifier logits [batch x classes] from the position-0 (<s>) hidden state.
template <typename T>
nn::Var classify(nn::Graph<T>& g, const EncoderParams<T>& params, std::span<const nn::Var> vars,
                 const TokenBatch& batch, nn::Var hidden);

// Evaluation-mode conveniences (dropout off, no gradients kept).
template <typename T>
nn::Tensor<T> encode_hidden(const EncoderParams<T>& params, const TokenBatch& batch);  // [batch x len x dim]
template <typename T>
nn::Tensor<T> mlm_logits(const EncoderParams<T>& params, const nn::Tensor<T>& hidden);  // [... x vocab]
template <typename T>
nn::Tensor<T> classify_logits(const EncoderParams<T>& params, const TokenBatch& batch);  // [batch x classes]

// Index of the largest value; ties go to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> values);

// Model directory: config.json, params.json (ordered names, shapes, dtype)
// and params.bin (little-endian float32 in manifest order).
void save_encoder(const std::filesystem::path& dir, const EncoderParams<float>& params);
EncoderParams<float> load_encoder(const std::filesystem::path& dir);

}  // namespace codelid
