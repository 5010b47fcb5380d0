#include "codelid/transformer.hpp"

#include <algorithm>
#include <stdexcept>

#include "codelid/nn/ops.hpp"

namespace codelid {

using nn::Graph;
using nn::Parameter;
using nn::Tensor;
using nn::Var;

void EncoderConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid encoder config: " + what); };
  if (vocab_size == 0) fail("vocab_size must be positive");
  if (max_len < 2) fail("max_len must hold at least <s> and </s>");
  if (model_dim == 0 || num_heads == 0) fail("model_dim and num_heads must be positive");
  if (model_dim % num_heads != 0) fail("model_dim must be divisible by num_heads");
  if (ff_dim == 0) fail("ff_dim must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (num_classes == 0) fail("num_classes must be positive");
}

std::vector<TensorSpec> encoder_layout(const EncoderConfig& c) {
  std::vector<TensorSpec> layout;
  const std::size_t d = c.model_dim;
  layout.push_back({"embeddings.token.weight", {c.vocab_size, d}});
  layout.push_back({"embeddings.position.weight", {c.max_len, d}});
  for (std::size_t i = 0; i < c.num_layers; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    layout.push_back({p + "attention_norm.weight", {d}});
    layout.push_back({p + "attention_norm.bias", {d}});
    for (const char* proj : {"query", "key", "value", "output"}) {
      layout.push_back({p + "attention." + proj + ".weight", {d, d}});
      layout.push_back({p + "attention." + proj + ".bias", {d}});
    }
    layout.push_back({p + "ffn_norm.weight", {d}});
    layout.push_back({p + "ffn_norm.bias", {d}});
    layout.push_back({p + "ffn.input.weight", {d, c.ff_dim}});
    layout.push_back({p + "ffn.input.bias", {c.ff_dim}});
    layout.push_back({p + "ffn.output.weight", {c.ff_dim, d}});
    layout.push_back({p + "ffn.output.bias", {d}});
  }
  layout.push_back({"final_norm.weight", {d}});
  layout.push_back({"final_norm.bias", {d}});
  layout.push_back({"classifier.weight", {d, c.num_classes}});
  layout.push_back({"classifier.bias", {c.num_classes}});
  return layout;
}

template <typename T>
EncoderParams<T>::EncoderParams(EncoderConfig config) : config_(std::move(config)) {
  config_.validate();
  for (auto& spec : encoder_layout(config_)) tensors_.emplace_back(spec.name, Tensor<T>(spec.shape));
  index_layout();
}

template <typename T>
void EncoderParams<T>::index_layout() {
  by_name_.clear();
  for (std::size_t i = 0; i < tensors_.size(); ++i) by_name_.emplace(tensors_[i].name, i);
  layers_.clear();
  std::size_t at = 2;
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    LayerSlots s{};
    s.attention_norm_weight = at++;
    s.attention_norm_bias = at++;
    s.query_weight = at++;
    s.query_bias = at++;
    s.key_weight = at++;
    s.key_bias = at++;
    s.value_weight = at++;
    s.value_bias = at++;
    s.output_weight = at++;
    s.output_bias = at++;
    s.ffn_norm_weight = at++;
    s.ffn_norm_bias = at++;
    s.ffn_in_weight = at++;
    s.ffn_in_bias = at++;
    s.ffn_out_weight = at++;
    s.ffn_out_bias = at++;
    layers_.push_back(s);
  }
  final_norm_ = at;
}

template <typename T>
Parameter<T>& EncoderParams<T>::get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
  return tensors_[it->second];
}

template <typename T>
const Parameter<T>& EncoderParams<T>::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
  return tensors_[it->second];
}

template <typename T>
std::size_t EncoderParams<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : tensors_) n += p.value.size();
  return n;
}

template <typename T>
void EncoderParams<T>::zero_grad() {
  for (auto& p : tensors_) p.zero_grad();
}

template <typename T>
bool EncoderParams<T>::operator==(const EncoderParams& other) const {
  if (!(config_ == other.config_) || tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name != other.tensors_[i].name || !(tensors_[i].value == other.tensors_[i].value)) return false;
  }
  return true;
}

namespace {

bool is_gain(const std::string& name) {
  return name.ends_with("_norm.weight");
}

bool is_bias(const std::string& name) { return name.ends_with(".bias"); }

template <typename T>
void init_tensor(Parameter<T>& p, std::mt19937_64& rng) {
  if (is_gain(p.name)) {
    p.value.fill(T(1));
  } else if (is_bias(p.name)) {
    p.value.fill(T(0));
  } else {
    std::normal_distribution<double> normal(0.0, 0.02);
    for (auto& x : p.value.data) x = static_cast<T>(normal(rng));
  }
  p.zero_grad();
}

}  // namespace

template <typename T>
void EncoderParams<T>::reset_classifier(std::size_t num_classes, std::uint64_t seed) {
  config_.num_classes = num_classes;
  config_.validate();
  const std::size_t d = config_.model_dim;
  tensors_[classifier_weight()] = Parameter<T>("classifier.weight", Tensor<T>({d, num_classes}));
  tensors_[classifier_bias()] = Parameter<T>("classifier.bias", Tensor<T>({num_classes}));
  std::mt19937_64 rng(seed);
  init_tensor(tensors_[classifier_weight()], rng);
  init_tensor(tensors_[classifier_bias()], rng);
}

template <typename T>
EncoderParams<T> init_params(const EncoderConfig& config, std::uint64_t seed) {
  EncoderParams<T> params(config);
  std::mt19937_64 rng(seed);
  for (auto& p : params.tensors()) init_tensor(p, rng);
  return params;
}

std::vector<TokenId> frame_tokens(const BpeModel& tokenizer, std::string_view text, std::size_t max_len) {
  auto bos = tokenizer.bos_id();
  auto eos = tokenizer.eos_id();
  if (!bos || !eos) throw std::invalid_argument("tokenizer lacks <s> or </s>");
  if (max_len < 2) throw std::invalid_argument("max_len must hold at least <s> and </s>");
  std::vector<TokenId> ids{*bos};
  auto body = tokenizer.encode(text, max_len - 2);
  ids.insert(ids.end(), body.begin(), body.end());
  ids.push_back(*eos);
  return ids;
}

TokenBatch make_batch(std::span<const std::vector<TokenId>> rows, TokenId bos_id, TokenId pad_id,
                      std::size_t max_len) {
  TokenBatch batch;
  batch.batch = rows.size();
  batch.bos_id = bos_id;
  batch.pad_id = pad_id;
  for (const auto& r : rows) {
    if (r.empty()) throw std::invalid_argument("empty token row");
    if (r.size() > max_len) {
      throw std::invalid_argument("token row of length " + std::to_string(r.size()) + " exceeds max_len " +
                                  std::to_string(max_len));
    }
    batch.len = std::max(batch.len, r.size());
  }
  batch.ids.assign(batch.batch * batch.len, pad_id);
  batch.mask.assign(batch.batch * batch.len, 0);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    std::copy(rows[b].begin(), rows[b].end(), batch.ids.begin() + static_cast<std::ptrdiff_t>(b * batch.len));
    std::fill_n(batch.mask.begin() + static_cast<std::ptrdiff_t>(b * batch.len), rows[b].size(), 1);
  }
  return batch;
}

template <typename T>
std::vector<Var> bind_params(Graph<T>& g, EncoderParams<T>& params) {
  std::vector<Var> vars;
  vars.reserve(params.tensors().size());
  for (auto& p : params.tensors()) vars.push_back(g.parameter(p));
  return vars;
}

namespace {

template <typename T>
std::vector<Var> bind_const(Graph<T>& g, const EncoderParams<T>& params) {
  std::vector<Var> vars;
  for (const auto& p : params.tensors()) vars.push_back(g.constant_ref(p.value));
  return vars;
}

}  // namespace

template <typename T>
Var encoder_forward(Graph<T>& g, const EncoderParams<T>& params, std::span<const Var> vars, const TokenBatch& batch,
                    const ForwardOptions& options) {
  const auto& cfg = params.config();
  if (vars.size() != params.tensors().size()) throw std::invalid_argument("parameter bindings do not match model");
  if (batch.len == 0 || batch.batch == 0) throw std::invalid_argument("empty batch");
  if (batch.len > cfg.max_len) {
    throw std::invalid_argument("batch length " + std::to_string(batch.len) + " exceeds max_len " +
                                std::to_string(cfg.max_len));
  }
  if (batch.ids.size() != batch.batch * batch.len || batch.mask.size() != batch.ids.size()) {
    throw std::invalid_argument("batch ids/mask size mismatch");
  }
  const bool drop = options.training && cfg.dropout > 0.0;
  if (drop && !options.rng) throw std::invalid_argument("training mode needs a dropout generator");
  auto maybe_dropout = [&](Var x) { return drop ? nn::dropout(g, x, cfg.dropout, *options.rng) : x; };

  std::vector<std::int32_t> positions(batch.ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<std::int32_t>(i % batch.len);

  Var x = nn::add(g, nn::embedding(g, vars[params.token_embedding()], batch.ids),
                  nn::embedding(g, vars[params.position_embedding()], positions));
  x = maybe_dropout(x);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const auto& s = params.layer(l);
    Var h = nn::layer_norm(g, x, vars[s.attention_norm_weight], vars[s.attention_norm_bias]);
    Var q = nn::linear(g, h, vars[s.query_weight], vars[s.query_bias]);
    Var k = nn::linear(g, h, vars[s.key_weight], vars[s.key_bias]);
    Var v = nn::linear(g, h, vars[s.value_weight], vars[s.value_bias]);
    Var a = nn::attention(g, q, k, v, batch.mask, batch.batch, batch.len, cfg.num_heads);
    a = nn::linear(g, a, vars[s.output_weight], vars[s.output_bias]);
    x = nn::add(g, x, maybe_dropout(a));

    h = nn::layer_norm(g, x, vars[s.ffn_norm_weight], vars[s.ffn_norm_bias]);
    Var f = nn::gelu(g, nn::linear(g, h, vars[s.ffn_in_weight], vars[s.ffn_in_bias]));
    f = nn::linear(g, f, vars[s.ffn_out_weight], vars[s.ffn_out_bias]);
    x = nn::add(g, x, maybe_dropout(f));
  }
  return nn::layer_norm(g, x, vars[params.final_norm_weight()], vars[params.final_norm_bias()]);
}

template <typename T>
Var mlm_logits(Graph<T>& g, const EncoderParams<T>& params, std::span<const Var> vars, Var hidden) {
  if (g.value(hidden).cols() != params.config().model_dim) throw std::invalid_argument("hidden width mismatch");
  return nn::matmul_transposed(g, hidden, vars[params.token_embedding()]);
}

template <typename T>
Var classify(Graph<T>& g, const EncoderParams<T>& params, std::span<const Var> vars, const TokenBatch& batch,
             Var hidden) {
  std::vector<std::size_t> first(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    if (batch.ids[b * batch.len] != batch.bos_id) {
      throw std::invalid_argument("batch row " + std::to_string(b) + " does not start with <s>");
    }
    first[b] = b * batch.len;
  }
  Var pooled = nn::gather_rows(g, hidden, first);
  return nn::linear(g, pooled, vars[params.classifier_weight()], vars[params.classifier_bias()]);
}

template <typename T>
Tensor<T> encode_hidden(const EncoderParams<T>& params, const TokenBatch& batch) {
  Graph<T> g;
  auto vars = bind_const(g, params);
  Tensor<T> out = g.value(encoder_forward(g, params, vars, batch));
  out.shape = {batch.batch, batch.len, params.config().model_dim};
  return out;
}

template <typename T>
Tensor<T> mlm_logits(const EncoderParams<T>& params, const Tensor<T>& hidden) {
  Graph<T> g;
  auto vars = bind_const(g, params);
  Tensor<T> flat = hidden;
  flat.shape = {hidden.rows(), hidden.cols()};
  Tensor<T> out = g.value(mlm_logits(g, params, vars, g.constant(std::move(flat))));
  nn::Shape shape(hidden.shape.begin(), hidden.shape.end() - 1);
  shape.push_back(params.config().vocab_size);
  out.shape = shape;
  return out;
}

template <typename T>
Tensor<T> classify_logits(const EncoderParams<T>& params, const TokenBatch& batch) {
  Graph<T> g;
  auto vars = bind_const(g, params);
  Var hidden = encoder_forward(g, params, vars, batch);
  return g.value(classify(g, params, vars, batch, hidden));
}

template <typename T>
std::size_t argmax(std::span<const T> values) {
  if (values.empty()) throw std::invalid_argument("argmax of an empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

#define CODELID_INSTANTIATE_ENCODER(T)                                                                     \
  template class EncoderParams<T>;                                                                        \
  template EncoderParams<T> init_params<T>(const EncoderConfig&, std::uint64_t);                          \
  template std::vector<Var> bind_params<T>(Graph<T>&, EncoderParams<T>&);                                 \
  template Var encoder_forward<T>(Graph<T>&, const EncoderParams<T>&, std::span<const Var>, const TokenBatch&, \
                                  const ForwardOptions&);                                                 \
  template Var mlm_logits<T>(Graph<T>&, const EncoderParams<T>&, std::span<const Var>, Var);              \
  template Var classify<T>(Graph<T>&, const EncoderParams<T>&, std::span<const Var>, const TokenBatch&, Var); \
  template Tensor<T> encode_hidden<T>(const EncoderParams<T>&, const TokenBatch&);                        \
  template Tensor<T> mlm_logits<T>(const EncoderParams<T>&, const Tensor<T>&);                            \
  template Tensor<T> classify_logits<T>(const EncoderParams<T>&, const TokenBatch&);                      \
  template std::size_t argmax<T>(std::span<const T>);

CODELID_INSTANTIATE_ENCODER(float)
CODELID_INSTANTIATE_ENCODER(double)

}  // namespace codelid
