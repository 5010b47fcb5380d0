#include "codelid/json_io.hpp"

#include <bit>
#include <cstring>
#include <set>

#include "codelid/error.hpp"
#include "codelid/text.hpp"

namespace codelid {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw DataError(std::string(what) + " must be a JSON object");
  std::set<std::string> allowed(known.begin(), known.end());
  for (auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw DataError(std::string("unknown key in ") + what + ": " + key);
  }
}

template <typename V>
void read_key(const json& j, const char* key, V& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<V>();
    } catch (const json::exception& e) {
      throw DataError(std::string("bad value for \"") + key + "\": " + e.what());
    }
  }
}

}  // namespace

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"vocab_size", c.vocab_size}, {"max_len", c.max_len},     {"model_dim", c.model_dim},
                   {"num_heads", c.num_heads},   {"num_layers", c.num_layers}, {"ff_dim", c.ff_dim},
                   {"dropout", c.dropout},       {"num_classes", c.num_classes}};
}

void from_json(const json& j, EncoderConfig& c) {
  reject_unknown(j, {"vocab_size", "max_len", "model_dim", "num_heads", "num_layers", "ff_dim", "dropout",
                     "num_classes"},
                 "encoder config");
  read_key(j, "vocab_size", c.vocab_size);
  read_key(j, "max_len", c.max_len);
  read_key(j, "model_dim", c.model_dim);
  read_key(j, "num_heads", c.num_heads);
  read_key(j, "num_layers", c.num_layers);
  read_key(j, "ff_dim", c.ff_dim);
  read_key(j, "dropout", c.dropout);
  read_key(j, "num_classes", c.num_classes);
}

void to_json(json& j, const OptimizerHyper& h) {
  j = json{{"lr_peak", h.lr_peak},           {"beta1", h.beta1},
                   {"beta2", h.beta2},               {"eps", h.eps},
                   {"weight_decay", h.weight_decay}, {"warmup_steps", h.warmup_steps},
                   {"total_steps", h.total_steps},   {"freeze_no_decay", h.freeze_no_decay}};
}

void from_json(const json& j, OptimizerHyper& h) {
  reject_unknown(j, {"lr_peak", "beta1", "beta2", "eps", "weight_decay", "warmup_steps", "total_steps",
                     "freeze_no_decay"},
                 "optimizer config");
  read_key(j, "lr_peak", h.lr_peak);
  read_key(j, "beta1", h.beta1);
  read_key(j, "beta2", h.beta2);
  read_key(j, "eps", h.eps);
  read_key(j, "weight_decay", h.weight_decay);
  read_key(j, "warmup_steps", h.warmup_steps);
  read_key(j, "total_steps", h.total_steps);
  read_key(j, "freeze_no_decay", h.freeze_no_decay);
}

void to_json(json& j, const MaskingPolicy& p) {
  j = json{{"mask_prob", p.mask_prob},
                   {"replace_mask", p.replace_mask},
                   {"replace_random", p.replace_random},
                   {"keep", p.keep}};
}

void from_json(const json& j, MaskingPolicy& p) {
  reject_unknown(j, {"mask_prob", "replace_mask", "replace_random", "keep"}, "masking policy");
  read_key(j, "mask_prob", p.mask_prob);
  read_key(j, "replace_mask", p.replace_mask);
  read_key(j, "replace_random", p.replace_random);
  read_key(j, "keep", p.keep);
}

void to_json(json& j, const CleaningPolicy& p) {
  j = json{{"min_chars", p.min_chars},
                   {"max_chars", p.max_chars},
                   {"normalize_newlines", p.normalize_newlines},
                   {"strip_trailing_whitespace", p.strip_trailing_whitespace},
                   {"excluded_labels", p.excluded_labels}};
}

void from_json(const json& j, CleaningPolicy& p) {
  reject_unknown(j, {"min_chars", "max_chars", "normalize_newlines", "strip_trailing_whitespace", "excluded_labels"},
                 "cleaning policy");
  read_key(j, "min_chars", p.min_chars);
  read_key(j, "max_chars", p.max_chars);
  read_key(j, "normalize_newlines", p.normalize_newlines);
  read_key(j, "strip_trailing_whitespace", p.strip_trailing_whitespace);
  read_key(j, "excluded_labels", p.excluded_labels);
}

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& value) {
  write_file(path, value.dump(2) + "\n");
}

void append_f32(std::vector<char>& out, std::span<const float> values) {
  for (float v : values) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
}

void read_f32(std::span<const char> in, std::size_t& offset, std::span<float> values) {
  if (offset + 4 * values.size() > in.size()) throw DataError("float32 blob is shorter than its manifest");
  for (auto& v : values) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + b])) << (8 * b);
    v = std::bit_cast<float>(bits);
    offset += 4;
  }
}

void save_encoder(const std::filesystem::path& dir, const EncoderParams<float>& params) {
  std::filesystem::create_directories(dir);
  write_json(dir / "config.json", json(params.config()));

  ordered_json manifest;
  manifest["dtype"] = "float32";
  manifest["byte_order"] = "little";
  manifest["tensors"] = ordered_json::array();
  std::vector<char> blob;
  blob.reserve(params.scalar_count() * 4);
  for (const auto& p : params.tensors()) {
    manifest["tensors"].push_back(ordered_json{{"name", p.name}, {"shape", p.value.shape}});
    append_f32(blob, p.value.data);
  }
  write_file(dir / "params.json", manifest.dump(2) + "\n");
  write_file(dir / "params.bin", std::string_view(blob.data(), blob.size()));
}

EncoderParams<float> load_encoder(const std::filesystem::path& dir) {
  EncoderConfig config = read_json(dir / "config.json").get<EncoderConfig>();
  EncoderParams<float> params(config);
  json manifest = read_json(dir / "params.json");
  if (manifest.value("dtype", "") != "float32") throw DataError("params.json: unsupported dtype");
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.tensors().size()) throw DataError("params.json: tensor count does not match config");
  const std::string blob = read_file(dir / "params.bin");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& p = params.tensors()[i];
    if (tensors[i].at("name").get<std::string>() != p.name ||
        tensors[i].at("shape").get<nn::Shape>() != p.value.shape) {
      throw DataError("params.json: tensor " + std::to_string(i) + " does not match the layout (" + p.name + ")");
    }
    read_f32(blob, offset, p.value.data);
  }
  if (offset != blob.size()) throw DataError("params.bin is longer than its manifest");
  return params;
}

void save_checkpoint(const std::filesystem::path& dir, const EncoderParams<float>& params,
                     const OptState<float>& state) {
  save_encoder(dir, params);
  std::vector<char> blob;
  for (const auto& m : state.m) append_f32(blob, m.data);
  for (const auto& v : state.v) append_f32(blob, v.data);
  write_file(dir / "optimizer.bin", std::string_view(blob.data(), blob.size()));
  write_json(dir / "checkpoint.json", ordered_json{{"step", state.step}});
}

OptState<float> load_optimizer_state(const std::filesystem::path& dir, const EncoderParams<float>& params) {
  auto state = OptState<float>::zeros(params.tensors());
  state.step = read_json(dir / "checkpoint.json").at("step").get<std::uint64_t>();
  const std::string blob = read_file(dir / "optimizer.bin");
  std::size_t offset = 0;
  for (auto& m : state.m) read_f32(blob, offset, m.data);
  for (auto& v : state.v) read_f32(blob, offset, v.data);
  if (offset != blob.size()) throw DataError("optimizer.bin is longer than expected");
  return state;
}

}  // namespace codelid
