#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "codelid/corpus.hpp"
#include "codelid/training.hpp"
#include "codelid/transformer.hpp"

namespace codelid {

struct RunPaths {
  std::string raw = "data/raw.jsonl";
  std::string corpus = "work/clean.jsonl";
  std::string splits = "work/splits";
  std::string tokenizer = "work/tokenizer";
  std::string pretrained = "work/pretrained";
  std::string classifier = "work/classifier";
  std::string nb = "work/nb";
  std::string reports = "work/reports";
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t batch_size = 32;
  std::size_t log_every = 50;
  RunPaths paths;
  CleaningPolicy cleaning{.excluded_labels = {"Markdown", "HTML"}};
  double test_fraction = 0.2;
  std::size_t vocab_size = 8000;
  std::size_t tokenizer_max_length = 0;
  EncoderConfig encoder;
  OptimizerHyper pretrain;
  MaskingPolicy masking;
  OptimizerHyper finetune;
  double nb_alpha = 1.0;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

// Exit codes: 0 success, 1 usage or configuration error, 2 data or model error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace codelid
