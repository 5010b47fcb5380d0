#include "codelid/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <iterator>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "codelid/bpe.hpp"
#include "codelid/error.hpp"
#include "codelid/eval.hpp"
#include "codelid/json_io.hpp"
#include "codelid/naive_bayes.hpp"
#include "codelid/text.hpp"

#ifndef CODELID_VERSION
#define CODELID_VERSION "0.0.0"
#endif

namespace codelid {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw DataError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* x) { return k == x; }) == keys.end()) {
      throw DataError("unknown config key '" + where + "." + k + "'");
    }
  }
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    reject_unknown(j, {"seed", "batch_size", "log_every", "paths", "cleaning", "split", "tokenizer", "encoder",
                       "pretrain", "finetune", "nb"},
                   "config");
    take(j, "seed", c.seed);
    take(j, "batch_size", c.batch_size);
    take(j, "log_every", c.log_every);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      reject_unknown(p, {"raw", "corpus", "splits", "tokenizer", "pretrained", "classifier", "nb", "reports"}, "paths");
      take(p, "raw", c.paths.raw);
      take(p, "corpus", c.paths.corpus);
      take(p, "splits", c.paths.splits);
      take(p, "tokenizer", c.paths.tokenizer);
      take(p, "pretrained", c.paths.pretrained);
      take(p, "classifier", c.paths.classifier);
      take(p, "nb", c.paths.nb);
      take(p, "reports", c.paths.reports);
    }
    if (j.contains("cleaning")) c.cleaning = j.at("cleaning").get<CleaningPolicy>();
    if (j.contains("split")) {
      reject_unknown(j.at("split"), {"test_fraction"}, "split");
      take(j.at("split"), "test_fraction", c.test_fraction);
    }
    if (j.contains("tokenizer")) {
      reject_unknown(j.at("tokenizer"), {"vocab_size", "max_length"}, "tokenizer");
      take(j.at("tokenizer"), "vocab_size", c.vocab_size);
      take(j.at("tokenizer"), "max_length", c.tokenizer_max_length);
    }
    if (j.contains("encoder")) c.encoder = j.at("encoder").get<EncoderConfig>();
    if (j.contains("pretrain")) {
      const auto& p = j.at("pretrain");
      reject_unknown(p, {"optimizer", "masking"}, "pretrain");
      if (p.contains("optimizer")) c.pretrain = p.at("optimizer").get<OptimizerHyper>();
      if (p.contains("masking")) c.masking = p.at("masking").get<MaskingPolicy>();
    }
    if (j.contains("finetune")) {
      reject_unknown(j.at("finetune"), {"optimizer"}, "finetune");
      if (j.at("finetune").contains("optimizer")) c.finetune = j.at("finetune").at("optimizer").get<OptimizerHyper>();
    }
    if (j.contains("nb")) {
      reject_unknown(j.at("nb"), {"alpha"}, "nb");
      take(j.at("nb"), "alpha", c.nb_alpha);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) { return from_json(read_json(path)); }

json RunConfig::to_json() const {
  return json{{"seed", seed},
              {"batch_size", batch_size},
              {"log_every", log_every},
              {"paths",
               {{"raw", paths.raw},
                {"corpus", paths.corpus},
                {"splits", paths.splits},
                {"tokenizer", paths.tokenizer},
                {"pretrained", paths.pretrained},
                {"classifier", paths.classifier},
                {"nb", paths.nb},
                {"reports", paths.reports}}},
              {"cleaning", cleaning},
              {"split", {{"test_fraction", test_fraction}}},
              {"tokenizer", {{"vocab_size", vocab_size}, {"max_length", tokenizer_max_length}}},
              {"encoder", encoder},
              {"pretrain", {{"optimizer", pretrain}, {"masking", masking}}},
              {"finetune", {{"optimizer", finetune}}},
              {"nb", {{"alpha", nb_alpha}}}};
}

namespace {

struct Flags {
  std::string input, output, config, model, text, report_format = "table";
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::string>> exclude;
  std::optional<double> test_fraction, alpha;
  std::optional<std::size_t> vocab_size, steps, batch_size;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  RunConfig cfg;
  json effective;
};

// Usage errors detected after parsing.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string pick(const std::string& flag, const std::string& fallback) { return flag.empty() ? fallback : flag; }

void require_exists(const fs::path& p) {
  if (!fs::exists(p)) throw DataError("input not found: " + p.string());
}

ordered_json describe_input(const fs::path& p) {
  ordered_json d{{"path", p.generic_string()}};
  if (fs::is_regular_file(p)) d["fnv1a64"] = hex64(fnv1a64(read_file(p)));
  return d;
}

void write_manifest(const fs::path& dir, const std::string& command, const std::vector<fs::path>& inputs,
                    const Context& ctx) {
  ordered_json in = ordered_json::array();
  for (const auto& p : inputs) in.push_back(describe_input(p));
  ordered_json m{{"command", command},
                 {"inputs", std::move(in)},
                 {"config_hash", hex64(fnv1a64(ctx.effective.dump()))},
                 {"seed", ctx.cfg.seed},
                 {"version", CODELID_VERSION}};
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

// Manifest path for a single-file output: "<file>.manifest.json".
void write_file_manifest(const fs::path& file, const std::string& command, const std::vector<fs::path>& inputs,
                         const Context& ctx) {
  fs::path dir = file.parent_path().empty() ? fs::path(".") : file.parent_path();
  write_manifest(dir, command, inputs, ctx);
  fs::rename(dir / "manifest.json", dir / (file.filename().string() + ".manifest.json"));
}

void print_histogram(std::ostream& out, const Corpus& corpus) {
  for (const auto& [label, n] : class_histogram(corpus)) out << label << '\t' << n << '\n';
  out << "total\t" << corpus.size() << '\n';
}

OptimizerHyper with_steps(OptimizerHyper h, std::optional<std::size_t> steps, std::ostream& err) {
  if (steps) {
    if (*steps == 0) throw UsageError("--steps must be positive");
    h.total_steps = *steps;
  }
  if (h.warmup_steps > h.total_steps) {
    err << "warmup_steps " << h.warmup_steps << " clamped to total_steps " << h.total_steps << '\n';
    h.warmup_steps = h.total_steps;
  }
  return h;
}

StepCallback step_logger(std::ostream& err, const char* stage, std::size_t every, std::size_t total) {
  return [&err, stage, every, total](std::size_t step, double lr, double loss) {
    if (every == 0) return;
    if (step % every == 0 || step == 1 || step == total) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%s step %zu/%zu lr %.3e loss %.4f\n", stage, step, total, lr, loss);
      err << buf;
    }
  };
}

int cmd_preprocess(Context& ctx, const Flags& f) {
  const fs::path input = pick(f.input, ctx.cfg.paths.raw);
  const fs::path output = pick(f.output, ctx.cfg.paths.corpus);
  require_exists(input);
  const Corpus raw = load_jsonl(input);
  const Corpus clean = clean_and_filter(raw, ctx.cfg.cleaning);
  save_jsonl(output, clean);
  write_file_manifest(output, "preprocess", {input}, ctx);
  ctx.err << "kept " << clean.size() << " of " << raw.size() << " snippets\n";
  print_histogram(ctx.out, clean);
  return 0;
}

int cmd_split(Context& ctx, const Flags& f) {
  const fs::path input = pick(f.input, ctx.cfg.paths.corpus);
  const fs::path output = pick(f.output, ctx.cfg.paths.splits);
  require_exists(input);
  const Corpus corpus = load_jsonl(input);
  const Split split = stratified_split(corpus, ctx.cfg.test_fraction, ctx.cfg.seed);
  save_jsonl(output / "train.jsonl", split.train);
  save_jsonl(output / "test.jsonl", split.test);
  write_manifest(output, "split", {input}, ctx);
  ctx.out << "train\t" << split.train.size() << "\ntest\t" << split.test.size() << '\n';
  return 0;
}

fs::path train_file(const RunConfig& cfg) { return fs::path(cfg.paths.splits) / "train.jsonl"; }
fs::path test_file(const RunConfig& cfg) { return fs::path(cfg.paths.splits) / "test.jsonl"; }

int cmd_train_bpe(Context& ctx, const Flags& f) {
  const fs::path input = f.input.empty() ? train_file(ctx.cfg) : fs::path(f.input);
  const fs::path output = pick(f.output, ctx.cfg.paths.tokenizer);
  require_exists(input);
  const Corpus corpus = load_jsonl(input);
  std::vector<std::string> texts;
  texts.reserve(corpus.size());
  for (const auto& s : corpus.snippets) texts.push_back(s.text);
  const BpeModel model = train_bpe(texts, ctx.cfg.vocab_size, default_specials(), ctx.cfg.tokenizer_max_length);
  model.save(output);
  write_manifest(output, "train-bpe", {input}, ctx);
  ctx.out << "vocab_size\t" << model.vocab_size() << "\nmerges\t" << model.merges().size() << '\n';
  return 0;
}

int cmd_pretrain(Context& ctx, const Flags& f) {
  const fs::path input = f.input.empty() ? train_file(ctx.cfg) : fs::path(f.input);
  const fs::path model_dir = pick(f.model, ctx.cfg.paths.tokenizer);
  const fs::path output = pick(f.output, ctx.cfg.paths.pretrained);
  require_exists(input);
  require_exists(model_dir);
  const Corpus corpus = load_jsonl(input);
  const BpeModel tokenizer = BpeModel::load(model_dir);

  EncoderConfig encoder = ctx.cfg.encoder;
  encoder.vocab_size = tokenizer.vocab_size();
  const OptimizerHyper hyper = with_steps(ctx.cfg.pretrain, f.steps, ctx.err);
  TrainOptions options{ctx.cfg.batch_size, ctx.cfg.seed,
                       step_logger(ctx.err, "pretrain", ctx.cfg.log_every, hyper.total_steps)};
  auto result = pretrain_mlm(corpus, tokenizer, encoder, hyper, ctx.cfg.masking, options);

  save_checkpoint(output, result.params, result.state);
  tokenizer.save(output);
  write_file(output / "history.csv", result.history.to_csv());
  write_manifest(output, "pretrain", {input, model_dir}, ctx);
  char buf[96];
  std::snprintf(buf, sizeof buf, "final_loss\t%.6f\n", result.history.loss.empty() ? 0.0 : result.history.loss.back());
  ctx.out << buf;
  return 0;
}

int cmd_finetune(Context& ctx, const Flags& f) {
  const fs::path input = f.input.empty() ? train_file(ctx.cfg) : fs::path(f.input);
  const fs::path model_dir = pick(f.model, ctx.cfg.paths.pretrained);
  const fs::path output = pick(f.output, ctx.cfg.paths.classifier);
  require_exists(input);
  require_exists(model_dir);
  const Corpus train = load_jsonl(input);
  const BpeModel tokenizer = BpeModel::load(model_dir);
  EncoderParams<float> params = load_encoder(model_dir);

  const OptimizerHyper hyper = with_steps(ctx.cfg.finetune, f.steps, ctx.err);
  TrainOptions options{ctx.cfg.batch_size, ctx.cfg.seed,
                       step_logger(ctx.err, "finetune", ctx.cfg.log_every, hyper.total_steps)};
  auto result = finetune(train, tokenizer, std::move(params), hyper, options);

  result.model.save(output);
  write_file(output / "history.csv", result.history.to_csv());
  write_manifest(output, "finetune", {input, model_dir}, ctx);
  char buf[96];
  std::snprintf(buf, sizeof buf, "final_loss\t%.6f\n", result.history.loss.empty() ? 0.0 : result.history.loss.back());
  ctx.out << buf;
  return 0;
}

int cmd_train_nb(Context& ctx, const Flags& f) {
  const fs::path input = f.input.empty() ? train_file(ctx.cfg) : fs::path(f.input);
  const fs::path output = pick(f.output, ctx.cfg.paths.nb);
  require_exists(input);
  const NaiveBayes nb = NaiveBayes::fit(load_jsonl(input), ctx.cfg.nb_alpha);
  nb.save(output / "nb.json");
  write_manifest(output, "train-nb", {input}, ctx);
  ctx.out << "classes\t" << nb.labels().size() << "\nvocabulary\t" << nb.vocabulary().size() << '\n';
  return 0;
}

// Either a fine-tuned classifier directory or a Naive Bayes directory.
struct LoadedModel {
  std::optional<ClassifierModel> classifier;
  std::optional<NaiveBayes> nb;

  const LabelSet& labels() const { return classifier ? classifier->labels() : nb->labels(); }
  std::vector<double> proba(std::string_view text) const {
    if (nb) return nb->posterior(text);
    auto p = classifier->predict_proba(text);
    return {p.begin(), p.end()};
  }
};

LoadedModel load_model(const fs::path& dir) {
  require_exists(dir);
  LoadedModel m;
  if (fs::exists(dir / "nb.json")) {
    m.nb = NaiveBayes::load(dir / "nb.json");
  } else if (fs::exists(dir / "labels.json")) {
    m.classifier = ClassifierModel::load(dir);
  } else {
    throw DataError(dir.string() + " holds neither a classifier nor a Naive Bayes model");
  }
  return m;
}

void emit_report(Context& ctx, const EvalReport& report, const std::string& format) {
  if (format == "json") {
    ctx.out << report.to_json().dump(2) << '\n';
  } else {
    ctx.out << report.to_table();
  }
}

int cmd_evaluate(Context& ctx, const Flags& f) {
  const fs::path input = f.input.empty() ? test_file(ctx.cfg) : fs::path(f.input);
  const fs::path model_dir = pick(f.model, ctx.cfg.paths.classifier);
  const fs::path output = pick(f.output, ctx.cfg.paths.reports);
  require_exists(input);
  const Corpus test = load_jsonl(input);
  const LoadedModel model = load_model(model_dir);

  EvalReport report = model.nb
      ? evaluate_model([&](std::string_view t) { return model.nb->predict(t); }, model.labels(), test)
      : evaluate_batch(
            [&](std::span<const std::string> texts) { return model.classifier->predict_all(texts, ctx.cfg.batch_size); },
            model.labels(), test);

  write_file(output / "report.json", report.to_json().dump(2) + "\n");
  write_file(output / "report.txt", report.to_table());
  write_manifest(output, "evaluate", {input, model_dir}, ctx);
  emit_report(ctx, report, f.report_format);
  return 0;
}

std::string read_stdin() {
  return std::string(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
}

int cmd_predict(Context& ctx, const Flags& f, bool text_given) {
  const fs::path model_dir = pick(f.model, ctx.cfg.paths.classifier);
  const LoadedModel model = load_model(model_dir);
  const std::string text = text_given ? f.text : read_stdin();
  const auto p = model.proba(text);
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  if (f.report_format == "json") {
    ordered_json ranked = ordered_json::array();
    for (auto c : order) ranked.push_back({{"label", model.labels().name(c)}, {"confidence", p[c]}});
    ctx.out << ranked.dump(2) << '\n';
  } else {
    char buf[160];
    for (auto c : order) {
      std::snprintf(buf, sizeof buf, "%-16s %.4f\n", model.labels().name(c).c_str(), p[c]);
      ctx.out << buf;
    }
  }
  return 0;
}

EvalReport report_from_json(const json& j) {
  try {
    LabelSet labels(j.at("labels").get<std::vector<std::string>>());
    const auto rows = j.at("confusion_matrix").get<std::vector<std::vector<std::uint64_t>>>();
    ConfusionMatrix m(labels.size());
    if (rows.size() != labels.size()) throw DataError("confusion_matrix has the wrong number of rows");
    for (std::size_t a = 0; a < rows.size(); ++a) {
      if (rows[a].size() != labels.size()) throw DataError("confusion_matrix row " + std::to_string(a) + " is ragged");
      for (std::size_t p = 0; p < rows[a].size(); ++p) m.at(a, p) = rows[a][p];
    }
    const std::size_t top_n = j.contains("confusability") ? j.at("confusability").size() : 10;
    return make_report(m, labels, std::max<std::size_t>(top_n, 1));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

int cmd_report(Context& ctx, const Flags& f) {
  fs::path input = f.input.empty() ? fs::path(ctx.cfg.paths.reports) : fs::path(f.input);
  if (fs::is_directory(input)) input /= "report.json";
  require_exists(input);
  emit_report(ctx, report_from_json(read_json(input)), f.report_format);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Source code language identification toolkit", "codelid"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CODELID_VERSION);
  Flags f;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "Override the configured seed");
  };
  auto add_io = [&](CLI::App* sub, const char* in_help, const char* out_help) {
    sub->add_option("--input", f.input, in_help);
    if (out_help) sub->add_option("--output", f.output, out_help);
  };

  auto* preprocess = app.add_subcommand("preprocess", "Clean a raw JSONL corpus and drop excluded labels");
  add_config(preprocess);
  add_io(preprocess, "Raw JSONL corpus", "Cleaned JSONL output");
  preprocess->add_option("--exclude", f.exclude, "Labels to drop, comma separated")->delimiter(',');

  auto* split = app.add_subcommand("split", "Stratified train/test split");
  add_config(split);
  add_io(split, "Cleaned JSONL corpus", "Directory for train.jsonl and test.jsonl");
  split->add_option("--test-fraction", f.test_fraction, "Fraction of each class held out");

  auto* bpe = app.add_subcommand("train-bpe", "Learn a byte-level BPE vocabulary");
  add_config(bpe);
  add_io(bpe, "Training JSONL corpus", "Tokenizer directory");
  bpe->add_option("--vocab-size", f.vocab_size, "Target vocabulary size including specials");

  auto* pretrain = app.add_subcommand("pretrain", "Masked language model pretraining");
  add_config(pretrain);
  add_io(pretrain, "Training JSONL corpus", "Checkpoint directory");
  pretrain->add_option("--model", f.model, "Tokenizer directory");
  pretrain->add_option("--steps", f.steps, "Optimizer steps");
  pretrain->add_option("--batch-size", f.batch_size, "Snippets per step");

  auto* fine = app.add_subcommand("finetune", "Train the classification head and encoder");
  add_config(fine);
  add_io(fine, "Training JSONL corpus", "Classifier directory");
  fine->add_option("--model", f.model, "Pretrained checkpoint directory");
  fine->add_option("--steps", f.steps, "Optimizer steps");
  fine->add_option("--batch-size", f.batch_size, "Snippets per step");

  auto* nb = app.add_subcommand("train-nb", "Fit the Naive Bayes baseline");
  add_config(nb);
  add_io(nb, "Training JSONL corpus", "Model directory");
  nb->add_option("--alpha", f.alpha, "Additive smoothing");

  auto* evaluate = app.add_subcommand("evaluate", "Score a model on a labeled JSONL corpus");
  add_config(evaluate);
  add_io(evaluate, "Test JSONL corpus", "Report directory");
  evaluate->add_option("--model", f.model, "Classifier or Naive Bayes directory");
  evaluate->add_option("--batch-size", f.batch_size, "Snippets per forward pass");
  evaluate->add_option("--report-format", f.report_format, "Printed format")->check(CLI::IsMember({"json", "table"}));

  auto* predict = app.add_subcommand("predict", "Rank languages for one snippet");
  add_config(predict);
  predict->add_option("--model", f.model, "Classifier or Naive Bayes directory");
  auto* text_opt = predict->add_option("--text", f.text, "Snippet text; read from stdin when absent");
  predict->add_option("--report-format", f.report_format, "Printed format")->check(CLI::IsMember({"json", "table"}));

  auto* report = app.add_subcommand("report", "Render a saved evaluation report");
  add_config(report);
  report->add_option("--input", f.input, "report.json or a report directory");
  report->add_option("--report-format", f.report_format, "Printed format")->check(CLI::IsMember({"json", "table"}));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    Context ctx{out, err, f.config.empty() ? RunConfig{} : RunConfig::load(f.config), {}};
    auto& cfg = ctx.cfg;
    if (f.seed) cfg.seed = *f.seed;
    if (f.exclude) cfg.cleaning.excluded_labels = *f.exclude;
    if (f.test_fraction) cfg.test_fraction = *f.test_fraction;
    if (f.vocab_size) cfg.vocab_size = *f.vocab_size;
    if (f.batch_size) cfg.batch_size = *f.batch_size;
    if (f.alpha) cfg.nb_alpha = *f.alpha;
    if (f.steps) {
      (app.got_subcommand(pretrain) ? cfg.pretrain : cfg.finetune).total_steps = *f.steps;
    }
    cfg.cleaning.validate();
    ctx.effective = cfg.to_json();

    if (app.got_subcommand(preprocess)) return cmd_preprocess(ctx, f);
    if (app.got_subcommand(split)) return cmd_split(ctx, f);
    if (app.got_subcommand(bpe)) return cmd_train_bpe(ctx, f);
    if (app.got_subcommand(pretrain)) return cmd_pretrain(ctx, f);
    if (app.got_subcommand(fine)) return cmd_finetune(ctx, f);
    if (app.got_subcommand(nb)) return cmd_train_nb(ctx, f);
    if (app.got_subcommand(evaluate)) return cmd_evaluate(ctx, f);
    if (app.got_subcommand(predict)) return cmd_predict(ctx, f, text_opt->count() > 0);
    if (app.got_subcommand(report)) return cmd_report(ctx, f);
    err << app.help();
    return 1;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::out_of_range& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace codelid
