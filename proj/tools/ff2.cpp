// Command-line surface for the punctuation-restoration pipeline:
// train / evaluate / predict / gradcheck / stats.
//
// Exit codes (stable API): 0 success, 1 configuration error, 2 data or
// model-file error, 3 numeric divergence or failed gradient check,
// 70 unexpected internal error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ff2/ff2.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitInternal = 70;

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs/out";
  std::string train_path;
  std::string val_path;
  int min_count = 1;
  int stride = 0;  // 0 -> max_len / 2
  ff2::FF2Config model = ff2::default_ff2_config();
  ff2::TrainConfig train;
};

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ff2::ConfigError("cannot open config file: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw ff2::ConfigError("config file is not valid JSON: " + path);
  }
  return j;
}

RunConfig parse_run_config(const std::string& path) {
  const nlohmann::json j = load_json_file(path);
  ff2::check_json_keys(j, {"seed", "output_dir", "data", "model", "train"},
                       "config");
  RunConfig cfg;
  try {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("data")) {
      const nlohmann::json& d = j.at("data");
      ff2::check_json_keys(d, {"train", "validation", "min_count", "stride"},
                           "config.data");
      if (d.contains("train")) cfg.train_path = d.at("train").get<std::string>();
      if (d.contains("validation")) cfg.val_path = d.at("validation").get<std::string>();
      if (d.contains("min_count")) cfg.min_count = d.at("min_count").get<int>();
      if (d.contains("stride")) cfg.stride = d.at("stride").get<int>();
    }
    if (j.contains("model")) {
      cfg.model = ff2::ff2_config_from_json(j.at("model"), cfg.model, "config.model");
    }
    if (j.contains("train")) {
      const nlohmann::json& t = j.at("train");
      ff2::check_json_keys(t,
                           {"learning_rate", "batch_size", "beta1", "beta2",
                            "eps", "max_epochs", "patience", "clip_norm"},
                           "config.train");
      if (t.contains("learning_rate")) cfg.train.learning_rate = t.at("learning_rate").get<double>();
      if (t.contains("batch_size")) cfg.train.batch_size = t.at("batch_size").get<int>();
      if (t.contains("beta1")) cfg.train.beta1 = t.at("beta1").get<double>();
      if (t.contains("beta2")) cfg.train.beta2 = t.at("beta2").get<double>();
      if (t.contains("eps")) cfg.train.eps = t.at("eps").get<double>();
      if (t.contains("max_epochs")) cfg.train.max_epochs = t.at("max_epochs").get<int>();
      if (t.contains("patience")) cfg.train.patience = t.at("patience").get<int>();
      if (t.contains("clip_norm")) cfg.train.clip_norm = t.at("clip_norm").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ff2::ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

std::vector<ff2::LabeledDocument> load_nonempty_corpus(const std::string& path,
                                                       const char* role) {
  if (path.empty()) {
    throw ff2::ConfigError(std::string("no ") + role + " corpus path configured");
  }
  std::vector<ff2::LabeledDocument> docs = ff2::load_corpus(path);
  long long tokens = 0;
  for (const ff2::LabeledDocument& doc : docs) {
    tokens += static_cast<long long>(doc.tokens.size());
  }
  if (tokens == 0) {
    throw ff2::DataError(std::string(role) + " corpus is empty: " + path);
  }
  return docs;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<int> max_epochs;
  std::optional<double> learning_rate;
  std::optional<int> batch_size;
  std::optional<int> patience;
  std::optional<int> min_count;
  std::optional<int> stride;
  std::optional<double> rdrop_alpha;
  std::optional<double> dropout;
  bool no_tnp = false;
  bool vanilla_attention = false;
};

int cmd_train(const TrainArgs& args) {
  RunConfig cfg = parse_run_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.output_dir) cfg.output_dir = *args.output_dir;
  if (args.max_epochs) cfg.train.max_epochs = *args.max_epochs;
  if (args.learning_rate) cfg.train.learning_rate = *args.learning_rate;
  if (args.batch_size) cfg.train.batch_size = *args.batch_size;
  if (args.patience) cfg.train.patience = *args.patience;
  if (args.min_count) cfg.min_count = *args.min_count;
  if (args.stride) cfg.stride = *args.stride;
  if (args.rdrop_alpha) cfg.model.rdrop_alpha = *args.rdrop_alpha;
  if (args.dropout) {
    cfg.model.ite.dropout_rate = *args.dropout;
    cfg.model.tnp.dropout_rate = *args.dropout;
    cfg.model.fusion.dropout_rate = *args.dropout;
  }
  if (args.no_tnp) cfg.model.use_tnp = false;
  if (args.vanilla_attention) {
    cfg.model.ite.mode = ff2::AttentionMode::kVanilla;
    cfg.model.tnp.mode = ff2::AttentionMode::kVanilla;
    cfg.model.fusion.mode = ff2::AttentionMode::kVanilla;
  }
  // fusion width and admitted length are always derived from the streams
  cfg.model.fusion.d_emb = cfg.model.fusion_width();
  cfg.model.fusion.max_len = cfg.model.ite.max_len;
  cfg.train.seed = cfg.seed;

  ff2::TrainingJob job;
  job.model_config = cfg.model;
  job.train_config = cfg.train;
  job.train_docs = load_nonempty_corpus(cfg.train_path, "training");
  job.val_docs = load_nonempty_corpus(cfg.val_path, "validation");
  job.min_count = cfg.min_count;
  job.stride = cfg.stride;
  job.output_dir = cfg.output_dir;

  const ff2::TrainingOutcome outcome = ff2::run_training_job(std::move(job));
  std::printf("trained %d epoch(s); best epoch %d, validation overall F1 %.4f\n",
              static_cast<int>(outcome.result.history.size()),
              outcome.result.best_epoch, outcome.result.best_val_f1);
  std::printf("checkpoint: %s\nhistory:    %s\nmodel card: %s\n",
              outcome.checkpoint_path.c_str(), outcome.history_path.c_str(),
              outcome.model_card_path.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int cmd_evaluate(const std::string& checkpoint, const std::string& data_path,
                 const std::string& json_out) {
  const ff2::LoadedModel loaded = ff2::load_model(checkpoint);
  const std::vector<ff2::LabeledDocument> docs =
      load_nonempty_corpus(data_path, "evaluation");
  const int max_len = loaded.model.config.ite.max_len;
  const std::vector<ff2::LabeledSequence> seqs = ff2::encode_documents(
      docs, loaded.vocab, max_len, std::max(1, max_len / 2));
  const ff2::EvalReport report = ff2::evaluate_model(loaded.model, seqs);
  std::cout << ff2::report_table(report);
  ff2::write_text_file(json_out, ff2::report_json(report).dump(2) + "\n");
  std::printf("json report: %s\n", json_out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int cmd_predict(const std::string& checkpoint, const std::string& input_path,
                const std::string& output_path) {
  const ff2::LoadedModel loaded = ff2::load_model(checkpoint);
  std::string text;
  if (input_path.empty()) {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    text = buf.str();
  } else {
    text = ff2::read_file(input_path);
  }
  const ff2::LabeledDocument doc = ff2::label_text(text);
  std::string rendered;
  if (!doc.tokens.empty()) {
    const std::vector<ff2::Label> labels =
        ff2::predict_document(loaded.model, loaded.vocab, doc.tokens);
    rendered = ff2::render_text(doc.tokens, labels);
  }
  rendered += '\n';
  if (output_path.empty()) {
    std::cout << rendered;
  } else {
    ff2::write_text_file(output_path, rendered);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

ff2::FF2Config gradcheck_default_config() {
  ff2::FF2Config c;
  c.ite = {1, 8, 2, 16, ff2::AttentionMode::kInteraction, 0.0, 8, 8};
  c.tnp = {1, 4, 2, 8, ff2::AttentionMode::kInteraction, 0.0, 8, 8};
  c.fusion = {1, 12, 2, 16, ff2::AttentionMode::kInteraction, 0.0, 8, 0};
  c.rdrop_alpha = 0.0;
  return c;
}

int cmd_gradcheck(const std::string& config_path, double step, double tolerance,
                  std::uint64_t seed) {
  ff2::FF2Config model_cfg = gradcheck_default_config();
  if (!config_path.empty()) {
    const nlohmann::json j = load_json_file(config_path);
    if (j.contains("model")) {
      model_cfg = ff2::ff2_config_from_json(j.at("model"), model_cfg, "config.model");
      model_cfg.ite.dropout_rate = 0.0;
      model_cfg.tnp.dropout_rate = 0.0;
      model_cfg.fusion.dropout_rate = 0.0;
      if (model_cfg.ite.vocab_size == 0) model_cfg.ite.vocab_size = 8;
      if (model_cfg.tnp.vocab_size == 0) model_cfg.tnp.vocab_size = 8;
      model_cfg.fusion.d_emb = model_cfg.fusion_width();
      model_cfg.fusion.max_len = model_cfg.ite.max_len;
    }
  }
  ff2::Rng rng(seed);
  ff2::FF2Model model = ff2::init_model(model_cfg, rng);

  // fixed two-sequence batch, one of them padded
  const int n = std::min(6, model_cfg.ite.max_len);
  std::vector<ff2::LabeledSequence> batch(2);
  for (int s = 0; s < 2; ++s) {
    for (int i = 0; i < n; ++i) {
      batch[static_cast<std::size_t>(s)].token_ids.push_back(
          2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(model_cfg.ite.vocab_size - 2))));
      batch[static_cast<std::size_t>(s)].labels.push_back(
          static_cast<ff2::Label>(rng.below(4)));
      batch[static_cast<std::size_t>(s)].mask.push_back(1);
    }
  }
  batch[1].token_ids.back() = ff2::Vocabulary::kPad;
  batch[1].mask.back() = 0;

  ff2::Rng eval_rng(0);
  auto build = [&] {
    return ff2::batch_loss(model, batch, {0, 1}, false, eval_rng);
  };
  const ff2::GradCheckReport report =
      ff2::grad_check(build, ff2::model_parameters(model), step, tolerance);
  std::cout << ff2::format_report(report);
  if (!report.pass) {
    std::cerr << "gradient check failed\n";
    return kExitNumeric;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

int cmd_stats(const std::string& data_path, const std::string& json_out,
              const std::string& export_tsv_dir) {
  const std::vector<ff2::LabeledDocument> docs =
      load_nonempty_corpus(data_path, "stats");
  const ff2::CorpusStats stats = ff2::corpus_stats(docs);
  std::printf("documents: %zu\ntokens:    %lld\n", docs.size(), stats.token_count);
  for (int i = 0; i < ff2::kNumLabels; ++i) {
    std::printf("%-9s %6.2f%%  (%lld)\n",
                ff2::label_name(static_cast<ff2::Label>(i)),
                100.0 * stats.fractions[static_cast<std::size_t>(i)],
                stats.counts[static_cast<std::size_t>(i)]);
  }
  if (!json_out.empty()) {
    nlohmann::json j;
    j["token_count"] = stats.token_count;
    for (int i = 0; i < ff2::kNumLabels; ++i) {
      const char* name = ff2::label_name(static_cast<ff2::Label>(i));
      j["counts"][name] = stats.counts[static_cast<std::size_t>(i)];
      j["fractions"][name] = stats.fractions[static_cast<std::size_t>(i)];
    }
    ff2::write_text_file(json_out, j.dump(2) + "\n");
  }
  if (!export_tsv_dir.empty()) {
    std::filesystem::create_directories(export_tsv_dir);
    int index = 0;
    for (const ff2::LabeledDocument& doc : docs) {
      char name[32];
      std::snprintf(name, sizeof(name), "doc%05d.tsv", index++);
      ff2::save_tsv(doc, export_tsv_dir + "/" + name);
    }
    std::printf("tsv cache: %s (%d file(s))\n", export_tsv_dir.c_str(), index);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FF2 punctuation restoration pipeline"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train a model from a JSON config");
  train->add_option("--config", train_args.config_path, "JSON run configuration")
      ->required();
  train->add_option("--seed", train_args.seed, "override config seed");
  train->add_option("--output-dir", train_args.output_dir, "override output directory");
  train->add_option("--max-epochs", train_args.max_epochs, "override epoch budget");
  train->add_option("--learning-rate", train_args.learning_rate, "override learning rate");
  train->add_option("--batch-size", train_args.batch_size, "override batch size");
  train->add_option("--patience", train_args.patience, "override early-stopping patience");
  train->add_option("--min-count", train_args.min_count, "override vocabulary threshold");
  train->add_option("--stride", train_args.stride, "override window stride");
  train->add_option("--rdrop-alpha", train_args.rdrop_alpha, "override R-Drop weight");
  train->add_option("--dropout", train_args.dropout, "override dropout rate for all stacks");
  train->add_flag("--no-tnp", train_args.no_tnp, "drop the TNP stream (ablation)");
  train->add_flag("--vanilla-attention", train_args.vanilla_attention,
                  "use vanilla attention everywhere (ablation)");

  std::string eval_checkpoint, eval_data, eval_json = "eval_report.json";
  CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint on labeled data");
  evaluate->add_option("--checkpoint", eval_checkpoint, "model file")->required();
  evaluate->add_option("--data", eval_data, "labeled .txt/.tsv file or directory")->required();
  evaluate->add_option("--json-out", eval_json, "where to write the JSON report");

  std::string pred_checkpoint, pred_input, pred_output;
  CLI::App* predict = app.add_subcommand("predict", "punctuate raw text");
  predict->add_option("--checkpoint", pred_checkpoint, "model file")->required();
  predict->add_option("--input", pred_input, "input text file (default: stdin)");
  predict->add_option("--output", pred_output, "output file (default: stdout)");

  std::string gc_config;
  double gc_step = 1e-5, gc_tol = 1e-4;
  std::uint64_t gc_seed = 1;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "verify analytic gradients against finite differences");
  gradcheck->add_option("--config", gc_config, "JSON run configuration (model section)");
  gradcheck->add_option("--step", gc_step, "finite-difference step");
  gradcheck->add_option("--tolerance", gc_tol, "max relative error");
  gradcheck->add_option("--seed", gc_seed, "init seed");

  std::string stats_data, stats_json, stats_tsv;
  CLI::App* stats = app.add_subcommand("stats", "label distribution of a corpus");
  stats->add_option("--data", stats_data, "corpus file or directory")->required();
  stats->add_option("--json-out", stats_json, "optional JSON output");
  stats->add_option("--export-tsv", stats_tsv, "write the labeled corpus as TSV cache files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (evaluate->parsed()) return cmd_evaluate(eval_checkpoint, eval_data, eval_json);
    if (predict->parsed()) return cmd_predict(pred_checkpoint, pred_input, pred_output);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_config, gc_step, gc_tol, gc_seed);
    if (stats->parsed()) return cmd_stats(stats_data, stats_json, stats_tsv);
  } catch (const ff2::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ff2::FormatError& e) {
    std::cerr << "model file error: " << e.what() << "\n";
    return kExitData;
  } catch (const ff2::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ff2::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}
