#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ff2/data.hpp"
#include "ff2/errors.hpp"
#include "ff2/model.hpp"
#include "ff2/serialize.hpp"
#include "ff2/train.hpp"

namespace ff2 {

// A full training run as one reproducible unit: vocabulary build, windowing,
// seeded initialization, the epoch loop, and the three output artifacts
// (checkpoint, history JSON, model card). Identical job + seed yields
// byte-identical artifacts.
struct TrainingJob {
  FF2Config model_config;  // vocab_size fields are filled from the corpus
  TrainConfig train_config;
  std::vector<LabeledDocument> train_docs;
  std::vector<LabeledDocument> val_docs;
  int min_count = 1;
  int stride = 0;  // 0 -> max_len / 2
  std::string output_dir;
  StopPredicate extra_stop;
};

struct TrainingOutcome {
  FF2Model model;
  Vocabulary vocab;
  TrainResult result;
  std::string checkpoint_path;
  std::string history_path;
  std::string model_card_path;
};

inline nlohmann::json history_json(const TrainingJob& job,
                                   const TrainResult& result) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochRecord& rec : result.history) {
    epochs.push_back({
        {"epoch", rec.epoch},
        {"train_loss", rec.train_loss},
        {"val", report_json(rec.val)},
    });
  }
  return nlohmann::json{
      {"model_config", ff2_config_to_json(job.model_config)},
      {"train_config", train_config_to_json(job.train_config)},
      {"seed", job.train_config.seed},
      {"best_epoch", result.best_epoch},
      {"best_val_f1", result.best_val_f1},
      {"epochs_since_best", result.epochs_since_best},
      {"adam_steps", result.adam_steps},
      {"epochs", epochs},
  };
}

// Records every convention and default that stands in for an unspecified
// choice, so each checkpoint travels with its own assumptions.
inline nlohmann::json model_card_json(const TrainingJob& job) {
  nlohmann::json marks;
  for (const auto& [mark, label] : NormalizationRules{}.marks) {
    marks[std::string(1, mark)] = label_name(label);
  }
  return nlohmann::json{
      {"architecture",
       "two-stream transformer (ITE + TNP) with cross-head logit mixing, "
       "feature concatenation, one fusion layer and a linear token classifier"},
      {"label_set", {"O", "COMMA", "PERIOD", "QUESTION"}},
      {"model_config", ff2_config_to_json(job.model_config)},
      {"rdrop_alpha", job.model_config.rdrop_alpha},
      {"conventions",
       {
           {"ite_stand_in",
            "randomly initialized encoder; no pretrained weights are loaded"},
           {"initialization",
            {{"projections", "gaussian, std 1/sqrt(d_emb)"},
             {"p_lambda", "gaussian, std 0.1/sqrt(d_emb)"},
             {"embeddings", "gaussian, std 1/sqrt(d_emb)"},
             {"ffn", "gaussian, std 1/sqrt(fan_in)"},
             {"biases_and_ln", "zeros; layer-norm gains 1"}}},
           {"block_order", "post-norm: attention -> add -> LN -> FFN -> add -> LN"},
           {"logit_scaling",
            "heads mix unscaled logits; 1/sqrt(d_emb/heads) applied inside softmax"},
           {"positional_embeddings",
            "learned, per stream; the fusion layer adds none"},
           {"padding", "additive -1e9 key-logit mask before softmax"},
           {"loss",
            "cross-entropy against true labels, mean over unmasked tokens then over batch"},
           {"optimizer", "adam, single learning rate for all parameter groups, no schedule"},
           {"early_stopping",
            "stop after `patience` consecutive epochs without validation F1 "
            "improvement; ties keep the earlier epoch"},
           {"normalization_table", marks},
           {"tokenization", "whitespace words, ASCII lowercased, apostrophe kept"},
           {"rng",
            "xoshiro256** seeded via splitmix64; Box-Muller normals; see rng.hpp"},
           {"layer_norm_eps", kLayerNormEps},
       }},
  };
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << text;
}

inline TrainingOutcome run_training_job(TrainingJob job) {
  job.train_config.validate();
  if (job.train_docs.empty()) throw ConfigError("training corpus is empty");
  if (job.val_docs.empty()) throw ConfigError("validation corpus is empty");

  const Vocabulary vocab = Vocabulary::build(job.train_docs, job.min_count);
  job.model_config.ite.vocab_size = vocab.size();
  job.model_config.tnp.vocab_size = vocab.size();
  job.model_config.validate();

  const int max_len = job.model_config.ite.max_len;
  const int stride = job.stride > 0 ? job.stride : std::max(1, max_len / 2);
  const std::vector<LabeledSequence> train_set =
      encode_documents(job.train_docs, vocab, max_len, stride);
  const std::vector<LabeledSequence> val_set =
      encode_documents(job.val_docs, vocab, max_len, stride);
  if (train_set.empty()) throw DataError("training corpus produced no windows");
  if (val_set.empty()) throw DataError("validation corpus produced no windows");

  Rng rng(job.train_config.seed);
  TrainingOutcome outcome;
  outcome.vocab = vocab;
  outcome.model = init_model(job.model_config, rng);
  outcome.result = train(outcome.model, train_set, val_set, job.train_config,
                         rng, job.extra_stop);

  if (!job.output_dir.empty()) {
    std::filesystem::create_directories(job.output_dir);
    outcome.checkpoint_path = job.output_dir + "/model.ff2";
    outcome.history_path = job.output_dir + "/history.json";
    outcome.model_card_path = job.output_dir + "/model_card.json";
    save_model(outcome.model, vocab, outcome.checkpoint_path);
    write_text_file(outcome.history_path,
                    history_json(job, outcome.result).dump(2) + "\n");
    write_text_file(outcome.model_card_path,
                    model_card_json(job).dump(2) + "\n");
  }
  return outcome;
}

// Document-level prediction: windows the token stream with stride
// max_len / 2, predicts per window and stitches by edge distance.
inline std::vector<Label> predict_document(const FF2Model& model,
                                           const Vocabulary& vocab,
                                           const std::vector<std::string>& tokens) {
  const int max_len = model.config.ite.max_len;
  std::vector<int> ids(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) ids[i] = vocab.encode(tokens[i]);
  const std::vector<Label> dummy(tokens.size(), Label::kO);
  const std::vector<LabeledSequence> windows =
      window(ids, dummy, max_len, std::max(1, max_len / 2));
  std::vector<WindowPrediction> preds;
  preds.reserve(windows.size());
  for (const LabeledSequence& seq : windows) {
    preds.push_back({seq.start, predict(model, seq.token_ids, seq.mask)});
  }
  return stitch_predictions(std::move(preds), static_cast<int>(tokens.size()));
}

}  // namespace ff2
