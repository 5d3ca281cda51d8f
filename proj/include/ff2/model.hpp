#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "ff2/data.hpp"
#include "ff2/encoder.hpp"
#include "ff2/errors.hpp"
#include "ff2/rng.hpp"
#include "ff2/tensor.hpp"

namespace ff2 {

// Rejects keys outside the documented schema so that config typos fail
// loudly instead of silently using defaults.
inline void check_json_keys(const nlohmann::json& j,
                            std::initializer_list<const char*> allowed,
                            const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed) ok = ok || it.key() == key;
    if (!ok) throw ConfigError(context + ": unknown key '" + it.key() + "'");
  }
}

inline nlohmann::json encoder_config_to_json(const EncoderConfig& c) {
  return nlohmann::json{
      {"layers", c.layers},   {"d_emb", c.d_emb},
      {"heads", c.heads},     {"d_ff", c.d_ff},
      {"mode", to_string(c.mode)},
      {"dropout", c.dropout_rate},
      {"max_len", c.max_len}, {"vocab_size", c.vocab_size},
  };
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j,
                                              const EncoderConfig& defaults,
                                              const std::string& context) {
  check_json_keys(j, {"layers", "d_emb", "heads", "d_ff", "mode", "dropout",
                      "max_len", "vocab_size"},
                  context);
  EncoderConfig c = defaults;
  try {
    if (j.contains("layers")) c.layers = j.at("layers").get<int>();
    if (j.contains("d_emb")) c.d_emb = j.at("d_emb").get<int>();
    if (j.contains("heads")) c.heads = j.at("heads").get<int>();
    if (j.contains("d_ff")) c.d_ff = j.at("d_ff").get<int>();
    if (j.contains("mode")) {
      c.mode = attention_mode_from_string(j.at("mode").get<std::string>());
    }
    if (j.contains("dropout")) c.dropout_rate = j.at("dropout").get<double>();
    if (j.contains("max_len")) c.max_len = j.at("max_len").get<int>();
    if (j.contains("vocab_size")) c.vocab_size = j.at("vocab_size").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(context + ": " + e.what());
  }
  return c;
}

// Two encoder streams, a one-layer fusion transformer over their feature
// concatenation, and a linear token classifier. The label set is fixed at
// [O, COMMA, PERIOD, QUESTION].
struct FF2Config {
  EncoderConfig ite;     // larger stream (pretrained model stand-in)
  EncoderConfig tnp;     // tiny non-pretrained stream
  EncoderConfig fusion;  // one layer, d_emb derived, no embeddings
  bool use_tnp = true;
  double rdrop_alpha = 1.0;
  int num_labels = kNumLabels;

  int fusion_width() const {
    return ite.d_emb + (use_tnp ? tnp.d_emb : 0);
  }

  void validate() const {
    ite.validate();
    if (use_tnp) tnp.validate();
    fusion.validate();
    if (fusion.layers != 1) {
      throw ConfigError("ff2: fusion layer count must be 1, got " +
                        std::to_string(fusion.layers));
    }
    if (fusion.d_emb != fusion_width()) {
      throw ConfigError("ff2: fusion d_emb " + std::to_string(fusion.d_emb) +
                        " must equal the concatenated stream width " +
                        std::to_string(fusion_width()));
    }
    if (fusion.vocab_size != 0) {
      throw ConfigError("ff2: fusion stack does not own embeddings");
    }
    if (use_tnp) {
      if (ite.max_len != tnp.max_len) {
        throw ConfigError("ff2: ite and tnp max_len must agree");
      }
      if (ite.vocab_size != tnp.vocab_size) {
        throw ConfigError("ff2: ite and tnp vocab_size must agree");
      }
    }
    if (fusion.max_len != ite.max_len) {
      throw ConfigError("ff2: fusion max_len must match the streams");
    }
    if (rdrop_alpha < 0.0) {
      throw ConfigError("ff2: rdrop_alpha must be nonnegative");
    }
    if (num_labels != kNumLabels) {
      throw ConfigError("ff2: the label set is fixed at 4 classes");
    }
  }
};

// Desk-scale defaults. The paper-scale counterparts (pretrained
// Electra-large stream, fusion hidden size 3072) stay reachable through
// configuration; the model card emitted at training time records the
// substitutions in effect.
inline FF2Config default_ff2_config() {
  FF2Config c;
  c.ite = {/*layers=*/4, /*d_emb=*/64, /*heads=*/4, /*d_ff=*/256,
           AttentionMode::kInteraction, /*dropout=*/0.2, /*max_len=*/256,
           /*vocab_size=*/0};
  c.tnp = {/*layers=*/6, /*d_emb=*/32, /*heads=*/4, /*d_ff=*/128,
           AttentionMode::kInteraction, /*dropout=*/0.2, /*max_len=*/256,
           /*vocab_size=*/0};
  c.fusion = {/*layers=*/1, /*d_emb=*/96, /*heads=*/8, /*d_ff=*/384,
              AttentionMode::kInteraction, /*dropout=*/0.2, /*max_len=*/256,
              /*vocab_size=*/0};
  return c;
}

inline nlohmann::json ff2_config_to_json(const FF2Config& c) {
  return nlohmann::json{
      {"ite", encoder_config_to_json(c.ite)},
      {"tnp", encoder_config_to_json(c.tnp)},
      {"fusion", encoder_config_to_json(c.fusion)},
      {"use_tnp", c.use_tnp},
      {"rdrop_alpha", c.rdrop_alpha},
      {"num_labels", c.num_labels},
  };
}

inline FF2Config ff2_config_from_json(const nlohmann::json& j,
                                      const FF2Config& defaults,
                                      const std::string& context) {
  check_json_keys(
      j, {"ite", "tnp", "fusion", "use_tnp", "rdrop_alpha", "num_labels"},
      context);
  FF2Config c = defaults;
  try {
    if (j.contains("ite")) {
      c.ite = encoder_config_from_json(j.at("ite"), defaults.ite, context + ".ite");
    }
    if (j.contains("tnp")) {
      c.tnp = encoder_config_from_json(j.at("tnp"), defaults.tnp, context + ".tnp");
    }
    if (j.contains("fusion")) {
      c.fusion = encoder_config_from_json(j.at("fusion"), defaults.fusion,
                                          context + ".fusion");
    }
    if (j.contains("use_tnp")) c.use_tnp = j.at("use_tnp").get<bool>();
    if (j.contains("rdrop_alpha")) c.rdrop_alpha = j.at("rdrop_alpha").get<double>();
    if (j.contains("num_labels")) c.num_labels = j.at("num_labels").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(context + ": " + e.what());
  }
  return c;
}

struct FF2Model {
  FF2Config config;
  EncoderParams ite;
  EncoderParams tnp;
  EncoderParams fusion;
  Tensor cls_w;  // [fusion_width x 4]
  Tensor cls_b;  // [4]
};

inline FF2Model init_model(const FF2Config& config, Rng& rng) {
  config.validate();
  FF2Model model;
  model.config = config;
  model.ite = init_encoder_params(config.ite, rng, /*owns_embeddings=*/true);
  if (config.use_tnp) {
    model.tnp = init_encoder_params(config.tnp, rng, /*owns_embeddings=*/true);
  }
  model.fusion = init_encoder_params(config.fusion, rng, /*owns_embeddings=*/false);
  const int width = config.fusion_width();
  model.cls_w = Tensor::randn({width, kNumLabels}, rng,
                              1.0 / std::sqrt(static_cast<double>(width)), true);
  model.cls_b = Tensor::zeros({kNumLabels}, true);
  return model;
}

// Fixed enumeration order; serialization, the optimizer and gradient checks
// all iterate parameters through this list.
inline std::vector<NamedTensor> model_parameters(const FF2Model& model) {
  std::vector<NamedTensor> params;
  collect_parameters("ite", model.ite, params);
  if (model.config.use_tnp) collect_parameters("tnp", model.tnp, params);
  collect_parameters("fusion", model.fusion, params);
  params.push_back({"classifier.w", model.cls_w});
  params.push_back({"classifier.b", model.cls_b});
  return params;
}

inline std::int64_t model_param_count(const FF2Model& model) {
  std::int64_t count = 0;
  for (const NamedTensor& p : model_parameters(model)) {
    count += static_cast<std::int64_t>(p.tensor.size());
  }
  return count;
}

// C_i = ITE(x); C_m = TNP(x); H = [C_i ; C_m] along features; one fusion
// block over H; affine classifier to 4 logits per token.
inline Tensor forward_sequence(const FF2Model& model,
                               const std::vector<int>& token_ids,
                               const std::vector<std::uint8_t>& mask,
                               bool training, Rng& rng) {
  Tensor features = encode(token_ids, mask, model.ite, model.config.ite, training, rng);
  if (model.config.use_tnp) {
    Tensor aux = encode(token_ids, mask, model.tnp, model.config.tnp, training, rng);
    features = concat_cols(features, aux);
  }
  Tensor fused = run_blocks(features, model.fusion, model.config.fusion, mask,
                            training, rng);
  return add_rows(matmul(fused, model.cls_w), model.cls_b);
}

inline std::vector<int> labels_as_int(const std::vector<Label>& labels) {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = static_cast<int>(labels[i]);
  return out;
}

// Mean over unmasked tokens of -log softmax(logits)[label].
inline Tensor cross_entropy_loss(const Tensor& logits,
                                 const std::vector<Label>& labels,
                                 const std::vector<std::uint8_t>& mask) {
  return masked_cross_entropy(logits, labels_as_int(labels), mask);
}

// Two forward passes with independent dropout masks:
//   total = 0.5 (CE_1 + CE_2) + alpha * 0.5 (KL(p1||p2) + KL(p2||p1)),
// every term averaged over unmasked tokens.
inline Tensor rdrop_loss(const FF2Model& model, const LabeledSequence& seq,
                         Rng& rng, double alpha) {
  Tensor logits_a = forward_sequence(model, seq.token_ids, seq.mask, true, rng);
  Tensor logits_b = forward_sequence(model, seq.token_ids, seq.mask, true, rng);
  const std::vector<int> labels = labels_as_int(seq.labels);
  Tensor ce = scale(add(masked_cross_entropy(logits_a, labels, seq.mask),
                        masked_cross_entropy(logits_b, labels, seq.mask)),
                    0.5);
  if (alpha == 0.0) return ce;
  Tensor kl = masked_symmetric_kl(logits_a, logits_b, seq.mask);
  return add(ce, scale(kl, alpha));
}

// Training objective for one mini-batch: per-sequence R-Drop loss, then
// mean over the batch. With all dropout rates at zero the two R-Drop passes
// are bit-identical and the loss collapses to plain cross-entropy exactly,
// so that case runs a single forward pass.
inline Tensor batch_loss(const FF2Model& model,
                         const std::vector<LabeledSequence>& data,
                         const std::vector<std::size_t>& batch, bool training,
                         Rng& rng) {
  if (batch.empty()) throw ContractError("batch_loss: empty batch");
  const FF2Config& c = model.config;
  const bool dropout_active =
      c.ite.dropout_rate > 0.0 || (c.use_tnp && c.tnp.dropout_rate > 0.0) ||
      c.fusion.dropout_rate > 0.0;
  Tensor total;
  for (std::size_t idx : batch) {
    const LabeledSequence& seq = data[idx];
    Tensor loss;
    if (training && dropout_active) {
      loss = rdrop_loss(model, seq, rng, c.rdrop_alpha);
    } else {
      Tensor logits = forward_sequence(model, seq.token_ids, seq.mask, training, rng);
      loss = cross_entropy_loss(logits, seq.labels, seq.mask);
    }
    total = total.defined() ? add(total, loss) : loss;
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

// Deterministic eval-mode argmax over the 4 classes at unmasked positions;
// padded positions report O.
inline std::vector<Label> predict(const FF2Model& model,
                                  const std::vector<int>& token_ids,
                                  const std::vector<std::uint8_t>& mask) {
  Rng rng(0);  // eval mode draws nothing
  Tensor logits = forward_sequence(model, token_ids, mask, false, rng);
  const int n = logits.dim(0);
  std::vector<Label> out(static_cast<std::size_t>(n), Label::kO);
  for (int i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const double* row = logits.values().data() + static_cast<std::size_t>(i) * kNumLabels;
    int best = 0;
    for (int k = 1; k < kNumLabels; ++k) {
      if (row[k] > row[best]) best = k;
    }
    out[static_cast<std::size_t>(i)] = static_cast<Label>(best);
  }
  return out;
}

}  // namespace ff2
