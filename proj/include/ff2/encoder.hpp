#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ff2/attention.hpp"
#include "ff2/errors.hpp"
#include "ff2/rng.hpp"
#include "ff2/tensor.hpp"

namespace ff2 {

constexpr double kLayerNormEps = 1e-5;

struct EncoderConfig {
  int layers = 1;
  int d_emb = 0;
  int heads = 1;
  int d_ff = 0;
  AttentionMode mode = AttentionMode::kInteraction;
  double dropout_rate = 0.0;
  int max_len = 256;
  int vocab_size = 0;  // 0 for stacks that do not own embeddings

  AttentionConfig attention() const {
    return AttentionConfig{d_emb, heads, mode, dropout_rate};
  }

  void validate() const {
    attention().validate();
    if (layers < 0) throw ConfigError("encoder: layers must be >= 0");
    if (d_ff < d_emb) {
      throw ConfigError("encoder: d_ff " + std::to_string(d_ff) +
                        " must be >= d_emb " + std::to_string(d_emb));
    }
    if (max_len < 1) throw ConfigError("encoder: max_len must be >= 1");
    if (vocab_size < 0) throw ConfigError("encoder: vocab_size must be >= 0");
  }
};

struct EncoderBlockParams {
  AttentionParams attn;
  Tensor ln1_gain, ln1_bias;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Tensor ln2_gain, ln2_bias;
};

// Token and learned positional embeddings plus L transformer blocks.
// Stacks without embeddings (the fusion layer) leave the tables undefined
// and are driven through run_blocks.
struct EncoderParams {
  Tensor tok_emb;  // [vocab_size x d_emb]
  Tensor pos_emb;  // [max_len x d_emb]
  std::vector<EncoderBlockParams> blocks;
};

// Parameters per transformer block:
//   attention  4*d^2 + d  (+ H^2 in interaction mode)
//   layer norm 4*d
//   ffn        2*d*d_ff + d_ff + d
inline std::int64_t per_block_param_count(const EncoderConfig& c) {
  std::int64_t d = c.d_emb, ff = c.d_ff;
  std::int64_t count = 4 * d * d + d + 4 * d + 2 * d * ff + ff + d;
  if (c.mode == AttentionMode::kInteraction) {
    count += static_cast<std::int64_t>(c.heads) * c.heads;
  }
  return count;
}

inline EncoderBlockParams init_encoder_block(const EncoderConfig& config,
                                             Rng& rng) {
  const int d = config.d_emb, ff = config.d_ff;
  EncoderBlockParams block;
  block.attn = init_attention_params(config.attention(), rng);
  block.ln1_gain = Tensor::full({d}, 1.0, true);
  block.ln1_bias = Tensor::zeros({d}, true);
  block.ffn_w1 = Tensor::randn({d, ff}, rng, 1.0 / std::sqrt(static_cast<double>(d)), true);
  block.ffn_b1 = Tensor::zeros({ff}, true);
  block.ffn_w2 = Tensor::randn({ff, d}, rng, 1.0 / std::sqrt(static_cast<double>(ff)), true);
  block.ffn_b2 = Tensor::zeros({d}, true);
  block.ln2_gain = Tensor::full({d}, 1.0, true);
  block.ln2_bias = Tensor::zeros({d}, true);
  return block;
}

inline EncoderParams init_encoder_params(const EncoderConfig& config, Rng& rng,
                                         bool owns_embeddings = true) {
  config.validate();
  EncoderParams params;
  if (owns_embeddings) {
    if (config.vocab_size < 2) {
      throw ConfigError("encoder: vocab_size must be >= 2 (PAD and UNK)");
    }
    const double emb_std = 1.0 / std::sqrt(static_cast<double>(config.d_emb));
    params.tok_emb = Tensor::randn({config.vocab_size, config.d_emb}, rng, emb_std, true);
    params.pos_emb = Tensor::randn({config.max_len, config.d_emb}, rng, emb_std, true);
  }
  params.blocks.reserve(static_cast<std::size_t>(config.layers));
  for (int l = 0; l < config.layers; ++l) {
    params.blocks.push_back(init_encoder_block(config, rng));
  }
  return params;
}

// nonlinearity(x W1 + b1) W2 + b2
inline Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1,
                           const Tensor& w2, const Tensor& b2) {
  return add_rows(matmul(gelu(add_rows(matmul(x, w1), b1)), w2), b2);
}

// Post-norm block: x -> LN(x + Drop(Attn(x))) -> LN(. + Drop(FFN(.))).
inline Tensor encoder_block(const Tensor& x, const EncoderBlockParams& block,
                            const EncoderConfig& config,
                            const std::vector<std::uint8_t>& mask,
                            bool training, Rng& rng) {
  Tensor a = self_attention_layer(x, block.attn, config.attention(), mask,
                                  training, rng);
  a = dropout(a, config.dropout_rate, rng, training);
  Tensor h = layer_norm(add(x, a), block.ln1_gain, block.ln1_bias, kLayerNormEps);
  Tensor f = feed_forward(h, block.ffn_w1, block.ffn_b1, block.ffn_w2, block.ffn_b2);
  f = dropout(f, config.dropout_rate, rng, training);
  return layer_norm(add(h, f), block.ln2_gain, block.ln2_bias, kLayerNormEps);
}

// Runs the block stack over already-embedded features (the fusion layer's
// entry point).
inline Tensor run_blocks(const Tensor& x, const EncoderParams& params,
                         const EncoderConfig& config,
                         const std::vector<std::uint8_t>& mask, bool training,
                         Rng& rng) {
  Tensor h = x;
  for (const EncoderBlockParams& block : params.blocks) {
    h = encoder_block(h, block, config, mask, training, rng);
  }
  return h;
}

// Embedding lookup + positional embedding, then L transformer blocks.
inline Tensor encode(const std::vector<int>& token_ids,
                     const std::vector<std::uint8_t>& mask,
                     const EncoderParams& params, const EncoderConfig& config,
                     bool training, Rng& rng) {
  const int n = static_cast<int>(token_ids.size());
  if (n < 1) throw ContractError("encode: empty sequence");
  if (n > config.max_len) {
    throw DataError("encode: sequence length " + std::to_string(n) +
                    " exceeds max_len " + std::to_string(config.max_len));
  }
  if (mask.size() != token_ids.size()) {
    throw ShapeError("encode: mask length mismatch");
  }
  if (!params.tok_emb.defined() || !params.pos_emb.defined()) {
    throw ContractError("encode: stack does not own embedding tables");
  }
  std::vector<int> positions(token_ids.size());
  for (int i = 0; i < n; ++i) positions[static_cast<std::size_t>(i)] = i;
  Tensor h = add(embedding_rows(params.tok_emb, token_ids),
                 embedding_rows(params.pos_emb, positions));
  return run_blocks(h, params, config, mask, training, rng);
}

inline void collect_parameters(const std::string& prefix,
                               const EncoderParams& params,
                               std::vector<NamedTensor>& out) {
  if (params.tok_emb.defined()) out.push_back({prefix + ".tok_emb", params.tok_emb});
  if (params.pos_emb.defined()) out.push_back({prefix + ".pos_emb", params.pos_emb});
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    const EncoderBlockParams& b = params.blocks[i];
    const std::string bp = prefix + ".block" + std::to_string(i);
    out.push_back({bp + ".attn.w_q", b.attn.w_q});
    out.push_back({bp + ".attn.w_k", b.attn.w_k});
    out.push_back({bp + ".attn.w_v", b.attn.w_v});
    out.push_back({bp + ".attn.w_out", b.attn.w_out});
    out.push_back({bp + ".attn.b_out", b.attn.b_out});
    if (b.attn.p_lambda.defined()) {
      out.push_back({bp + ".attn.p_lambda", b.attn.p_lambda});
    }
    out.push_back({bp + ".ln1_gain", b.ln1_gain});
    out.push_back({bp + ".ln1_bias", b.ln1_bias});
    out.push_back({bp + ".ffn_w1", b.ffn_w1});
    out.push_back({bp + ".ffn_b1", b.ffn_b1});
    out.push_back({bp + ".ffn_w2", b.ffn_w2});
    out.push_back({bp + ".ffn_b2", b.ffn_b2});
    out.push_back({bp + ".ln2_gain", b.ln2_gain});
    out.push_back({bp + ".ln2_bias", b.ln2_bias});
  }
}

}  // namespace ff2
