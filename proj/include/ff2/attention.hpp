#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ff2/errors.hpp"
#include "ff2/rng.hpp"
#include "ff2/tensor.hpp"

namespace ff2 {

enum class AttentionMode { kVanilla, kInteraction };

inline std::string to_string(AttentionMode mode) {
  return mode == AttentionMode::kVanilla ? "vanilla" : "interaction";
}

inline AttentionMode attention_mode_from_string(const std::string& s) {
  if (s == "vanilla") return AttentionMode::kVanilla;
  if (s == "interaction") return AttentionMode::kInteraction;
  throw ConfigError("unknown attention mode '" + s +
                    "' (expected 'vanilla' or 'interaction')");
}

struct AttentionConfig {
  int d_emb = 0;
  int heads = 1;
  AttentionMode mode = AttentionMode::kInteraction;
  double dropout_rate = 0.0;

  int d_head() const { return d_emb / heads; }

  void validate() const {
    if (d_emb < 1 || heads < 1 || d_emb % heads != 0) {
      throw ConfigError("attention: d_emb " + std::to_string(d_emb) +
                        " must be a positive multiple of heads " +
                        std::to_string(heads));
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
      throw ConfigError("attention: dropout_rate must lie in [0, 1)");
    }
  }
};

// Per-layer projections plus, in interaction mode, the head-mixing matrix.
// Full d_emb x d_emb projections; per-head slices are views of the feature
// axis (concatenating the head slices reconstitutes the full projection).
struct AttentionParams {
  Tensor w_q, w_k, w_v;  // [d_emb x d_emb]
  Tensor w_out;          // [d_emb x d_emb]
  Tensor b_out;          // [d_emb]
  Tensor p_lambda;       // [H x H], defined iff mode == interaction
};

// Projections: zero-mean Gaussian, std 1/sqrt(d_emb). Mixing matrix:
// zero-mean Gaussian, std 0.1/sqrt(d_emb), which keeps the layer close to
// vanilla attention at initialization.
inline AttentionParams init_attention_params(const AttentionConfig& config,
                                             Rng& rng) {
  config.validate();
  const int d = config.d_emb;
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionParams params;
  params.w_q = Tensor::randn({d, d}, rng, proj_std, true);
  params.w_k = Tensor::randn({d, d}, rng, proj_std, true);
  params.w_v = Tensor::randn({d, d}, rng, proj_std, true);
  params.w_out = Tensor::randn({d, d}, rng, proj_std, true);
  params.b_out = Tensor::zeros({d}, true);
  if (config.mode == AttentionMode::kInteraction) {
    params.p_lambda =
        Tensor::randn({config.heads, config.heads}, rng,
                      0.1 / std::sqrt(static_cast<double>(d)), true);
  }
  return params;
}

struct QkvHeads {
  Tensor q, k, v;  // each [H x n x d_head]
};

// Q = x W_Q, K = x W_K, V = x W_V, then the feature axis is sliced into
// per-head blocks.
inline QkvHeads project_qkv(const Tensor& x, const AttentionParams& params,
                            const AttentionConfig& config) {
  detail::check_rank(x, 2, "project_qkv");
  if (x.dim(0) < 1) throw ContractError("project_qkv: empty sequence");
  if (x.dim(1) != config.d_emb) {
    throw ShapeError("project_qkv: input width " + std::to_string(x.dim(1)) +
                     " != d_emb " + std::to_string(config.d_emb));
  }
  QkvHeads out;
  out.q = split_heads(matmul(x, params.w_q), config.heads);
  out.k = split_heads(matmul(x, params.w_k), config.heads);
  out.v = split_heads(matmul(x, params.w_v), config.heads);
  return out;
}

// Raw per-head dot-product logit maps J[k] = Q[k] K[k]^T, one n x n matrix
// per head. Unscaled: the 1/sqrt(d_emb/H) divisor is applied inside the
// softmax step, so interaction mixes unscaled logits.
inline Tensor head_logits(const Tensor& q, const Tensor& k) {
  return bmm_nt(q, k);
}

// Cross-head logit mixing with identity residual:
//   J_hat[k] = sum_j P[k][j] * J[j] + J[k].
// Linear in J; differentiable in both J and P.
inline Tensor interact(const Tensor& logits, const Tensor& p_lambda) {
  detail::check_rank(logits, 3, "interact");
  detail::check_rank(p_lambda, 2, "interact");
  const int heads = logits.dim(0);
  if (p_lambda.dim(0) != heads || p_lambda.dim(1) != heads) {
    throw ShapeError("interact: logit stack has " + std::to_string(heads) +
                     " heads but mixing matrix is " +
                     shape_str(p_lambda.shape()));
  }
  const int n = logits.dim(1), m = logits.dim(2);
  Tensor flat = reshape(logits, {heads, n * m});
  Tensor mixed = add(matmul(p_lambda, flat), flat);
  return reshape(mixed, {heads, n, m});
}

// softmax(logits / sqrt(d_emb/H)) V per head, with optional key masking
// (padded keys get -1e9 added to their logits pre-softmax) and attention
// dropout on the post-softmax weights in training mode.
inline Tensor attend(const Tensor& logits, const Tensor& v,
                     const AttentionConfig& config,
                     const std::vector<std::uint8_t>& mask, bool training,
                     Rng& rng) {
  detail::check_rank(logits, 3, "attend");
  detail::check_rank(v, 3, "attend");
  const int n = logits.dim(1);
  Tensor scaled =
      scale(logits, 1.0 / std::sqrt(static_cast<double>(config.d_head())));
  if (!mask.empty()) {
    if (mask.size() != static_cast<std::size_t>(n)) {
      throw ShapeError("attend: mask length " + std::to_string(mask.size()) +
                       " != sequence length " + std::to_string(n));
    }
    bool any_valid = false;
    for (std::uint8_t m : mask) any_valid = any_valid || (m != 0);
    if (!any_valid) throw ContractError("attend: all positions are padded");
    bool all_valid = true;
    for (std::uint8_t m : mask) all_valid = all_valid && (m != 0);
    if (!all_valid) {
      Tensor bias = Tensor::zeros({n, n});
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (!mask[static_cast<std::size_t>(j)]) {
            bias.values()[static_cast<std::size_t>(i) * n + j] = -1e9;
          }
        }
      }
      scaled = add_bcast_batch(scaled, bias);
    }
  }
  Tensor weights = softmax_lastdim(scaled);
  weights = dropout(weights, config.dropout_rate, rng, training);
  return bmm(weights, v);
}

// M = Concat(head_1, ..., head_H) W + B.
inline Tensor merge_heads(const Tensor& head_outputs, const Tensor& w_out,
                          const Tensor& b_out) {
  return add_rows(matmul(merge_cols(head_outputs), w_out), b_out);
}

// Full sublayer: project -> logits -> (interact) -> masked attend -> merge.
// The residual connection and layer norm around this sublayer belong to the
// encoder block.
inline Tensor self_attention_layer(const Tensor& x,
                                   const AttentionParams& params,
                                   const AttentionConfig& config,
                                   const std::vector<std::uint8_t>& mask,
                                   bool training, Rng& rng) {
  config.validate();
  QkvHeads qkv = project_qkv(x, params, config);
  Tensor logits = head_logits(qkv.q, qkv.k);
  if (config.mode == AttentionMode::kInteraction) {
    if (!params.p_lambda.defined()) {
      throw ContractError("self_attention_layer: interaction mode without P_lambda");
    }
    logits = interact(logits, params.p_lambda);
  }
  Tensor attended = attend(logits, qkv.v, config, mask, training, rng);
  return merge_heads(attended, params.w_out, params.b_out);
}

}  // namespace ff2
