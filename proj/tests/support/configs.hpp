// Shared small model configurations for tests.
#pragma once

#include "ff2/model.hpp"

namespace testcfg {

struct StreamSpec {
  int layers;
  int d_emb;
  int heads;
  int d_ff;
};

inline ff2::FF2Config tiny_ff2(StreamSpec ite, StreamSpec tnp, int fusion_heads,
                               int fusion_ff, int vocab_size, int max_len,
                               bool use_tnp = true,
                               ff2::AttentionMode mode = ff2::AttentionMode::kInteraction,
                               double dropout = 0.0) {
  ff2::FF2Config c;
  c.ite = {ite.layers, ite.d_emb, ite.heads, ite.d_ff, mode, dropout, max_len,
           vocab_size};
  c.tnp = {tnp.layers, tnp.d_emb, tnp.heads, tnp.d_ff, mode, dropout, max_len,
           vocab_size};
  c.use_tnp = use_tnp;
  const int fusion_width = ite.d_emb + (use_tnp ? tnp.d_emb : 0);
  c.fusion = {1, fusion_width, fusion_heads, fusion_ff, mode, dropout, max_len, 0};
  return c;
}

}  // namespace testcfg
