#pragma once

#include <string>
#include <vector>

#include "capstag/tape.hpp"

namespace capstag {

struct AttentionConfig {
  std::size_t heads = 4;
  std::size_t model_dim = 200;  // d, the encoder output width
  // Scale scores by 1/sqrt(head_dim) instead of 1/sqrt(model_dim).
  bool scale_by_head_dim = false;

  std::size_t head_dim() const { return model_dim / heads; }
};

struct AttentionParams {
  struct Head {
    Parameter wq, wk, wv;  // d x head_dim
  };
  std::vector<Head> heads;
  Parameter wo;  // (heads*head_dim) x d
  AttentionConfig config;

  AttentionParams() = default;
  AttentionParams(const std::string& prefix, const AttentionConfig& config, Rng& rng);
};

// Captured per-head attention weights, one n x n matrix per head.
struct AttentionTrace {
  std::vector<Tensor> head_weights;
};

// softmax(Q K^T / sqrt(scale_dim)) V, softmax over keys within each row.
Var scaled_dot_attention(Tape& tape, Var q, Var k, Var v, std::size_t scale_dim,
                         Tensor* weights_out = nullptr);

// Heads evaluated on shared input, concatenated along features, projected
// back to model_dim. No residual path.
Var multi_head_attention(Tape& tape, AttentionParams& params, Var h_in,
                         AttentionTrace* trace = nullptr);

}  // namespace capstag
