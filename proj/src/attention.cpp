#include "capstag/attention.hpp"

#include <cmath>

#include "capstag/errors.hpp"

namespace capstag {

AttentionParams::AttentionParams(const std::string& prefix, const AttentionConfig& cfg, Rng& rng)
    : config(cfg) {
  if (cfg.heads == 0 || cfg.model_dim % cfg.heads != 0)
    throw ConfigError("attention heads (" + std::to_string(cfg.heads) +
                      ") must divide model dim (" + std::to_string(cfg.model_dim) + ")");
  const std::size_t d = cfg.model_dim;
  const std::size_t hd = cfg.head_dim();
  auto init = [&](const std::string& name, std::size_t r, std::size_t c) {
    const double bound = std::sqrt(6.0 / static_cast<double>(r + c));
    Tensor t = Tensor::zeros({r, c});
    for (double& v : t.data) v = uniform_range(rng, -bound, bound);
    return Parameter(name, std::move(t));
  };
  heads.resize(cfg.heads);
  for (std::size_t i = 0; i < cfg.heads; ++i) {
    const std::string hp = prefix + ".h" + std::to_string(i);
    heads[i].wq = init(hp + ".wq", d, hd);
    heads[i].wk = init(hp + ".wk", d, hd);
    heads[i].wv = init(hp + ".wv", d, hd);
  }
  wo = init(prefix + ".wo", cfg.heads * hd, d);
}

Var scaled_dot_attention(Tape& tape, Var q, Var k, Var v, std::size_t scale_dim,
                         Tensor* weights_out) {
  const Tensor& qv = tape.value(q);
  const Tensor& kv = tape.value(k);
  const Tensor& vv = tape.value(v);
  if (qv.rank() != 2 || kv.rank() != 2 || vv.rank() != 2 || qv.shape[0] != kv.shape[0] ||
      kv.shape[0] != vv.shape[0] || qv.shape[1] != kv.shape[1])
    throw DimensionError("scaled_dot_attention: Q " + qv.shape_str() + ", K " + kv.shape_str() +
                         ", V " + vv.shape_str());

  Var scores = tape.scale(tape.matmul(q, tape.transpose(k)),
                          1.0 / std::sqrt(static_cast<double>(scale_dim)));
  Var weights = tape.softmax(scores, 1);
  if (weights_out) *weights_out = tape.value(weights);
  return tape.matmul(weights, v);
}

Var multi_head_attention(Tape& tape, AttentionParams& params, Var h_in, AttentionTrace* trace) {
  const Tensor& hv = tape.value(h_in);
  if (hv.rank() != 2 || hv.shape[1] != params.config.model_dim)
    throw DimensionError("multi_head_attention: input " + hv.shape_str() + ", model dim " +
                         std::to_string(params.config.model_dim));
  const std::size_t scale_dim =
      params.config.scale_by_head_dim ? params.config.head_dim() : params.config.model_dim;

  if (trace) trace->head_weights.assign(params.heads.size(), Tensor{});
  Var joined;
  for (std::size_t i = 0; i < params.heads.size(); ++i) {
    AttentionParams::Head& head = params.heads[i];
    Var q = tape.matmul(h_in, tape.param(head.wq));
    Var k = tape.matmul(h_in, tape.param(head.wk));
    Var v = tape.matmul(h_in, tape.param(head.wv));
    Var scored = scaled_dot_attention(tape, q, k, v, scale_dim,
                                      trace ? &trace->head_weights[i] : nullptr);
    joined = i == 0 ? scored : tape.concat(joined, scored, 1);
  }
  return tape.matmul(joined, tape.param(params.wo));
}

}  // namespace capstag
