#include "capstag/capsnet.hpp"

#include <cmath>

#include "capstag/errors.hpp"

namespace capstag {

CapsuleParams::CapsuleParams(const std::string& prefix, const CapsuleConfig& cfg,
                             std::size_t input_dim_, std::size_t num_labels_, Rng& rng)
    : config(cfg), input_dim(input_dim_), num_labels(num_labels_) {
  if (cfg.num_primary == 0 || cfg.primary_dim == 0 || cfg.digit_dim == 0)
    throw ConfigError("capsule dimensions must be positive");
  if (cfg.routing_iterations < 1) throw ConfigError("routing needs at least one iteration");
  if (num_labels == 0) throw ConfigError("capsule layer needs at least one label");

  const std::size_t proj_rows = cfg.num_primary * cfg.primary_dim;
  const double proj_bound = std::sqrt(6.0 / static_cast<double>(input_dim + proj_rows));
  Tensor w = Tensor::zeros({proj_rows, input_dim});
  for (double& v : w.data) v = uniform_range(rng, -proj_bound, proj_bound);
  primary_w = Parameter(prefix + ".primary_w", std::move(w));
  primary_b = Parameter(prefix + ".primary_b", Tensor::zeros({proj_rows}));

  const double digit_bound = std::sqrt(6.0 / static_cast<double>(cfg.primary_dim + cfg.digit_dim));
  Tensor dw = Tensor::zeros({cfg.num_primary, num_labels, cfg.digit_dim, cfg.primary_dim});
  for (double& v : dw.data) v = uniform_range(rng, -digit_bound, digit_bound);
  digit_w = Parameter(prefix + ".digit_w", std::move(dw));
}

Var squash(Tape& tape, Var s) {
  const Tensor& sv = tape.value(s);
  if (sv.rank() == 1) {
    Var rows = tape.reshape(s, {1, sv.shape[0]});
    return tape.reshape(tape.squash_rows(rows), {sv.shape[0]});
  }
  return tape.squash_rows(s);
}

Var primary_capsules(Tape& tape, CapsuleParams& params, Var h_t) {
  const Tensor& hv = tape.value(h_t);
  if (hv.rank() != 1 || hv.shape[0] != params.input_dim)
    throw DimensionError("primary_capsules: input " + hv.shape_str() + ", expected length " +
                         std::to_string(params.input_dim));
  Var flat = tape.add(tape.matmul(tape.param(params.primary_w), h_t), tape.param(params.primary_b));
  Var grouped = tape.reshape(flat, {params.config.num_primary, params.config.primary_dim});
  return tape.squash_rows(grouped);
}

Var prediction_vectors(Tape& tape, CapsuleParams& params, Var u) {
  return tape.caps_predictions(tape.param(params.digit_w), u);
}

Var dynamic_routing(Tape& tape, Var u_hat, std::size_t iterations, bool softmax_over_digits,
                    RoutingTrace* trace) {
  if (iterations < 1) throw ConfigError("routing needs at least one iteration");
  const Tensor& uv = tape.value(u_hat);
  if (uv.rank() != 3) throw DimensionError("dynamic_routing: predictions " + uv.shape_str());
  const std::size_t P = uv.shape[0], L = uv.shape[1];

  Var logits = tape.leaf(Tensor::zeros({P, L}));
  Var digits;
  for (std::size_t it = 0; it < iterations; ++it) {
    Var couplings = tape.softmax(logits, softmax_over_digits ? 1 : 0);
    if (trace) trace->couplings.push_back(tape.value(couplings));
    Var pre = tape.caps_weighted_sum(couplings, u_hat);
    digits = tape.squash_rows(pre);
    if (it + 1 < iterations)
      logits = tape.add(logits, tape.caps_agreement(u_hat, digits));
  }
  return digits;
}

Var label_scores(Tape& tape, Var v) { return tape.row_norms(v); }

Var capsule_emissions(Tape& tape, CapsuleParams& params, Var h_seq,
                      std::vector<RoutingTrace>* traces) {
  const Tensor& hv = tape.value(h_seq);
  if (hv.rank() != 2 || hv.shape[0] == 0)
    throw DimensionError("capsule_emissions: input " + hv.shape_str());
  const std::size_t n = hv.shape[0];
  if (traces) traces->assign(n, RoutingTrace{});

  std::vector<Var> rows(n);
  for (std::size_t t = 0; t < n; ++t) {
    Var u = primary_capsules(tape, params, tape.row(h_seq, t));
    Var u_hat = prediction_vectors(tape, params, u);
    Var digits = dynamic_routing(tape, u_hat, params.config.routing_iterations,
                                 params.config.softmax_over_digits,
                                 traces ? &(*traces)[t] : nullptr);
    rows[t] = label_scores(tape, digits);
  }
  return tape.stack_rows(rows);
}

}  // namespace capstag
