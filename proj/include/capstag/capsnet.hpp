#pragma once

#include <string>
#include <vector>

#include "capstag/tape.hpp"

namespace capstag {

struct CapsuleConfig {
  std::size_t num_primary = 32;
  std::size_t primary_dim = 8;
  std::size_t digit_dim = 16;
  std::size_t routing_iterations = 3;
  // Coupling softmax normalizes over digit capsules for each primary capsule
  // (the original routing convention); false normalizes over primaries.
  bool softmax_over_digits = true;
};

// One digit capsule per label; its norm is the label's emission score.
struct CapsuleParams {
  Parameter primary_w;  // (num_primary*primary_dim) x input_dim
  Parameter primary_b;  // num_primary*primary_dim
  Parameter digit_w;    // num_primary x labels x digit_dim x primary_dim
  CapsuleConfig config;
  std::size_t input_dim = 0;
  std::size_t num_labels = 0;

  CapsuleParams() = default;
  CapsuleParams(const std::string& prefix, const CapsuleConfig& config, std::size_t input_dim,
                std::size_t num_labels, Rng& rng);
};

// Coupling matrices captured at each routing iteration, {num_primary, labels}.
struct RoutingTrace {
  std::vector<Tensor> couplings;
};

// v = s * |s| / (1 + |s|^2): norm in [0,1), direction kept, 0 maps to 0.
Var squash(Tape& tape, Var s);

// Linear projection of one attended feature vector into num_primary squashed
// capsules of primary_dim.
Var primary_capsules(Tape& tape, CapsuleParams& params, Var h_t);  // {d} -> {P,d_p}

// u_hat[i,j] = W_ij u_i for every (primary i, digit j) pair.
Var prediction_vectors(Tape& tape, CapsuleParams& params, Var u);  // {P,d_p} -> {P,L,D}

// Iterative agreement routing; couplings start uniform (logits zero) and all
// iterations stay on the tape, so gradients flow through the couplings.
Var dynamic_routing(Tape& tape, Var u_hat, std::size_t iterations, bool softmax_over_digits,
                    RoutingTrace* trace = nullptr);  // {P,L,D} -> {L,D}

Var label_scores(Tape& tape, Var v);  // {L,D} -> {L}, per-capsule norms

// Full per-position pipeline over a feature sequence; capsule parameters are
// shared across positions and each position routes independently.
Var capsule_emissions(Tape& tape, CapsuleParams& params, Var h_seq,
                      std::vector<RoutingTrace>* traces = nullptr);  // {n,d} -> {n,L}

}  // namespace capstag
