#pragma once

#include <string>

#include "capstag/tape.hpp"

namespace capstag {

// Gated recurrent cell. Weights act on the concatenation [h_prev, x_t],
// in that order.
struct GRUCell {
  Parameter w_r, w_z, w_h;  // hidden x (hidden + input)
  Parameter b_r, b_z, b_h;  // hidden
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  GRUCell() = default;
  GRUCell(const std::string& prefix, std::size_t input, std::size_t hidden, Rng& rng);
};

// r = sigmoid(w_r [h,x] + b_r); z = sigmoid(w_z [h,x] + b_z)
// h~ = tanh(w_h [r*h, x] + b_h); h' = (1-z)*h + z*h~
Var gru_cell_step(Tape& tape, GRUCell& cell, Var x_t, Var h_prev);

// Two independent cells, one per direction; output row t is the forward state
// concatenated with the backward state, both started from zero vectors.
struct BiGRU {
  GRUCell forward_cell;
  GRUCell backward_cell;

  BiGRU() = default;
  BiGRU(const std::string& prefix, std::size_t input, std::size_t hidden, Rng& rng);

  std::size_t output_dim() const { return 2 * forward_cell.hidden_dim; }
};

Var bigru_forward(Tape& tape, BiGRU& layer, Var x);  // {n,input} -> {n,2*hidden}

}  // namespace capstag
