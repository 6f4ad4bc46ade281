#include "capstag/gru.hpp"

#include <cmath>

#include "capstag/errors.hpp"

namespace capstag {

GRUCell::GRUCell(const std::string& prefix, std::size_t input, std::size_t hidden, Rng& rng)
    : input_dim(input), hidden_dim(hidden) {
  const double bound = std::sqrt(6.0 / static_cast<double>(hidden + input + hidden));
  auto weight = [&](const char* gate) {
    Tensor t = Tensor::zeros({hidden, hidden + input});
    for (double& v : t.data) v = uniform_range(rng, -bound, bound);
    return Parameter(prefix + ".w_" + gate, std::move(t));
  };
  auto bias = [&](const char* gate) {
    return Parameter(prefix + ".b_" + gate, Tensor::zeros({hidden}));
  };
  w_r = weight("r");
  w_z = weight("z");
  w_h = weight("h");
  b_r = bias("r");
  b_z = bias("z");
  b_h = bias("h");
}

Var gru_cell_step(Tape& tape, GRUCell& cell, Var x_t, Var h_prev) {
  const Tensor& xv = tape.value(x_t);
  const Tensor& hv = tape.value(h_prev);
  if (xv.rank() != 1 || xv.shape[0] != cell.input_dim)
    throw DimensionError("gru_cell_step: input shape " + xv.shape_str() + ", cell input dim " +
                         std::to_string(cell.input_dim));
  if (hv.rank() != 1 || hv.shape[0] != cell.hidden_dim)
    throw DimensionError("gru_cell_step: state shape " + hv.shape_str() + ", cell hidden dim " +
                         std::to_string(cell.hidden_dim));

  Var hx = tape.concat(h_prev, x_t, 0);
  Var r = tape.sigmoid(tape.add(tape.matmul(tape.param(cell.w_r), hx), tape.param(cell.b_r)));
  Var z = tape.sigmoid(tape.add(tape.matmul(tape.param(cell.w_z), hx), tape.param(cell.b_z)));
  Var rhx = tape.concat(tape.mul(r, h_prev), x_t, 0);
  Var h_cand = tape.tanh_op(tape.add(tape.matmul(tape.param(cell.w_h), rhx), tape.param(cell.b_h)));
  return tape.add(tape.mul(tape.one_minus(z), h_prev), tape.mul(z, h_cand));
}

BiGRU::BiGRU(const std::string& prefix, std::size_t input, std::size_t hidden, Rng& rng)
    : forward_cell(prefix + ".fwd", input, hidden, rng),
      backward_cell(prefix + ".bwd", input, hidden, rng) {}

Var bigru_forward(Tape& tape, BiGRU& layer, Var x) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 2) throw DimensionError("bigru_forward: input shape " + xv.shape_str());
  const std::size_t n = xv.shape[0];
  if (n == 0) throw DimensionError("bigru_forward: empty sequence");
  const std::size_t hidden = layer.forward_cell.hidden_dim;

  std::vector<Var> fwd(n), bwd(n);
  Var h = tape.leaf(Tensor::zeros({hidden}));
  for (std::size_t t = 0; t < n; ++t) {
    h = gru_cell_step(tape, layer.forward_cell, tape.row(x, t), h);
    fwd[t] = h;
  }
  h = tape.leaf(Tensor::zeros({hidden}));
  for (std::size_t t = n; t-- > 0;) {
    h = gru_cell_step(tape, layer.backward_cell, tape.row(x, t), h);
    bwd[t] = h;
  }

  std::vector<Var> rows(n);
  for (std::size_t t = 0; t < n; ++t) rows[t] = tape.concat(fwd[t], bwd[t], 0);
  return tape.stack_rows(rows);
}

}  // namespace capstag
