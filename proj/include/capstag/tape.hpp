#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "capstag/rng.hpp"
#include "capstag/tensor.hpp"

namespace capstag {

// Trainable tensor: value plus an accumulated gradient of the same shape.
struct Parameter {
  Tensor value;
  Tensor grad;
  std::string name;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : value(std::move(v)), grad(Tensor::zeros(value.shape)), name(std::move(n)) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

// Handle to a node on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

// Define-by-run reverse-mode tape. Every operation appends one node holding
// its forward value and a closure applying the chain rule; backward() walks
// nodes in exact reverse order of forward application. Gradients accumulate
// (+=) so a Parameter used several times (GRU weights across time steps)
// sums its contributions. Not safe for concurrent appends.
class Tape {
 public:
  Var leaf(Tensor v);
  // One node per Parameter per tape; backward adds into p.grad.
  // p must outlive the tape and must not be mutated while the tape is live.
  Var param(Parameter& p);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var affine(Var x, double scale, double shift);
  Var scale(Var x, double c) { return affine(x, c, 0.0); }
  Var one_minus(Var x) { return affine(x, -1.0, 1.0); }

  // 2-D x 2-D; a rank-1 operand is treated as a one-row (lhs) or
  // one-column (rhs) matrix and the result collapses back to rank 1.
  Var matmul(Var a, Var b);

  Var sigmoid(Var x);
  Var tanh_op(Var x);
  Var softmax(Var x, std::size_t axis);
  Var logsumexp(Var x, std::size_t axis);  // reduces the axis away
  Var concat(Var a, Var b, std::size_t axis);
  Var dropout(Var x, double rate, Rng& rng, bool training);

  Var gather_rows(Var table, const std::vector<std::size_t>& idx);
  Var row(Var m, std::size_t i);
  Var stack_rows(std::span<const Var> rows);
  Var transpose(Var m);
  Var reshape(Var x, std::vector<std::size_t> shape);
  Var submatrix(Var m, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1);
  Var add_rowvec(Var m, Var v);  // v added to every row
  Var add_colvec(Var m, Var v);  // v[i] added to every entry of row i
  Var sum(Var x);                // scalar
  Var gather_elems(Var m, const std::vector<std::pair<std::size_t, std::size_t>>& at);
  // keep[i]==1 passes m through; 0 pins the entry at `fill` with zero gradient.
  Var mask_fill(Var m, const std::vector<std::uint8_t>& keep, double fill);

  Var row_norms(Var m);    // {n,d} -> {n}
  Var squash_rows(Var s);  // row-wise v = s * |s| / (1 + |s|^2)

  // Capsule contractions, batched over the primary index.
  // predictions:  W {P,L,D,K} x u {P,K} -> {P,L,D}, out[i,j,:] = W[i,j]·u[i]
  Var caps_predictions(Var w, Var u);
  // weighted sum: c {P,L} x U {P,L,D} -> {L,D},   out[j,:] = sum_i c[i,j]·U[i,j,:]
  Var caps_weighted_sum(Var c, Var u_hat);
  // agreement:    U {P,L,D} x v {L,D} -> {P,L},   out[i,j] = U[i,j,:]·v[j,:]
  Var caps_agreement(Var u_hat, Var v);

  // root must hold exactly one element.
  void backward(Var root);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  // Zero-filled unless backward reached the node.
  const Tensor& grad(Var v);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated on first contribution
    std::function<void(Tape&, std::size_t)> back;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;

  Var push(Tensor value, std::function<void(Tape&, std::size_t)> back);
  Tensor& grad_ref(std::size_t id);
  const Tensor& val(Var v) const { return nodes_[v.id].value; }
};

}  // namespace capstag
