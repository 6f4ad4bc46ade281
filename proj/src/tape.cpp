#include "capstag/tape.hpp"

#include <algorithm>
#include <cmath>

#include "capstag/errors.hpp"

namespace capstag {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shapes " + a.shape_str() + " vs " + b.shape_str());
}

// Lines along an axis of a rank-1/2 tensor: (count, length, start stride, step).
struct Lanes {
  std::size_t count, len, start_stride, step;
};

Lanes lanes_along(const Tensor& t, std::size_t axis, const char* op) {
  if (t.rank() == 1) {
    if (axis != 0) throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " on rank-1 tensor");
    return {1, t.shape[0], 0, 1};
  }
  if (t.rank() == 2) {
    if (axis == 1) return {t.shape[0], t.shape[1], t.shape[1], 1};
    if (axis == 0) return {t.shape[1], t.shape[0], 1, t.shape[1]};
  }
  throw DimensionError(std::string(op) + ": unsupported axis " + std::to_string(axis) + " for shape " + t.shape_str());
}

}  // namespace

Var Tape::push(Tensor value, std::function<void(Tape&, std::size_t)> back) {
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back)});
  return Var{nodes_.size() - 1};
}

Tensor& Tape::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty() || !n.grad.same_shape(n.value)) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

const Tensor& Tape::grad(Var v) { return grad_ref(v.id); }

Var Tape::leaf(Tensor v) { return push(std::move(v), nullptr); }

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{it->second};
  Parameter* pp = &p;
  Var v = push(p.value, [pp](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < g.size(); ++i) pp->grad.data[i] += g.data[i];
  });
  param_nodes_.emplace(&p, v.id);
  return v;
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  check_same_shape(av, bv, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
  return push(std::move(out), [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_ref(a.id);
    Tensor& gb = t.grad_ref(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] += g.data[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  check_same_shape(av, bv, "sub");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= bv.data[i];
  return push(std::move(out), [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_ref(a.id);
    Tensor& gb = t.grad_ref(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] -= g.data[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  check_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
  return push(std::move(out), [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& av = t.nodes_[a.id].value;
    const Tensor& bv = t.nodes_[b.id].value;
    Tensor& ga = t.grad_ref(a.id);
    Tensor& gb = t.grad_ref(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.data[i] += g.data[i] * bv.data[i];
      gb.data[i] += g.data[i] * av.data[i];
    }
  });
}

Var Tape::affine(Var x, double s, double shift) {
  Tensor out = val(x);
  for (double& v : out.data) v = s * v + shift;
  return push(std::move(out), [x, s](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gx = t.grad_ref(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += s * g.data[i];
  });
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  const bool a_vec = av.rank() == 1;
  const bool b_vec = bv.rank() == 1;
  if ((av.rank() != 2 && !a_vec) || (bv.rank() != 2 && !b_vec) || (a_vec && b_vec))
    throw DimensionError("matmul: shapes " + av.shape_str() + " x " + bv.shape_str());
  const std::size_t m = a_vec ? 1 : av.shape[0];
  const std::size_t k = a_vec ? av.shape[0] : av.shape[1];
  const std::size_t k2 = b_vec ? bv.shape[0] : bv.shape[0];
  const std::size_t n = b_vec ? 1 : bv.shape[1];
  if (k != k2)
    throw DimensionError("matmul: inner dimensions disagree, " + av.shape_str() + " x " + bv.shape_str());

  Tensor out;
  if (a_vec)
    out = Tensor::zeros({n});
  else if (b_vec)
    out = Tensor::zeros({m});
  else
    out = Tensor::zeros({m, n});

  const double* A = av.data.data();
  const double* B = bv.data.data();
  double* O = out.data.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = A[i * k + l];
      if (ail == 0.0) continue;
      const double* brow = B + l * n;
      double* orow = O + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += ail * brow[j];
    }

  return push(std::move(out), [a, b, m, k, n](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& av = t.nodes_[a.id].value;
    const Tensor& bv = t.nodes_[b.id].value;
    Tensor& ga = t.grad_ref(a.id);
    Tensor& gb = t.grad_ref(b.id);
    const double* G = g.data.data();
    const double* A = av.data.data();
    const double* B = bv.data.data();
    // dA += G * B^T
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t l = 0; l < k; ++l) {
        double acc = 0.0;
        const double* grow = G + i * n;
        const double* brow = B + l * n;
        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
        ga.data[i * k + l] += acc;
      }
    // dB += A^T * G
    for (std::size_t l = 0; l < k; ++l)
      for (std::size_t i = 0; i < m; ++i) {
        const double ail = A[i * k + l];
        if (ail == 0.0) continue;
        const double* grow = G + i * n;
        double* gbrow = gb.data.data() + l * n;
        for (std::size_t j = 0; j < n; ++j) gbrow[j] += ail * grow[j];
      }
  });
}

Var Tape::sigmoid(Var x) {
  Tensor out = val(x);
  for (double& v : out.data) {
    // split on sign so exp never overflows
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return push(std::move(out), [x](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& gx = t.grad_ref(x.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      gx.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Var Tape::tanh_op(Var x) {
  Tensor out = val(x);
  for (double& v : out.data) v = std::tanh(v);
  return push(std::move(out), [x](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& gx = t.grad_ref(x.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      gx.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Var Tape::softmax(Var x, std::size_t axis) {
  const Tensor& xv = val(x);
  const Lanes ln = lanes_along(xv, axis, "softmax");
  Tensor out = xv;
  for (std::size_t lane = 0; lane < ln.count; ++lane) {
    const std::size_t base = lane * ln.start_stride;
    double mx = out.data[base];
    for (std::size_t i = 1; i < ln.len; ++i) mx = std::max(mx, out.data[base + i * ln.step]);
    double denom = 0.0;
    for (std::size_t i = 0; i < ln.len; ++i) {
      double& v = out.data[base + i * ln.step];
      v = std::exp(v - mx);
      denom += v;
    }
    for (std::size_t i = 0; i < ln.len; ++i) out.data[base + i * ln.step] /= denom;
  }
  return push(std::move(out), [x, ln](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& gx = t.grad_ref(x.id);
    for (std::size_t lane = 0; lane < ln.count; ++lane) {
      const std::size_t base = lane * ln.start_stride;
      double dot = 0.0;
      for (std::size_t i = 0; i < ln.len; ++i) {
        const std::size_t off = base + i * ln.step;
        dot += g.data[off] * y.data[off];
      }
      for (std::size_t i = 0; i < ln.len; ++i) {
        const std::size_t off = base + i * ln.step;
        gx.data[off] += y.data[off] * (g.data[off] - dot);
      }
    }
  });
}

Var Tape::logsumexp(Var x, std::size_t axis) {
  const Tensor& xv = val(x);
  const Lanes ln = lanes_along(xv, axis, "logsumexp");
  Tensor out;
  if (xv.rank() == 1)
    out = Tensor::scalar(0.0);
  else
    out = Tensor::zeros({axis == 0 ? xv.shape[1] : xv.shape[0]});
  for (std::size_t lane = 0; lane < ln.count; ++lane) {
    const std::size_t base = lane * ln.start_stride;
    double mx = xv.data[base];
    for (std::size_t i = 1; i < ln.len; ++i) mx = std::max(mx, xv.data[base + i * ln.step]);
    double acc = 0.0;
    for (std::size_t i = 0; i < ln.len; ++i) acc += std::exp(xv.data[base + i * ln.step] - mx);
    out.data[lane] = mx + std::log(acc);
  }
  return push(std::move(out), [x, ln](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    const Tensor& xv = t.nodes_[x.id].value;
    Tensor& gx = t.grad_ref(x.id);
    for (std::size_t lane = 0; lane < ln.count; ++lane) {
      const std::size_t base = lane * ln.start_stride;
      for (std::size_t i = 0; i < ln.len; ++i) {
        const std::size_t off = base + i * ln.step;
        gx.data[off] += g.data[lane] * std::exp(xv.data[off] - y.data[lane]);
      }
    }
  });
}

Var Tape::concat(Var a, Var b, std::size_t axis) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  if (av.rank() != bv.rank() || axis >= av.rank())
    throw DimensionError("concat: shapes " + av.shape_str() + " vs " + bv.shape_str() + " on axis " +
                         std::to_string(axis));
  for (std::size_t d = 0; d < av.rank(); ++d)
    if (d != axis && av.shape[d] != bv.shape[d])
      throw DimensionError("concat: shapes " + av.shape_str() + " vs " + bv.shape_str() +
                           " disagree off axis " + std::to_string(axis));

  Tensor out;
  if (av.rank() == 1) {
    out = Tensor::zeros({av.shape[0] + bv.shape[0]});
    std::copy(av.data.begin(), av.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.shape[0]);
  } else if (av.rank() == 2 && axis == 0) {
    out = Tensor::zeros({av.shape[0] + bv.shape[0], av.shape[1]});
    std::copy(av.data.begin(), av.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.size());
  } else if (av.rank() == 2 && axis == 1) {
    const std::size_t r = av.shape[0], ca = av.shape[1], cb = bv.shape[1];
    out = Tensor::zeros({r, ca + cb});
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(av.data.begin() + i * ca, ca, out.data.begin() + i * (ca + cb));
      std::copy_n(bv.data.begin() + i * cb, cb, out.data.begin() + i * (ca + cb) + ca);
    }
  } else {
    throw DimensionError("concat: unsupported rank " + std::to_string(av.rank()));
  }

  const auto a_shape = av.shape;
  return push(std::move(out), [a, b, axis, a_shape](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_ref(a.id);
    Tensor& gb = t.grad_ref(b.id);
    if (a_shape.size() == 1 || axis == 0) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += g.data[i];
      for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += g.data[ga.size() + i];
    } else {
      const std::size_t r = a_shape[0], ca = a_shape[1];
      const std::size_t cb = gb.size() / r;
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < ca; ++j) ga.data[i * ca + j] += g.data[i * (ca + cb) + j];
        for (std::size_t j = 0; j < cb; ++j) gb.data[i * cb + j] += g.data[i * (ca + cb) + ca + j];
      }
    }
  });
}

Var Tape::dropout(Var x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;  // identity, bitwise
  const Tensor& xv = val(x);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(xv.size());
  for (double& m : mask) m = uniform01(rng) < rate ? 0.0 : keep_scale;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask[i];
  return push(std::move(out), [x, mask = std::move(mask)](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gx = t.grad_ref(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] * mask[i];
  });
}

Var Tape::gather_rows(Var table, const std::vector<std::size_t>& idx) {
  const Tensor& tv = val(table);
  if (tv.rank() != 2) throw DimensionError("gather_rows: table shape " + tv.shape_str());
  const std::size_t d = tv.shape[1];
  for (std::size_t i : idx)
    if (i >= tv.shape[0])
      throw DimensionError("gather_rows: row " + std::to_string(i) + " out of " + std::to_string(tv.shape[0]));
  Tensor out = Tensor::zeros({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(tv.data.begin() + idx[r] * d, d, out.data.begin() + r * d);
  return push(std::move(out), [table, idx, d](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gt = t.grad_ref(table.id);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) gt.data[idx[r] * d + j] += g.data[r * d + j];
  });
}

Var Tape::row(Var m, std::size_t i) {
  const Tensor& mv = val(m);
  if (mv.rank() != 2 || i >= mv.shape[0])
    throw DimensionError("row " + std::to_string(i) + " of " + mv.shape_str());
  const std::size_t d = mv.shape[1];
  Tensor out = Tensor::zeros({d});
  std::copy_n(mv.data.begin() + i * d, d, out.data.begin());
  return push(std::move(out), [m, i, d](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gm = t.grad_ref(m.id);
    for (std::size_t j = 0; j < d; ++j) gm.data[i * d + j] += g.data[j];
  });
}

Var Tape::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const std::size_t d = val(rows[0]).size();
  for (const Var& r : rows) {
    const Tensor& rv = val(r);
    if (rv.rank() != 1 || rv.size() != d)
      throw DimensionError("stack_rows: row shape " + rv.shape_str());
  }
  Tensor out = Tensor::zeros({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(val(rows[i]).data.begin(), d, out.data.begin() + i * d);
  std::vector<Var> captured(rows.begin(), rows.end());
  return push(std::move(out), [captured = std::move(captured), d](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < captured.size(); ++i) {
      Tensor& gr = t.grad_ref(captured[i].id);
      for (std::size_t j = 0; j < d; ++j) gr.data[j] += g.data[i * d + j];
    }
  });
}

Var Tape::transpose(Var m) {
  const Tensor& mv = val(m);
  if (mv.rank() != 2) throw DimensionError("transpose: shape " + mv.shape_str());
  const std::size_t r = mv.shape[0], c = mv.shape[1];
  Tensor out = Tensor::zeros({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[j * r + i] = mv.data[i * c + j];
  return push(std::move(out), [m, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gm = t.grad_ref(m.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gm.data[i * c + j] += g.data[j * r + i];
  });
}

Var Tape::reshape(Var x, std::vector<std::size_t> shape) {
  const Tensor& xv = val(x);
  if (shape_product(shape) != xv.size())
    throw DimensionError("reshape: " + xv.shape_str() + " -> " + shape_str(shape));
  Tensor out = Tensor::from_data(std::move(shape), xv.data);
  return push(std::move(out), [x](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gx = t.grad_ref(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i];
  });
}

Var Tape::submatrix(Var m, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  const Tensor& mv = val(m);
  if (mv.rank() != 2 || r1 > mv.shape[0] || c1 > mv.shape[1] || r0 > r1 || c0 > c1)
    throw DimensionError("submatrix: bounds on " + mv.shape_str());
  const std::size_t c = mv.shape[1];
  Tensor out = Tensor::zeros({r1 - r0, c1 - c0});
  for (std::size_t i = r0; i < r1; ++i)
    std::copy(mv.data.begin() + i * c + c0, mv.data.begin() + i * c + c1,
              out.data.begin() + (i - r0) * (c1 - c0));
  return push(std::move(out), [m, r0, r1, c0, c1, c](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gm = t.grad_ref(m.id);
    const std::size_t w = c1 - c0;
    for (std::size_t i = r0; i < r1; ++i)
      for (std::size_t j = c0; j < c1; ++j)
        gm.data[i * c + j] += g.data[(i - r0) * w + (j - c0)];
  });
}

Var Tape::add_rowvec(Var m, Var v) {
  const Tensor& mv = val(m);
  const Tensor& vv = val(v);
  if (mv.rank() != 2 || vv.rank() != 1 || vv.shape[0] != mv.shape[1])
    throw DimensionError("add_rowvec: " + mv.shape_str() + " + " + vv.shape_str());
  const std::size_t r = mv.shape[0], c = mv.shape[1];
  Tensor out = mv;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += vv.data[j];
  return push(std::move(out), [m, v, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gm = t.grad_ref(m.id);
    Tensor& gv = t.grad_ref(v.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        gm.data[i * c + j] += g.data[i * c + j];
        gv.data[j] += g.data[i * c + j];
      }
  });
}

Var Tape::add_colvec(Var m, Var v) {
  const Tensor& mv = val(m);
  const Tensor& vv = val(v);
  if (mv.rank() != 2 || vv.rank() != 1 || vv.shape[0] != mv.shape[0])
    throw DimensionError("add_colvec: " + mv.shape_str() + " + " + vv.shape_str());
  const std::size_t r = mv.shape[0], c = mv.shape[1];
  Tensor out = mv;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += vv.data[i];
  return push(std::move(out), [m, v, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gm = t.grad_ref(m.id);
    Tensor& gv = t.grad_ref(v.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        gm.data[i * c + j] += g.data[i * c + j];
        gv.data[i] += g.data[i * c + j];
      }
  });
}

Var Tape::sum(Var x) {
  const Tensor& xv = val(x);
  double acc = 0.0;
  for (double v : xv.data) acc += v;
  return push(Tensor::scalar(acc), [x](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad.data[0];
    Tensor& gx = t.grad_ref(x.id);
    for (double& v : gx.data) v += g;
  });
}

Var Tape::gather_elems(Var m, const std::vector<std::pair<std::size_t, std::size_t>>& at) {
  const Tensor& mv = val(m);
  if (mv.rank() != 2) throw DimensionError("gather_elems: shape " + mv.shape_str());
  const std::size_t c = mv.shape[1];
  Tensor out = Tensor::zeros({at.size()});
  for (std::size_t k = 0; k < at.size(); ++k) {
    if (at[k].first >= mv.shape[0] || at[k].second >= c)
      throw DimensionError("gather_elems: (" + std::to_string(at[k].first) + "," +
                           std::to_string(at[k].second) + ") out of " + mv.shape_str());
    out.data[k] = mv.data[at[k].first * c + at[k].second];
  }
  return push(std::move(out), [m, at, c](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gm = t.grad_ref(m.id);
    for (std::size_t k = 0; k < at.size(); ++k)
      gm.data[at[k].first * c + at[k].second] += g.data[k];
  });
}

Var Tape::mask_fill(Var m, const std::vector<std::uint8_t>& keep, double fill) {
  const Tensor& mv = val(m);
  if (keep.size() != mv.size())
    throw DimensionError("mask_fill: mask size " + std::to_string(keep.size()) + " vs " + mv.shape_str());
  Tensor out = mv;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!keep[i]) out.data[i] = fill;
  return push(std::move(out), [m, keep](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gm = t.grad_ref(m.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (keep[i]) gm.data[i] += g.data[i];
  });
}

Var Tape::row_norms(Var m) {
  const Tensor& mv = val(m);
  if (mv.rank() != 2) throw DimensionError("row_norms: shape " + mv.shape_str());
  const std::size_t r = mv.shape[0], d = mv.shape[1];
  Tensor out = Tensor::zeros({r});
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += mv.data[i * d + j] * mv.data[i * d + j];
    out.data[i] = std::sqrt(acc);
  }
  return push(std::move(out), [m, r, d](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    const Tensor& mv = t.nodes_[m.id].value;
    Tensor& gm = t.grad_ref(m.id);
    for (std::size_t i = 0; i < r; ++i) {
      if (y.data[i] < 1e-300) continue;  // zero row: subgradient 0
      const double s = g.data[i] / y.data[i];
      for (std::size_t j = 0; j < d; ++j) gm.data[i * d + j] += s * mv.data[i * d + j];
    }
  });
}

Var Tape::squash_rows(Var s) {
  const Tensor& sv = val(s);
  if (sv.rank() != 2) throw DimensionError("squash_rows: shape " + sv.shape_str());
  const std::size_t r = sv.shape[0], d = sv.shape[1];
  Tensor out = sv;
  for (std::size_t i = 0; i < r; ++i) {
    double nsq = 0.0;
    for (std::size_t j = 0; j < d; ++j) nsq += sv.data[i * d + j] * sv.data[i * d + j];
    const double nu = std::sqrt(nsq);
    // factor form |s|/(1+|s|^2): no division by the norm, exact 0 at s = 0
    const double f = nu / (1.0 + nsq);
    for (std::size_t j = 0; j < d; ++j) out.data[i * d + j] *= f;
  }
  return push(std::move(out), [s, r, d](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& sv = t.nodes_[s.id].value;
    Tensor& gs = t.grad_ref(s.id);
    for (std::size_t i = 0; i < r; ++i) {
      double nsq = 0.0, sg = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        nsq += sv.data[i * d + j] * sv.data[i * d + j];
        sg += sv.data[i * d + j] * g.data[i * d + j];
      }
      const double nu = std::sqrt(nsq);
      const double f = nu / (1.0 + nsq);
      const double fp = (1.0 - nsq) / ((1.0 + nsq) * (1.0 + nsq));
      for (std::size_t j = 0; j < d; ++j) {
        double contrib = f * g.data[i * d + j];
        if (nu > 1e-150) contrib += (fp / nu) * sg * sv.data[i * d + j];
        gs.data[i * d + j] += contrib;
      }
    }
  });
}

Var Tape::caps_predictions(Var w, Var u) {
  const Tensor& wv = val(w);
  const Tensor& uv = val(u);
  if (wv.rank() != 4 || uv.rank() != 2 || wv.shape[0] != uv.shape[0] || wv.shape[3] != uv.shape[1])
    throw DimensionError("caps_predictions: W " + wv.shape_str() + " vs u " + uv.shape_str());
  const std::size_t P = wv.shape[0], L = wv.shape[1], D = wv.shape[2], K = wv.shape[3];
  Tensor out = Tensor::zeros({P, L, D});
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t j = 0; j < L; ++j)
      for (std::size_t e = 0; e < D; ++e) {
        const double* wrow = wv.data.data() + ((i * L + j) * D + e) * K;
        const double* urow = uv.data.data() + i * K;
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) acc += wrow[k] * urow[k];
        out.data[(i * L + j) * D + e] = acc;
      }
  return push(std::move(out), [w, u, P, L, D, K](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& wv = t.nodes_[w.id].value;
    const Tensor& uv = t.nodes_[u.id].value;
    Tensor& gw = t.grad_ref(w.id);
    Tensor& gu = t.grad_ref(u.id);
    for (std::size_t i = 0; i < P; ++i)
      for (std::size_t j = 0; j < L; ++j)
        for (std::size_t e = 0; e < D; ++e) {
          const double ge = g.data[(i * L + j) * D + e];
          if (ge == 0.0) continue;
          const std::size_t wbase = ((i * L + j) * D + e) * K;
          for (std::size_t k = 0; k < K; ++k) {
            gw.data[wbase + k] += ge * uv.data[i * K + k];
            gu.data[i * K + k] += ge * wv.data[wbase + k];
          }
        }
  });
}

Var Tape::caps_weighted_sum(Var c, Var u_hat) {
  const Tensor& cv = val(c);
  const Tensor& uv = val(u_hat);
  if (cv.rank() != 2 || uv.rank() != 3 || cv.shape[0] != uv.shape[0] || cv.shape[1] != uv.shape[1])
    throw DimensionError("caps_weighted_sum: c " + cv.shape_str() + " vs u_hat " + uv.shape_str());
  const std::size_t P = uv.shape[0], L = uv.shape[1], D = uv.shape[2];
  Tensor out = Tensor::zeros({L, D});
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t j = 0; j < L; ++j) {
      const double cij = cv.data[i * L + j];
      for (std::size_t e = 0; e < D; ++e)
        out.data[j * D + e] += cij * uv.data[(i * L + j) * D + e];
    }
  return push(std::move(out), [c, u_hat, P, L, D](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& cv = t.nodes_[c.id].value;
    const Tensor& uv = t.nodes_[u_hat.id].value;
    Tensor& gc = t.grad_ref(c.id);
    Tensor& gu = t.grad_ref(u_hat.id);
    for (std::size_t i = 0; i < P; ++i)
      for (std::size_t j = 0; j < L; ++j) {
        double acc = 0.0;
        const double cij = cv.data[i * L + j];
        for (std::size_t e = 0; e < D; ++e) {
          acc += g.data[j * D + e] * uv.data[(i * L + j) * D + e];
          gu.data[(i * L + j) * D + e] += cij * g.data[j * D + e];
        }
        gc.data[i * L + j] += acc;
      }
  });
}

Var Tape::caps_agreement(Var u_hat, Var v) {
  const Tensor& uv = val(u_hat);
  const Tensor& vv = val(v);
  if (uv.rank() != 3 || vv.rank() != 2 || uv.shape[1] != vv.shape[0] || uv.shape[2] != vv.shape[1])
    throw DimensionError("caps_agreement: u_hat " + uv.shape_str() + " vs v " + vv.shape_str());
  const std::size_t P = uv.shape[0], L = uv.shape[1], D = uv.shape[2];
  Tensor out = Tensor::zeros({P, L});
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t j = 0; j < L; ++j) {
      double acc = 0.0;
      for (std::size_t e = 0; e < D; ++e)
        acc += uv.data[(i * L + j) * D + e] * vv.data[j * D + e];
      out.data[i * L + j] = acc;
    }
  return push(std::move(out), [u_hat, v, P, L, D](Tape& t, std::size_t self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& uv = t.nodes_[u_hat.id].value;
    const Tensor& vv = t.nodes_[v.id].value;
    Tensor& gu = t.grad_ref(u_hat.id);
    Tensor& gv = t.grad_ref(v.id);
    for (std::size_t i = 0; i < P; ++i)
      for (std::size_t j = 0; j < L; ++j) {
        const double gij = g.data[i * L + j];
        if (gij == 0.0) continue;
        for (std::size_t e = 0; e < D; ++e) {
          gu.data[(i * L + j) * D + e] += gij * vv.data[j * D + e];
          gv.data[j * D + e] += gij * uv.data[(i * L + j) * D + e];
        }
      }
  });
}

void Tape::backward(Var root) {
  if (val(root).size() != 1)
    throw DimensionError("backward: root must be scalar, got " + val(root).shape_str());
  grad_ref(root.id).data[0] = 1.0;
  for (std::size_t k = root.id + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (n.back && !n.grad.data.empty()) n.back(*this, k);
  }
}

}  // namespace capstag
