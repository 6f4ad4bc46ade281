#include "capstag/crf.hpp"

#include "capstag/errors.hpp"

namespace capstag {

TransitionMatrix::TransitionMatrix(const std::string& name, std::size_t labels)
    : weights(name, Tensor::zeros({labels + 2, labels + 2})), num_labels(labels) {}

void TransitionMatrix::apply_bioes_mask(const LabelSet& labels) {
  if (labels.size() != num_labels)
    throw DimensionError("transition mask: label set size " + std::to_string(labels.size()) +
                         " vs matrix labels " + std::to_string(num_labels));
  mask = transition_mask(labels);
}

Var TransitionMatrix::scores(Tape& tape) {
  Var raw = tape.param(weights);
  if (mask.empty()) return raw;
  return tape.mask_fill(raw, mask, kMaskedTransitionScore);
}

Tensor TransitionMatrix::effective() const {
  Tensor out = weights.value;
  if (!mask.empty())
    for (std::size_t i = 0; i < out.size(); ++i)
      if (!mask[i]) out.data[i] = kMaskedTransitionScore;
  return out;
}

namespace {

void check_chain_shapes(const Tensor& e, const Tensor& a) {
  if (e.rank() != 2 || e.shape[0] == 0) throw DimensionError("emissions shape " + e.shape_str());
  if (a.rank() != 2 || a.shape[0] != a.shape[1] || a.shape[0] != e.shape[1] + 2)
    throw DimensionError("transitions shape " + a.shape_str() + " for emissions " + e.shape_str());
}

}  // namespace

Var sequence_score(Tape& tape, Var emissions, Var transitions,
                   const std::vector<std::size_t>& path, bool include_stop) {
  const Tensor& e = tape.value(emissions);
  const Tensor& a = tape.value(transitions);
  check_chain_shapes(e, a);
  const std::size_t n = e.shape[0];
  const std::size_t labels = e.shape[1];
  if (path.size() != n)
    throw LabelError("path length " + std::to_string(path.size()) + " vs sequence length " +
                     std::to_string(n));
  for (std::size_t y : path)
    if (y >= labels) throw LabelError("label index " + std::to_string(y) + " out of range");

  const std::size_t start = labels, stop = labels + 1;
  std::vector<std::pair<std::size_t, std::size_t>> trans_at, emit_at;
  trans_at.reserve(n + 1);
  emit_at.reserve(n);
  trans_at.emplace_back(start, path[0]);
  for (std::size_t t = 1; t < n; ++t) trans_at.emplace_back(path[t - 1], path[t]);
  if (include_stop) trans_at.emplace_back(path[n - 1], stop);
  for (std::size_t t = 0; t < n; ++t) emit_at.emplace_back(t, path[t]);

  return tape.add(tape.sum(tape.gather_elems(transitions, trans_at)),
                  tape.sum(tape.gather_elems(emissions, emit_at)));
}

Var log_partition(Tape& tape, Var emissions, Var transitions, bool include_stop) {
  const Tensor& e = tape.value(emissions);
  const Tensor& a = tape.value(transitions);
  check_chain_shapes(e, a);
  const std::size_t n = e.shape[0];
  const std::size_t labels = e.shape[1];

  Var label_block = tape.submatrix(transitions, 0, labels, 0, labels);
  Var start_row =
      tape.reshape(tape.submatrix(transitions, labels, labels + 1, 0, labels), {labels});
  Var alpha = tape.add(start_row, tape.row(emissions, 0));
  for (std::size_t t = 1; t < n; ++t) {
    Var moved = tape.logsumexp(tape.add_colvec(label_block, alpha), 0);
    alpha = tape.add(moved, tape.row(emissions, t));
  }
  if (include_stop) {
    Var stop_col =
        tape.reshape(tape.submatrix(transitions, 0, labels, labels + 1, labels + 2), {labels});
    alpha = tape.add(alpha, stop_col);
  }
  return tape.logsumexp(alpha, 0);
}

Var crf_nll(Tape& tape, Var emissions, Var transitions, const std::vector<std::size_t>& path,
            bool include_stop) {
  return tape.sub(log_partition(tape, emissions, transitions, include_stop),
                  sequence_score(tape, emissions, transitions, path, include_stop));
}

ViterbiResult viterbi_decode(const Tensor& emissions, const Tensor& transitions,
                             bool include_stop) {
  check_chain_shapes(emissions, transitions);
  const std::size_t n = emissions.shape[0];
  const std::size_t labels = emissions.shape[1];
  const std::size_t width = labels + 2;
  const std::size_t start = labels, stop = labels + 1;

  std::vector<double> best(labels);
  std::vector<std::vector<std::size_t>> back(n, std::vector<std::size_t>(labels, 0));
  for (std::size_t j = 0; j < labels; ++j)
    best[j] = transitions.data[start * width + j] + emissions(0, j);

  std::vector<double> next(labels);
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t j = 0; j < labels; ++j) {
      double best_score = best[0] + transitions.data[j];  // i = 0
      std::size_t best_i = 0;
      for (std::size_t i = 1; i < labels; ++i) {
        const double s = best[i] + transitions.data[i * width + j];
        if (s > best_score) {  // strict: ties keep the lower index
          best_score = s;
          best_i = i;
        }
      }
      next[j] = best_score + emissions(t, j);
      back[t][j] = best_i;
    }
    best.swap(next);
  }
  if (include_stop)
    for (std::size_t j = 0; j < labels; ++j) best[j] += transitions.data[j * width + stop];

  std::size_t arg = 0;
  for (std::size_t j = 1; j < labels; ++j)
    if (best[j] > best[arg]) arg = j;

  ViterbiResult result;
  result.score = best[arg];
  result.path.resize(n);
  result.path[n - 1] = arg;
  for (std::size_t t = n; t-- > 1;) result.path[t - 1] = back[t][result.path[t]];
  return result;
}

}  // namespace capstag
