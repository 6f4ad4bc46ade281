#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capstag/corpus.hpp"
#include "capstag/tape.hpp"

namespace capstag {

// Effective score pinned at masked transitions; large enough to exclude any
// masked move from a Viterbi argmax at desk scale.
inline constexpr double kMaskedTransitionScore = -1e4;

// Learned label-to-label scores, augmented with a START row and a STOP
// column. An optional hard mask pins BIOES-invalid moves at a large negative
// constant with zero gradient.
struct TransitionMatrix {
  Parameter weights;                // (L+2) x (L+2), zero-initialized
  std::vector<std::uint8_t> mask;   // empty = unmasked
  bool include_stop = true;         // add A[y_n][STOP] to every path score
  std::size_t num_labels = 0;

  TransitionMatrix() = default;
  TransitionMatrix(const std::string& name, std::size_t num_labels);

  void apply_bioes_mask(const LabelSet& labels);
  std::size_t start_index() const { return num_labels; }
  std::size_t stop_index() const { return num_labels + 1; }

  // Tape view with the mask applied; concrete copy for decoding.
  Var scores(Tape& tape);
  Tensor effective() const;
};

// S = sum_t (A[y_{t-1}][y_t] + e[t][y_t]) with y_{-1} = START, plus the STOP
// column term when enabled.
Var sequence_score(Tape& tape, Var emissions, Var transitions,
                   const std::vector<std::size_t>& path, bool include_stop);

// log sum over all L^n paths of exp(S), by the forward recurrence in log
// space; never enumerates paths.
Var log_partition(Tape& tape, Var emissions, Var transitions, bool include_stop);

// -log p(path | emissions) = log_partition - sequence_score, always >= 0.
Var crf_nll(Tape& tape, Var emissions, Var transitions,
            const std::vector<std::size_t>& path, bool include_stop);

struct ViterbiResult {
  std::vector<std::size_t> path;
  double score = 0.0;
};

// Max-product decode with backpointers; ties break toward the lower label
// index. `transitions` is the effective (L+2)^2 matrix.
ViterbiResult viterbi_decode(const Tensor& emissions, const Tensor& transitions,
                             bool include_stop);

}  // namespace capstag
