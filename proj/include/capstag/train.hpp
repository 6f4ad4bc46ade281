#pragma once

#include <functional>
#include <string>
#include <vector>

#include "capstag/corpus.hpp"
#include "capstag/model.hpp"

namespace capstag {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction; first/second moment state per parameter.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  // Consumes accumulated p.grad values; throws NumericError naming the
  // parameter on a non-finite gradient.
  void step();
  void zero_grads();
  std::size_t steps() const { return step_count_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  std::size_t step_count_ = 0;
};

struct EvalCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct TypeMetrics {
  EvalCounts counts;
  double precision = 0, recall = 0, f1 = 0;
};

struct EvalReport {
  double precision = 0, recall = 0, f1 = 0;
  EvalCounts counts;
  std::vector<std::pair<std::string, TypeMetrics>> per_type;  // sorted by type
};

// Entity-level exact-match scoring: a predicted span counts only when type,
// start and end all agree. Predictions come from Viterbi + lenient decode.
EvalReport evaluate(Model& model, const Corpus& corpus);

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 20;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  double dev_fraction = 0.1;   // used when no dev corpus is supplied
  double stop_at_dev_f1 = 0;   // 0 disables early stopping
  bool grad_clip = false;
  double grad_clip_norm = 5.0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0;
  EvalReport dev;
};

struct TrainResult {
  std::vector<EpochStats> log;
  double best_f1 = -1.0;
  std::size_t best_epoch = 0;
  std::size_t optimizer_steps = 0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Shuffled mini-batches of mean sentence loss, Adam updates, per-epoch dev
// evaluation; the best-dev-F1 state is checkpointed to checkpoint_dir when
// one is given. With no dev corpus a seeded dev_fraction split is held out.
TrainResult train_model(Model& model, const TrainConfig& config, const Corpus& train_corpus,
                        const Corpus* dev_corpus, const std::string& checkpoint_dir = "",
                        const EpochCallback& on_epoch = {});

}  // namespace capstag
