#include "capstag/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "capstag/checkpoint.hpp"
#include "capstag/errors.hpp"

namespace capstag {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape));
    v_.push_back(Tensor::zeros(p->value.shape));
  }
}

void Adam::step() {
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Parameter& p = *params_[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i];
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in parameter '" + p.name + "'");
      double& m = m_[pi].data[i];
      double& v = v_[pi].data[i];
      m = config_.beta1 * m + (1.0 - config_.beta1) * g;
      v = config_.beta2 * v + (1.0 - config_.beta2) * g * g;
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      p.value.data[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void Adam::zero_grads() {
  for (Parameter* p : params_) p->zero_grad();
}

namespace {

using SpanKey = std::tuple<std::string, std::size_t, std::size_t>;

void finish(TypeMetrics& m) {
  const double tp = static_cast<double>(m.counts.tp);
  m.precision = m.counts.tp + m.counts.fp ? tp / (m.counts.tp + m.counts.fp) : 0.0;
  m.recall = m.counts.tp + m.counts.fn ? tp / (m.counts.tp + m.counts.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
}

}  // namespace

EvalReport evaluate(Model& model, const Corpus& corpus) {
  std::map<std::string, TypeMetrics> per_type;
  EvalCounts total;
  for (const Sentence& s : corpus.sentences) {
    Prediction pred = model.predict(s.chars);
    std::set<SpanKey> gold, got;
    for (const EntitySpan& span : bioes_decode(s.tags, false))
      gold.insert({span.entity_type, span.start, span.end});
    for (const EntitySpan& span : bioes_decode(pred.tags, false))
      got.insert({span.entity_type, span.start, span.end});
    for (const SpanKey& k : got) {
      if (gold.count(k)) {
        ++total.tp;
        ++per_type[std::get<0>(k)].counts.tp;
      } else {
        ++total.fp;
        ++per_type[std::get<0>(k)].counts.fp;
      }
    }
    for (const SpanKey& k : gold) {
      if (!got.count(k)) {
        ++total.fn;
        ++per_type[std::get<0>(k)].counts.fn;
      }
    }
  }

  EvalReport report;
  report.counts = total;
  TypeMetrics overall;
  overall.counts = total;
  finish(overall);
  report.precision = overall.precision;
  report.recall = overall.recall;
  report.f1 = overall.f1;
  for (auto& [type, metrics] : per_type) {
    finish(metrics);
    report.per_type.emplace_back(type, metrics);
  }
  return report;
}

namespace {

void check_tags_known(const Corpus& corpus, const LabelSet& labels, const char* which) {
  for (const Sentence& s : corpus.sentences)
    for (const std::string& tag : s.tags)
      if (!labels.contains(tag))
        throw LabelError(std::string(which) + " corpus tag '" + tag +
                         "' is not in the model label set");
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i-- > 1;)
    std::swap(idx[i], idx[uniform_below(rng, i + 1)]);
}

}  // namespace

TrainResult train_model(Model& model, const TrainConfig& config, const Corpus& train_corpus,
                        const Corpus* dev_corpus, const std::string& checkpoint_dir,
                        const EpochCallback& on_epoch) {
  if (train_corpus.sentences.empty()) throw ConfigError("empty training corpus");
  if (config.epochs < 1) throw ConfigError("training needs at least one epoch");
  if (config.batch_size < 1) throw ConfigError("batch size must be at least 1");

  check_tags_known(train_corpus, model.labels(), "training");
  if (dev_corpus) check_tags_known(*dev_corpus, model.labels(), "dev");

  // Hold out a seeded fraction when no dev corpus is supplied.
  std::vector<Sentence> train_sents;
  Corpus held_out;
  const Corpus* dev = dev_corpus;
  if (!dev) {
    const std::size_t n = train_corpus.sentences.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng split_rng = derived_rng(config.seed, 0x51);
    shuffle_indices(idx, split_rng);
    std::size_t n_dev = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                     std::llround(config.dev_fraction * n)));
    if (n_dev >= n) n_dev = n - 1;
    held_out.label_set = train_corpus.label_set;
    held_out.char_vocabulary = train_corpus.char_vocabulary;
    if (n_dev == 0) {
      // single sentence: evaluate on the training data itself
      train_sents = train_corpus.sentences;
      held_out.sentences = train_corpus.sentences;
    } else {
      for (std::size_t i = 0; i < n_dev; ++i) held_out.sentences.push_back(train_corpus.sentences[idx[i]]);
      for (std::size_t i = n_dev; i < n; ++i) train_sents.push_back(train_corpus.sentences[idx[i]]);
    }
    dev = &held_out;
  } else {
    train_sents = train_corpus.sentences;
  }

  Adam adam(model.parameters(), {config.learning_rate, config.beta1, config.beta2, config.adam_eps});
  Rng shuffle_rng = derived_rng(config.seed, 0x5F);
  Rng dropout_rng = derived_rng(config.seed, 0xD0);

  TrainResult result;
  std::vector<std::size_t> order(train_sents.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      adam.zero_grads();
      for (std::size_t k = begin; k < end; ++k) {
        Tape tape;
        Var loss = model.loss(tape, train_sents[order[k]], true, dropout_rng);
        const double value = tape.value(loss).data[0];
        if (!std::isfinite(value)) throw NumericError("non-finite training loss");
        loss_sum += value;
        tape.backward(tape.scale(loss, inv_batch));
      }
      if (config.grad_clip) {
        double sq = 0.0;
        for (Parameter* p : model.parameters())
          for (double g : p->grad.data) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > config.grad_clip_norm) {
          const double scale = config.grad_clip_norm / norm;
          for (Parameter* p : model.parameters())
            for (double& g : p->grad.data) g *= scale;
        }
      }
      adam.step();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_sents.size());
    stats.dev = evaluate(model, *dev);
    if (on_epoch) on_epoch(stats);

    if (stats.dev.f1 > result.best_f1) {
      result.best_f1 = stats.dev.f1;
      result.best_epoch = epoch;
      if (!checkpoint_dir.empty()) save_checkpoint(model, checkpoint_dir);
    }
    result.log.push_back(std::move(stats));
    if (config.stop_at_dev_f1 > 0 && result.best_f1 >= config.stop_at_dev_f1) break;
  }
  result.optimizer_steps = adam.steps();
  return result;
}

}  // namespace capstag
