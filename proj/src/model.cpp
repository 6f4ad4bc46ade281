#include "capstag/model.hpp"

#include <cmath>

#include "capstag/errors.hpp"

namespace capstag {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_attention: return "no_attention";
    case Ablation::scalar_head: return "scalar_head";
    case Ablation::trainable_embed: return "trainable_embed";
  }
  return "full";
}

std::string to_string(EmbedMode m) {
  return m == EmbedMode::file_backed ? "file" : "composed";
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "no_attention") return Ablation::no_attention;
  if (s == "scalar_head") return Ablation::scalar_head;
  if (s == "trainable_embed") return Ablation::trainable_embed;
  throw ConfigError("unknown ablation '" + s + "'");
}

EmbedMode embed_mode_from_string(const std::string& s) {
  if (s == "file") return EmbedMode::file_backed;
  if (s == "composed") return EmbedMode::composed;
  throw ConfigError("unknown embedding mode '" + s + "'");
}

Model::Model(ModelConfig config, LabelSet labels, std::vector<std::string> vocabulary,
             FileEmbeddings file_embeddings)
    : config_(config), labels_(std::move(labels)), vocab_(std::move(vocabulary)) {
  if (labels_.size() == 0) throw ConfigError("model needs a non-empty label set");
  if (config_.embed_dim == 0 || config_.gru_hidden == 0)
    throw ConfigError("embedding and GRU dimensions must be positive");

  for (std::size_t i = 0; i < vocab_.size(); ++i) char_index_[vocab_[i]] = i + 1;

  Rng init = derived_rng(config_.seed, 0x1817);
  if (config_.embed_mode == EmbedMode::composed) {
    composed_ = ComposedEmbeddings(vocab_.size() + 1, config_.embed_dim, config_.max_position, init);
  } else {
    if (file_embeddings.dim != config_.embed_dim)
      throw ConfigError("embedding file dimension " + std::to_string(file_embeddings.dim) +
                        " does not match configured dimension " + std::to_string(config_.embed_dim));
    file_embeddings_ = std::move(file_embeddings);
  }

  encoder_ = BiGRU("gru", config_.embed_dim, config_.gru_hidden, init);

  const std::size_t d = config_.encoder_dim();
  if (config_.use_attention()) {
    AttentionConfig att;
    att.heads = config_.attention_heads;
    att.model_dim = d;
    att.scale_by_head_dim = config_.scale_by_head_dim;
    attention_ = AttentionParams("attention", att, init);
  }
  if (config_.use_capsules()) {
    capsules_ = CapsuleParams("capsnet", config_.capsule, d, labels_.size(), init);
  } else {
    const double bound = std::sqrt(6.0 / static_cast<double>(d + labels_.size()));
    Tensor w = Tensor::zeros({d, labels_.size()});
    for (double& v : w.data) v = uniform_range(init, -bound, bound);
    scalar_w_ = Parameter("scalar.w", std::move(w));
    scalar_b_ = Parameter("scalar.b", Tensor::zeros({labels_.size()}));
  }
  transitions_ = TransitionMatrix("crf.transitions", labels_.size());
  transitions_.include_stop = config_.include_stop;
  if (config_.hard_mask) transitions_.apply_bioes_mask(labels_);
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  if (config_.embed_mode == EmbedMode::composed) {
    out.push_back(&composed_.char_table);
    out.push_back(&composed_.position_table);
    out.push_back(&composed_.segment);
  }
  for (GRUCell* cell : {&encoder_.forward_cell, &encoder_.backward_cell}) {
    out.push_back(&cell->w_r);
    out.push_back(&cell->w_z);
    out.push_back(&cell->w_h);
    out.push_back(&cell->b_r);
    out.push_back(&cell->b_z);
    out.push_back(&cell->b_h);
  }
  if (config_.use_attention()) {
    for (AttentionParams::Head& h : attention_.heads) {
      out.push_back(&h.wq);
      out.push_back(&h.wk);
      out.push_back(&h.wv);
    }
    out.push_back(&attention_.wo);
  }
  if (config_.use_capsules()) {
    out.push_back(&capsules_.primary_w);
    out.push_back(&capsules_.primary_b);
    out.push_back(&capsules_.digit_w);
  } else {
    out.push_back(&scalar_w_);
    out.push_back(&scalar_b_);
  }
  out.push_back(&transitions_.weights);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Model::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (Parameter* p : parameters()) out.emplace_back(p->name, &p->value);
  if (config_.embed_mode == EmbedMode::file_backed)
    out.emplace_back("embedding.file_table", &file_embeddings_.table);
  return out;
}

Var Model::embed(Tape& tape, const std::vector<std::string>& chars) {
  if (config_.embed_mode == EmbedMode::file_backed)
    return embed_file_backed(tape, file_embeddings_, chars);
  std::vector<std::size_t> ids(chars.size());
  for (std::size_t i = 0; i < chars.size(); ++i) {
    auto it = char_index_.find(chars[i]);
    ids[i] = it == char_index_.end() ? 0 : it->second;
  }
  return embed_composed(tape, composed_, ids);
}

Var Model::emissions(Tape& tape, const std::vector<std::string>& chars, bool training,
                     Rng& dropout_rng, ForwardTrace* trace) {
  Var x = embed(tape, chars);
  x = tape.dropout(x, config_.dropout, dropout_rng, training);
  Var h = bigru_forward(tape, encoder_, x);
  if (config_.use_attention()) {
    h = multi_head_attention(tape, attention_, h, trace ? &trace->attention : nullptr);
    h = tape.dropout(h, config_.dropout, dropout_rng, training);
  }
  Var e;
  if (config_.use_capsules()) {
    e = capsule_emissions(tape, capsules_, h, trace ? &trace->routing : nullptr);
  } else {
    e = tape.add_rowvec(tape.matmul(h, tape.param(scalar_w_)), tape.param(scalar_b_));
  }
  if (trace) trace->emissions = tape.value(e);
  return e;
}

Var Model::loss(Tape& tape, const Sentence& sentence, bool training, Rng& dropout_rng) {
  if (sentence.chars.size() != sentence.tags.size() || sentence.chars.empty())
    throw ValidationError("sentence with mismatched or empty chars/tags");
  std::vector<std::size_t> path(sentence.tags.size());
  for (std::size_t i = 0; i < sentence.tags.size(); ++i) path[i] = labels_.index(sentence.tags[i]);
  Var e = emissions(tape, sentence.chars, training, dropout_rng);
  Var a = transitions_.scores(tape);
  return crf_nll(tape, e, a, path, transitions_.include_stop);
}

Prediction Model::predict(const std::vector<std::string>& chars) {
  Tape tape;
  Rng unused(0);
  Var e = emissions(tape, chars, false, unused);
  ViterbiResult vit = viterbi_decode(tape.value(e), transitions_.effective(),
                                     transitions_.include_stop);
  Prediction out;
  out.score = vit.score;
  out.label_ids = std::move(vit.path);
  out.tags.reserve(out.label_ids.size());
  for (std::size_t id : out.label_ids) out.tags.push_back(labels_.tag(id));
  return out;
}

ForwardTrace Model::inspect(const std::vector<std::string>& chars) {
  Tape tape;
  Rng unused(0);
  ForwardTrace trace;
  emissions(tape, chars, false, unused, &trace);
  return trace;
}

}  // namespace capstag
