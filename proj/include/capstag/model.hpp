#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "capstag/attention.hpp"
#include "capstag/capsnet.hpp"
#include "capstag/corpus.hpp"
#include "capstag/crf.hpp"
#include "capstag/embedding.hpp"
#include "capstag/gru.hpp"
#include "capstag/tape.hpp"

namespace capstag {

enum class Ablation { full, no_attention, scalar_head, trainable_embed };
enum class EmbedMode { file_backed, composed };

std::string to_string(Ablation a);
std::string to_string(EmbedMode m);
Ablation ablation_from_string(const std::string& s);
EmbedMode embed_mode_from_string(const std::string& s);

struct ModelConfig {
  Ablation ablation = Ablation::full;
  EmbedMode embed_mode = EmbedMode::file_backed;
  std::size_t embed_dim = 768;
  std::size_t max_position = 512;
  std::size_t gru_hidden = 100;
  std::size_t attention_heads = 4;
  bool scale_by_head_dim = false;
  double dropout = 0.5;
  CapsuleConfig capsule;
  bool hard_mask = true;
  bool include_stop = true;
  std::uint64_t seed = 1;

  bool use_attention() const { return ablation != Ablation::no_attention; }
  bool use_capsules() const { return ablation != Ablation::scalar_head; }
  std::size_t encoder_dim() const { return 2 * gru_hidden; }
};

// Everything observable in one forward pass, for the inspection surface.
struct ForwardTrace {
  AttentionTrace attention;
  std::vector<RoutingTrace> routing;  // one per position
  Tensor emissions;                   // n x L
};

struct Prediction {
  std::vector<std::size_t> label_ids;
  std::vector<std::string> tags;
  double score = 0.0;
};

// Character tagger: embeddings -> BiGRU -> self-attention -> capsule routing
// -> transition-scored decoding, with ablation variants swapping out the
// attention stage, the capsule head, or the frozen embedding table.
class Model {
 public:
  Model(ModelConfig config, LabelSet labels, std::vector<std::string> vocabulary,
        FileEmbeddings file_embeddings = {});

  const ModelConfig& config() const { return config_; }
  const LabelSet& labels() const { return labels_; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  const FileEmbeddings& file_embeddings() const { return file_embeddings_; }
  TransitionMatrix& transitions() { return transitions_; }
  AttentionParams& attention() { return attention_; }
  CapsuleParams& capsules() { return capsules_; }
  BiGRU& encoder() { return encoder_; }
  ComposedEmbeddings& composed_embeddings() { return composed_; }

  // Deterministic order; excludes the frozen file-backed table.
  std::vector<Parameter*> parameters();
  // Every tensor a checkpoint must carry, keyed by name.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();

  Var embed(Tape& tape, const std::vector<std::string>& chars);
  Var emissions(Tape& tape, const std::vector<std::string>& chars, bool training, Rng& dropout_rng,
                ForwardTrace* trace = nullptr);
  Var loss(Tape& tape, const Sentence& sentence, bool training, Rng& dropout_rng);

  Prediction predict(const std::vector<std::string>& chars);
  ForwardTrace inspect(const std::vector<std::string>& chars);
  bool knows_char(const std::string& c) const { return char_index_.count(c) > 0; }

 private:
  ModelConfig config_;
  LabelSet labels_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::size_t> char_index_;  // composed rows; 0 = unknown
  FileEmbeddings file_embeddings_;
  ComposedEmbeddings composed_;
  BiGRU encoder_;
  AttentionParams attention_;
  CapsuleParams capsules_;
  Parameter scalar_w_, scalar_b_;
  TransitionMatrix transitions_;
};

}  // namespace capstag
