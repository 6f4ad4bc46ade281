#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "capstag/rng.hpp"

namespace capstag {

// One character sequence with per-character BIOES tags.
struct Sentence {
  std::vector<std::string> chars;  // one UTF-8 codepoint per entry
  std::vector<std::string> tags;

  bool operator==(const Sentence&) const = default;
};

struct EntitySpan {
  std::string entity_type;
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive

  bool operator==(const EntitySpan&) const = default;
};

// Decomposed tag: kind 'O' (type empty) or one of 'B','I','E','S' with a type.
struct ParsedTag {
  char kind = 'O';
  std::string type;
};

std::optional<ParsedTag> parse_tag(const std::string& tag);

// Closed tag vocabulary with dense indices plus START/STOP used by the
// transition layer. O is index 0; entity types are sorted, each contributing
// B-T, I-T, E-T, S-T in that order.
class LabelSet {
 public:
  LabelSet() = default;

  // Builds from observed tags; completes partial B/I/E/S families, reporting
  // each added tag in `warnings` when given.
  static LabelSet from_tags(const std::vector<std::string>& tags,
                            std::vector<std::string>* warnings = nullptr);
  static LabelSet from_entity_types(const std::vector<std::string>& types);
  static LabelSet from_ordered_tags(const std::vector<std::string>& tags);  // trusted order

  std::size_t size() const { return tags_.size(); }
  const std::string& tag(std::size_t i) const { return tags_.at(i); }
  const std::vector<std::string>& tags() const { return tags_; }
  std::size_t index(const std::string& tag) const;
  bool contains(const std::string& tag) const { return index_.count(tag) > 0; }
  std::size_t start_index() const { return size(); }
  std::size_t stop_index() const { return size() + 1; }
  std::vector<std::string> entity_types() const;

  bool operator==(const LabelSet& o) const { return tags_ == o.tags_; }

 private:
  std::vector<std::string> tags_;
  std::unordered_map<std::string, std::size_t> index_;

  void rebuild_index();
};

struct Corpus {
  std::vector<Sentence> sentences;
  LabelSet label_set;
  std::vector<std::string> char_vocabulary;  // sorted, distinct

  bool operator==(const Corpus&) const = default;
};

// CoNLL interchange: "<char>\t<tag>" per line, blank line between sentences.
Corpus load_conll(const std::string& path, std::vector<std::string>* warnings = nullptr);
Corpus corpus_from_sentences(std::vector<Sentence> sentences,
                             std::vector<std::string>* warnings = nullptr);
void write_conll(const Corpus& corpus, const std::string& path);

std::vector<std::string> bioes_encode(std::size_t length, std::vector<EntitySpan> spans);
std::vector<EntitySpan> bioes_decode(const std::vector<std::string>& tags, bool strict);

// (L+2)^2 row-major validity matrix over label indices plus START/STOP.
std::vector<std::uint8_t> transition_mask(const LabelSet& labels);

struct SyntheticConfig {
  std::size_t vocab_size = 50;
  std::size_t entity_types = 3;
  std::size_t sentences = 100;
  std::size_t min_len = 6;
  std::size_t max_len = 14;
  std::uint64_t seed = 1;
};

// Deterministic corpus where each entity type owns a disjoint character range,
// so span structure is fully recoverable from character classes.
Corpus generate_synthetic(const SyntheticConfig& config);

}  // namespace capstag
