#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "capstag/tape.hpp"

namespace capstag {

inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";

// Frozen per-character vectors loaded from a text file; stands in for the
// output of a pretrained contextual encoder. Reserved tokens are always
// present (zero-filled if the file lacks them).
struct FileEmbeddings {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, std::size_t> index;
  Tensor table;  // tokens.size() x dim
  std::size_t dim = 0;

  std::size_t row_for(const std::string& token) const;  // falls back to [UNK]
  bool has(const std::string& token) const { return index.count(token) > 0; }
};

// Text format: header "<vocab_size> <dim>", then one "<token> <f1> ... <fdim>"
// row per token.
FileEmbeddings load_embedding_file(const std::string& path,
                                   std::vector<std::string>* warnings = nullptr);
void write_embedding_file(const FileEmbeddings& emb, const std::string& path);

// Deterministic random table over the given characters plus reserved tokens.
FileEmbeddings random_embeddings(const std::vector<std::string>& chars, std::size_t dim,
                                 std::uint64_t seed);

// Trainable three-part sum: per-character row + per-position row + a shared
// segment vector. Row 0 of the character table is the unknown-character row.
struct ComposedEmbeddings {
  Parameter char_table;      // vocab x dim
  Parameter position_table;  // max_position x dim
  Parameter segment;         // 1 x dim

  ComposedEmbeddings() = default;
  ComposedEmbeddings(std::size_t vocab, std::size_t dim, std::size_t max_position, Rng& rng);

  std::size_t dim() const { return char_table.value.shape[1]; }
  std::size_t max_position() const { return position_table.value.shape[0]; }
};

// Frozen lookup; unseen characters take the [UNK] row.
Var embed_file_backed(Tape& tape, const FileEmbeddings& emb,
                      const std::vector<std::string>& chars);

// char_ids index the character table (0 = unknown).
Var embed_composed(Tape& tape, ComposedEmbeddings& emb, const std::vector<std::size_t>& char_ids);

}  // namespace capstag
