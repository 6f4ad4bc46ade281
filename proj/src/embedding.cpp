#include "capstag/embedding.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "capstag/errors.hpp"

namespace capstag {

namespace {
const char* kReserved[] = {kClsToken, kSepToken, kUnkToken, kPadToken};
}

std::size_t FileEmbeddings::row_for(const std::string& token) const {
  auto it = index.find(token);
  if (it != index.end()) return it->second;
  return index.at(kUnkToken);
}

FileEmbeddings load_embedding_file(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open embedding file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing embedding header");
  std::istringstream header(line);
  std::size_t vocab = 0, dim = 0;
  if (!(header >> vocab >> dim) || dim == 0)
    throw ParseError(1, "embedding header must be '<vocab_size> <dim>'");
  std::string extra;
  if (header >> extra) throw ParseError(1, "embedding header must be '<vocab_size> <dim>'");

  FileEmbeddings emb;
  emb.dim = dim;
  emb.tokens.reserve(vocab + 4);
  std::vector<double> values;
  values.reserve((vocab + 4) * dim);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string token;
    row >> token;
    if (emb.index.count(token)) throw ParseError(line_no, "duplicate token '" + token + "'");
    std::size_t count = 0;
    double v;
    while (row >> v) {
      values.push_back(v);
      ++count;
    }
    if (count != dim)
      throw ParseError(line_no, "expected " + std::to_string(dim) + " floats for token '" + token +
                                    "', got " + std::to_string(count));
    emb.index[token] = emb.tokens.size();
    emb.tokens.push_back(token);
  }
  if (emb.tokens.size() != vocab)
    throw ParseError("embedding header declares " + std::to_string(vocab) + " tokens but file has " +
                     std::to_string(emb.tokens.size()));

  for (const char* r : kReserved) {
    if (!emb.index.count(r)) {
      emb.index[r] = emb.tokens.size();
      emb.tokens.push_back(r);
      values.insert(values.end(), dim, 0.0);
      if (warnings) warnings->push_back(std::string("reserved token ") + r + " missing, using zero vector");
    }
  }
  emb.table = Tensor::from_data({emb.tokens.size(), dim}, std::move(values));
  return emb;
}

void write_embedding_file(const FileEmbeddings& emb, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write embedding file: " + path);
  out << emb.tokens.size() << ' ' << emb.dim << '\n';
  char buf[64];
  for (std::size_t i = 0; i < emb.tokens.size(); ++i) {
    out << emb.tokens[i];
    for (std::size_t j = 0; j < emb.dim; ++j) {
      std::snprintf(buf, sizeof(buf), " %.17g", emb.table(i, j));
      out << buf;
    }
    out << '\n';
  }
}

FileEmbeddings random_embeddings(const std::vector<std::string>& chars, std::size_t dim,
                                 std::uint64_t seed) {
  FileEmbeddings emb;
  emb.dim = dim;
  for (const char* r : kReserved) {
    emb.index[r] = emb.tokens.size();
    emb.tokens.push_back(r);
  }
  for (const std::string& c : chars) {
    if (emb.index.count(c)) continue;
    emb.index[c] = emb.tokens.size();
    emb.tokens.push_back(c);
  }
  Rng rng = derived_rng(seed, 0xE3B);
  emb.table = Tensor::zeros({emb.tokens.size(), dim});
  for (double& v : emb.table.data) v = uniform_range(rng, -0.5, 0.5);
  return emb;
}

ComposedEmbeddings::ComposedEmbeddings(std::size_t vocab, std::size_t dim,
                                       std::size_t max_position, Rng& rng) {
  auto init = [&](const char* name, std::size_t r, std::size_t c) {
    Tensor t = Tensor::zeros({r, c});
    for (double& v : t.data) v = uniform_range(rng, -0.05, 0.05);
    return Parameter(name, std::move(t));
  };
  char_table = init("embedding.char_table", vocab, dim);
  position_table = init("embedding.position_table", max_position, dim);
  segment = init("embedding.segment", 1, dim);
}

Var embed_file_backed(Tape& tape, const FileEmbeddings& emb,
                      const std::vector<std::string>& chars) {
  if (chars.empty()) throw DimensionError("embed: empty sentence");
  Tensor out = Tensor::zeros({chars.size(), emb.dim});
  for (std::size_t i = 0; i < chars.size(); ++i) {
    const std::size_t r = emb.row_for(chars[i]);
    std::copy_n(emb.table.data.begin() + r * emb.dim, emb.dim, out.data.begin() + i * emb.dim);
  }
  return tape.leaf(std::move(out));
}

Var embed_composed(Tape& tape, ComposedEmbeddings& emb, const std::vector<std::size_t>& char_ids) {
  if (char_ids.empty()) throw DimensionError("embed: empty sentence");
  if (char_ids.size() > emb.max_position())
    throw DimensionError("sentence length " + std::to_string(char_ids.size()) +
                         " exceeds max position " + std::to_string(emb.max_position()));
  std::vector<std::size_t> positions(char_ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
  const std::vector<std::size_t> segment_rows(char_ids.size(), 0);

  Var chars = tape.gather_rows(tape.param(emb.char_table), char_ids);
  Var pos = tape.gather_rows(tape.param(emb.position_table), positions);
  Var seg = tape.gather_rows(tape.param(emb.segment), segment_rows);
  return tape.add(tape.add(chars, pos), seg);
}

}  // namespace capstag
