#include "capstag/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "capstag/errors.hpp"

namespace capstag {

std::optional<ParsedTag> parse_tag(const std::string& tag) {
  if (tag == "O") return ParsedTag{'O', ""};
  if (tag.size() < 3 || tag[1] != '-') return std::nullopt;
  const char k = tag[0];
  if (k != 'B' && k != 'I' && k != 'E' && k != 'S') return std::nullopt;
  return ParsedTag{k, tag.substr(2)};
}

void LabelSet::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < tags_.size(); ++i) index_[tags_[i]] = i;
}

LabelSet LabelSet::from_entity_types(const std::vector<std::string>& types) {
  std::vector<std::string> sorted = types;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  LabelSet ls;
  ls.tags_.push_back("O");
  for (const std::string& t : sorted)
    for (const char* k : {"B-", "I-", "E-", "S-"}) ls.tags_.push_back(k + t);
  ls.rebuild_index();
  return ls;
}

LabelSet LabelSet::from_tags(const std::vector<std::string>& tags,
                             std::vector<std::string>* warnings) {
  std::set<std::string> seen(tags.begin(), tags.end());
  std::vector<std::string> types;
  for (const std::string& t : tags) {
    auto parsed = parse_tag(t);
    if (!parsed) throw LabelError("not a BIOES tag: '" + t + "'");
    if (parsed->kind != 'O') types.push_back(parsed->type);
  }
  LabelSet ls = from_entity_types(types);
  if (warnings) {
    for (const std::string& tag : ls.tags_)
      if (tag != "O" && !seen.count(tag))
        warnings->push_back("label set completed with missing tag " + tag);
  }
  return ls;
}

LabelSet LabelSet::from_ordered_tags(const std::vector<std::string>& tags) {
  LabelSet ls;
  ls.tags_ = tags;
  ls.rebuild_index();
  return ls;
}

std::size_t LabelSet::index(const std::string& tag) const {
  auto it = index_.find(tag);
  if (it == index_.end()) throw LabelError("tag not in label set: '" + tag + "'");
  return it->second;
}

std::vector<std::string> LabelSet::entity_types() const {
  std::vector<std::string> out;
  for (const std::string& t : tags_) {
    auto parsed = parse_tag(t);
    if (parsed && parsed->kind == 'B') out.push_back(parsed->type);
  }
  return out;
}

Corpus corpus_from_sentences(std::vector<Sentence> sentences,
                             std::vector<std::string>* warnings) {
  std::vector<std::string> all_tags;
  std::set<std::string> vocab;
  for (const Sentence& s : sentences) {
    all_tags.insert(all_tags.end(), s.tags.begin(), s.tags.end());
    vocab.insert(s.chars.begin(), s.chars.end());
  }
  Corpus c;
  c.sentences = std::move(sentences);
  c.label_set = LabelSet::from_tags(all_tags, warnings);
  c.char_vocabulary.assign(vocab.begin(), vocab.end());
  return c;
}

Corpus load_conll(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open corpus file: " + path);

  std::vector<Sentence> sentences;
  Sentence current;
  std::string line;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (!current.chars.empty()) {
      sentences.push_back(std::move(current));
      current = Sentence{};
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw ParseError(line_no, "expected exactly two TAB-separated fields");
    std::string ch = line.substr(0, tab);
    std::string tag = line.substr(tab + 1);
    if (ch.empty() || tag.empty())
      throw ParseError(line_no, "empty character or tag field");
    if (!parse_tag(tag))
      throw ParseError(line_no, "tag '" + tag + "' does not match O or {B,I,E,S}-<type>");
    current.chars.push_back(std::move(ch));
    current.tags.push_back(std::move(tag));
  }
  flush();

  Corpus c = corpus_from_sentences(std::move(sentences), warnings);
  if (c.sentences.empty() && warnings) warnings->push_back("no sentences");
  return c;
}

void write_conll(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write corpus file: " + path);
  for (const Sentence& s : corpus.sentences) {
    for (std::size_t i = 0; i < s.chars.size(); ++i)
      out << s.chars[i] << '\t' << s.tags[i] << '\n';
    out << '\n';
  }
}

std::vector<std::string> bioes_encode(std::size_t length, std::vector<EntitySpan> spans) {
  std::sort(spans.begin(), spans.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const EntitySpan& s = spans[i];
    if (s.start > s.end || s.end >= length)
      throw ValidationError("span (" + s.entity_type + "," + std::to_string(s.start) + "," +
                            std::to_string(s.end) + ") out of bounds for length " +
                            std::to_string(length));
    if (i > 0 && spans[i - 1].end >= s.start) {
      const EntitySpan& p = spans[i - 1];
      throw ValidationError("overlapping spans (" + p.entity_type + "," + std::to_string(p.start) +
                            "," + std::to_string(p.end) + ") and (" + s.entity_type + "," +
                            std::to_string(s.start) + "," + std::to_string(s.end) + ")");
    }
  }
  std::vector<std::string> tags(length, "O");
  for (const EntitySpan& s : spans) {
    if (s.start == s.end) {
      tags[s.start] = "S-" + s.entity_type;
    } else {
      tags[s.start] = "B-" + s.entity_type;
      for (std::size_t i = s.start + 1; i < s.end; ++i) tags[i] = "I-" + s.entity_type;
      tags[s.end] = "E-" + s.entity_type;
    }
  }
  return tags;
}

std::vector<EntitySpan> bioes_decode(const std::vector<std::string>& tags, bool strict) {
  std::vector<ParsedTag> parsed(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) {
    auto p = parse_tag(tags[i]);
    if (!p) throw LabelError("not a BIOES tag at position " + std::to_string(i) + ": '" + tags[i] + "'");
    parsed[i] = *p;
  }

  std::vector<EntitySpan> spans;
  std::size_t i = 0;
  while (i < tags.size()) {
    const ParsedTag& t = parsed[i];
    if (t.kind == 'O') {
      ++i;
    } else if (t.kind == 'S') {
      spans.push_back({t.type, i, i});
      ++i;
    } else if (t.kind == 'B') {
      std::size_t j = i + 1;
      while (j < tags.size() && parsed[j].kind == 'I' && parsed[j].type == t.type) ++j;
      if (j < tags.size() && parsed[j].kind == 'E' && parsed[j].type == t.type) {
        spans.push_back({t.type, i, j});
        i = j + 1;
      } else if (strict) {
        throw ValidationError("invalid BIOES sequence at position " + std::to_string(std::min(j, tags.size() - 1)) +
                              ": entity opened by " + tags[i] + " never closes");
      } else {
        i = j;  // drop the ill-formed fragment, resume at the breaking tag
      }
    } else {  // stray I or E
      if (strict)
        throw ValidationError("invalid BIOES sequence at position " + std::to_string(i) + ": " +
                              tags[i] + " without a matching B-" + t.type);
      ++i;
    }
  }
  return spans;
}

std::vector<std::uint8_t> transition_mask(const LabelSet& labels) {
  const std::size_t L = labels.size();
  const std::size_t n = L + 2;
  const std::size_t start = labels.start_index();
  const std::size_t stop = labels.stop_index();
  std::vector<ParsedTag> parsed(L);
  for (std::size_t i = 0; i < L; ++i) parsed[i] = *parse_tag(labels.tag(i));

  std::vector<std::uint8_t> mask(n * n, 0);
  auto boundary_ok = [&](const ParsedTag& t) {  // may precede B-*/S-*/O or follow them
    return t.kind == 'O' || t.kind == 'E' || t.kind == 'S';
  };
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      const ParsedTag& a = parsed[i];
      const ParsedTag& b = parsed[j];
      bool ok;
      if (a.kind == 'B' || a.kind == 'I')
        ok = (b.kind == 'I' || b.kind == 'E') && b.type == a.type;
      else
        ok = b.kind == 'O' || b.kind == 'B' || b.kind == 'S';
      mask[i * n + j] = ok ? 1 : 0;
    }
    mask[start * n + i] = (parsed[i].kind == 'O' || parsed[i].kind == 'B' || parsed[i].kind == 'S') ? 1 : 0;
    mask[i * n + stop] = boundary_ok(parsed[i]) ? 1 : 0;
  }
  return mask;
}

Corpus generate_synthetic(const SyntheticConfig& config) {
  if (config.vocab_size < 10)
    throw ConfigError("synthetic vocab size must be >= 10, got " + std::to_string(config.vocab_size));
  if (config.entity_types < 1) throw ConfigError("synthetic corpus needs at least one entity type");
  if (config.vocab_size < 3 * config.entity_types + 3)
    throw ConfigError("synthetic vocab size " + std::to_string(config.vocab_size) +
                      " too small for " + std::to_string(config.entity_types) + " entity types");
  if (config.sentences < 1) throw ConfigError("synthetic corpus needs at least one sentence");
  if (config.min_len < 1 || config.max_len < config.min_len)
    throw ConfigError("synthetic length range is empty");

  // character i is the CJK codepoint 0x4E00+i, rendered as UTF-8
  auto char_at = [](std::size_t i) {
    const unsigned cp = 0x4E00 + static_cast<unsigned>(i);
    std::string s(3, '\0');
    s[0] = static_cast<char>(0xE0 | (cp >> 12));
    s[1] = static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    s[2] = static_cast<char>(0x80 | (cp & 0x3F));
    return s;
  };
  auto type_name = [](std::size_t k) -> std::string {
    static const char* common[] = {"PER", "LOC", "ORG"};
    if (k < 3) return common[k];
    return "T" + std::to_string(k);
  };

  const std::size_t chars_per_type = 3;
  const std::size_t filler_begin = chars_per_type * config.entity_types;

  Rng rng(config.seed);
  std::vector<Sentence> sentences;
  sentences.reserve(config.sentences);
  for (std::size_t si = 0; si < config.sentences; ++si) {
    const std::size_t len = uniform_index(rng, config.min_len, config.max_len);
    std::vector<std::string> chars;
    chars.reserve(len);
    std::vector<EntitySpan> spans;
    bool last_was_entity = false;
    while (chars.size() < len) {
      const bool want_entity = !last_was_entity && uniform01(rng) < 0.35;
      if (want_entity) {
        const std::size_t type = uniform_index(rng, 0, config.entity_types - 1);
        const std::size_t max_span = std::min<std::size_t>(3, len - chars.size());
        const std::size_t span_len = uniform_index(rng, 1, max_span);
        const std::size_t start = chars.size();
        for (std::size_t k = 0; k < span_len; ++k)
          chars.push_back(char_at(type * chars_per_type +
                                  uniform_index(rng, 0, chars_per_type - 1)));
        spans.push_back({type_name(type), start, start + span_len - 1});
        last_was_entity = true;
      } else {
        chars.push_back(char_at(uniform_index(rng, filler_begin, config.vocab_size - 1)));
        last_was_entity = false;
      }
    }
    Sentence s;
    s.tags = bioes_encode(len, spans);
    s.chars = std::move(chars);
    sentences.push_back(std::move(s));
  }
  return corpus_from_sentences(std::move(sentences));
}

}  // namespace capstag
