#include "capstag/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "capstag/errors.hpp"

namespace capstag {

namespace {

constexpr const char* kVersionLine = "capstag-checkpoint v1";

void write_tensor_file(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write tensor file: " + path);
  for (double d : t.data) {
    const float f = static_cast<float>(d);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(bits & 0xFF), static_cast<unsigned char>((bits >> 8) & 0xFF),
        static_cast<unsigned char>((bits >> 16) & 0xFF),
        static_cast<unsigned char>((bits >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
}

void read_tensor_file(const std::string& path, const std::string& name, Tensor& t) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("missing tensor file for '" + name + "': " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() != t.size() * 4)
    throw LoadError("tensor '" + name + "' has " + std::to_string(bytes.size() / 4) +
                    " values, manifest expects " + std::to_string(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                         (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                         (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                         (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    t.data[i] = static_cast<double>(f);
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_checkpoint(Model& model, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const ModelConfig& cfg = model.config();

  std::ofstream out(dir + "/manifest", std::ios::binary);
  if (!out) throw LoadError("cannot write checkpoint manifest in " + dir);
  out << kVersionLine << '\n';
  out << "[config]\n";
  out << "ablation = " << to_string(cfg.ablation) << '\n';
  out << "embed_mode = " << to_string(cfg.embed_mode) << '\n';
  out << "embed_dim = " << cfg.embed_dim << '\n';
  out << "max_position = " << cfg.max_position << '\n';
  out << "gru_hidden = " << cfg.gru_hidden << '\n';
  out << "attention_heads = " << cfg.attention_heads << '\n';
  out << "scale_by_head_dim = " << (cfg.scale_by_head_dim ? 1 : 0) << '\n';
  out << "dropout = " << format_double(cfg.dropout) << '\n';
  out << "num_primary = " << cfg.capsule.num_primary << '\n';
  out << "primary_dim = " << cfg.capsule.primary_dim << '\n';
  out << "digit_dim = " << cfg.capsule.digit_dim << '\n';
  out << "routing_iterations = " << cfg.capsule.routing_iterations << '\n';
  out << "softmax_over_digits = " << (cfg.capsule.softmax_over_digits ? 1 : 0) << '\n';
  out << "hard_mask = " << (cfg.hard_mask ? 1 : 0) << '\n';
  out << "include_stop = " << (cfg.include_stop ? 1 : 0) << '\n';
  out << "seed = " << cfg.seed << '\n';
  out << "[labels]\n";
  for (const std::string& tag : model.labels().tags()) out << tag << '\n';
  out << "[vocab]\n";
  for (const std::string& c : model.vocabulary()) out << c << '\n';
  if (cfg.embed_mode == EmbedMode::file_backed) {
    out << "[embed_tokens]\n";
    for (const std::string& t : model.file_embeddings().tokens) out << t << '\n';
  }
  out << "[tensors]\n";
  for (const auto& [name, tensor] : model.named_tensors()) {
    out << name;
    for (std::size_t d : tensor->shape) out << ' ' << d;
    out << '\n';
    write_tensor_file(dir + "/" + name + ".bin", *tensor);
  }
}

Model load_checkpoint(const std::string& dir) {
  std::ifstream in(dir + "/manifest", std::ios::binary);
  if (!in) throw LoadError("missing checkpoint manifest in " + dir);

  std::string line;
  if (!std::getline(in, line)) throw LoadError("empty checkpoint manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kVersionLine) throw LoadError("unknown checkpoint version: '" + line + "'");

  std::map<std::string, std::string> config_kv;
  std::vector<std::string> labels, vocab, embed_tokens;
  std::vector<std::pair<std::string, std::vector<std::size_t>>> tensor_table;
  std::string section;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    if (section == "config") {
      const std::size_t eq = line.find(" = ");
      if (eq == std::string::npos) throw LoadError("malformed config line: '" + line + "'");
      config_kv[line.substr(0, eq)] = line.substr(eq + 3);
    } else if (section == "labels") {
      labels.push_back(line);
    } else if (section == "vocab") {
      vocab.push_back(line);
    } else if (section == "embed_tokens") {
      embed_tokens.push_back(line);
    } else if (section == "tensors") {
      std::istringstream row(line);
      std::string name;
      row >> name;
      std::vector<std::size_t> shape;
      std::size_t d;
      while (row >> d) shape.push_back(d);
      tensor_table.emplace_back(name, std::move(shape));
    } else {
      throw LoadError("unknown manifest section '" + section + "'");
    }
  }

  auto need = [&](const char* key) -> const std::string& {
    auto it = config_kv.find(key);
    if (it == config_kv.end()) throw LoadError(std::string("manifest missing config key '") + key + "'");
    return it->second;
  };
  ModelConfig cfg;
  cfg.ablation = ablation_from_string(need("ablation"));
  cfg.embed_mode = embed_mode_from_string(need("embed_mode"));
  cfg.embed_dim = std::stoull(need("embed_dim"));
  cfg.max_position = std::stoull(need("max_position"));
  cfg.gru_hidden = std::stoull(need("gru_hidden"));
  cfg.attention_heads = std::stoull(need("attention_heads"));
  cfg.scale_by_head_dim = need("scale_by_head_dim") == "1";
  cfg.dropout = std::stod(need("dropout"));
  cfg.capsule.num_primary = std::stoull(need("num_primary"));
  cfg.capsule.primary_dim = std::stoull(need("primary_dim"));
  cfg.capsule.digit_dim = std::stoull(need("digit_dim"));
  cfg.capsule.routing_iterations = std::stoull(need("routing_iterations"));
  cfg.capsule.softmax_over_digits = need("softmax_over_digits") == "1";
  cfg.hard_mask = need("hard_mask") == "1";
  cfg.include_stop = need("include_stop") == "1";
  cfg.seed = std::stoull(need("seed"));

  if (labels.empty()) throw LoadError("manifest has no labels");

  FileEmbeddings femb;
  if (cfg.embed_mode == EmbedMode::file_backed) {
    if (embed_tokens.empty()) throw LoadError("manifest missing embed_tokens for file-backed model");
    femb.dim = cfg.embed_dim;
    femb.tokens = embed_tokens;
    for (std::size_t i = 0; i < embed_tokens.size(); ++i) femb.index[embed_tokens[i]] = i;
    if (!femb.index.count(kUnkToken)) throw LoadError("embed_tokens missing " + std::string(kUnkToken));
    femb.table = Tensor::zeros({embed_tokens.size(), cfg.embed_dim});
  }

  Model model(cfg, LabelSet::from_ordered_tags(labels), vocab, std::move(femb));

  std::map<std::string, Tensor*> live;
  for (auto& [name, tensor] : model.named_tensors()) live[name] = tensor;
  if (live.size() != tensor_table.size())
    throw LoadError("manifest lists " + std::to_string(tensor_table.size()) +
                    " tensors, model has " + std::to_string(live.size()));
  for (const auto& [name, shape] : tensor_table) {
    auto it = live.find(name);
    if (it == live.end()) throw LoadError("manifest tensor '" + name + "' not part of this model");
    if (it->second->shape != shape)
      throw LoadError("tensor '" + name + "' shape " + shape_str(shape) +
                      " in manifest, model expects " + it->second->shape_str());
    read_tensor_file(dir + "/" + name + ".bin", name, *it->second);
  }
  return model;
}

}  // namespace capstag
