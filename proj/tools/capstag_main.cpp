#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "capstag/checkpoint.hpp"
#include "capstag/corpus.hpp"
#include "capstag/embedding.hpp"
#include "capstag/errors.hpp"
#include "capstag/model.hpp"
#include "capstag/train.hpp"
#include "capstag/utf8.hpp"

namespace {

using namespace capstag;

struct GenOptions {
  SyntheticConfig synth;
  std::string out_path;
};

int run_gen(const GenOptions& opt) {
  Corpus corpus = generate_synthetic(opt.synth);
  write_conll(corpus, opt.out_path);

  std::size_t chars = 0;
  std::map<std::string, std::size_t> entities;
  for (const Sentence& s : corpus.sentences) {
    chars += s.chars.size();
    for (const EntitySpan& span : bioes_decode(s.tags, true)) ++entities[span.entity_type];
  }
  std::cout << "wrote " << opt.out_path << ": " << corpus.sentences.size() << " sentences, "
            << chars << " chars, vocabulary " << corpus.char_vocabulary.size() << "\n";
  for (const auto& [type, count] : entities)
    std::cout << "  " << type << ": " << count << " entities\n";
  return 0;
}

struct TrainOptions {
  std::string train_path, dev_path, out_dir, embeddings_path;
  std::string ablation = "full";
  std::string embed_mode;  // empty = derive from ablation
  std::string hard_mask = "auto";
  ModelConfig model;
  TrainConfig train;
  bool no_stop_term = false;
  bool explicit_embed_dim = false;
};

std::string config_echo(const Model& model, const TrainOptions& opt) {
  const ModelConfig& cfg = model.config();
  std::string line = "ablation=" + to_string(cfg.ablation) + " embed_mode=" + to_string(cfg.embed_mode) +
      " embed_dim=" + std::to_string(cfg.embed_dim) + " gru_hidden=" + std::to_string(cfg.gru_hidden) +
      " heads=" + std::to_string(cfg.attention_heads) +
      " num_primary=" + std::to_string(cfg.capsule.num_primary) +
      " primary_dim=" + std::to_string(cfg.capsule.primary_dim) +
      " digit_dim=" + std::to_string(cfg.capsule.digit_dim) +
      " routing_iterations=" + std::to_string(cfg.capsule.routing_iterations) +
      " hard_mask=" + std::string(cfg.hard_mask ? "1" : "0") +
      " include_stop=" + std::string(cfg.include_stop ? "1" : "0");
  char buf[160];
  std::snprintf(buf, sizeof(buf), " dropout=%g lr=%g batch_size=%zu epochs=%zu seed=%llu",
                cfg.dropout, opt.train.learning_rate, opt.train.batch_size, opt.train.epochs,
                static_cast<unsigned long long>(opt.train.seed));
  return line + buf;
}

int run_train(TrainOptions opt) {
  std::vector<std::string> warnings;
  Corpus train_corpus = load_conll(opt.train_path, &warnings);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
  if (train_corpus.sentences.empty())
    throw ConfigError("training corpus has no sentences: " + opt.train_path);

  Corpus dev_corpus;
  bool have_dev = false;
  if (!opt.dev_path.empty()) {
    dev_corpus = load_conll(opt.dev_path);
    have_dev = true;
  }

  // Ablation presets, overridable by explicit flags.
  if (opt.embed_mode.empty())
    opt.embed_mode = opt.ablation == "trainable_embed" ? "composed" : "file";
  opt.model.ablation = ablation_from_string(opt.ablation);
  opt.model.embed_mode = embed_mode_from_string(opt.embed_mode);
  if (opt.hard_mask == "auto")
    opt.model.hard_mask = opt.model.ablation != Ablation::scalar_head;
  else
    opt.model.hard_mask = opt.hard_mask == "on";
  opt.model.include_stop = !opt.no_stop_term;
  opt.model.seed = opt.train.seed;

  FileEmbeddings emb;
  if (opt.model.embed_mode == EmbedMode::file_backed) {
    if (!opt.embeddings_path.empty()) {
      std::vector<std::string> emb_warnings;
      emb = load_embedding_file(opt.embeddings_path, &emb_warnings);
      for (const std::string& w : emb_warnings) std::cerr << "warning: " << w << "\n";
      if (!opt.explicit_embed_dim)
        opt.model.embed_dim = emb.dim;
    } else {
      emb = random_embeddings(train_corpus.char_vocabulary, opt.model.embed_dim, opt.train.seed);
    }
  }

  Model model(opt.model, train_corpus.label_set, train_corpus.char_vocabulary, std::move(emb));

  std::filesystem::create_directories(opt.out_dir);
  std::ofstream log(opt.out_dir + "/metrics.tsv", std::ios::binary);
  if (!log) throw ConfigError("cannot write metrics log in " + opt.out_dir);
  const std::string echo = config_echo(model, opt);
  log << "# capstag train log\n# config: " << echo << "\n";
  log << "epoch\ttrain_loss\tdev_p\tdev_r\tdev_f1\n";
  std::cout << "config: " << echo << "\n";

  char buf[256];
  auto on_epoch = [&](const EpochStats& stats) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.6f\t%.6f\t%.6f\t%.6f", stats.epoch, stats.train_loss,
                  stats.dev.precision, stats.dev.recall, stats.dev.f1);
    log << buf << "\n";
    log.flush();
    std::cout << "epoch " << buf << "\n";
  };

  TrainResult result = train_model(model, opt.train, train_corpus,
                                   have_dev ? &dev_corpus : nullptr, opt.out_dir, on_epoch);
  std::cout << "best dev F1 " << result.best_f1 << " at epoch " << result.best_epoch
            << " (checkpoint in " << opt.out_dir << ")\n";
  return 0;
}

void print_report(const EvalReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "overall\tP=%.6f\tR=%.6f\tF1=%.6f\tTP=%zu\tFP=%zu\tFN=%zu",
                report.precision, report.recall, report.f1, report.counts.tp, report.counts.fp,
                report.counts.fn);
  std::cout << buf << "\n";
  for (const auto& [type, m] : report.per_type) {
    std::snprintf(buf, sizeof(buf), "%s\tP=%.6f\tR=%.6f\tF1=%.6f\tTP=%zu\tFP=%zu\tFN=%zu",
                  type.c_str(), m.precision, m.recall, m.f1, m.counts.tp, m.counts.fp, m.counts.fn);
    std::cout << buf << "\n";
  }
}

int run_eval(const std::string& model_dir, const std::string& data_path) {
  Model model = load_checkpoint(model_dir);
  Corpus corpus = load_conll(data_path);
  for (const Sentence& s : corpus.sentences)
    for (const std::string& tag : s.tags)
      if (!model.labels().contains(tag))
        throw LabelError("corpus tag '" + tag + "' is not in the model label set");
  print_report(evaluate(model, corpus));
  return 0;
}

int run_tag(const std::string& model_dir, const std::string& input_path,
            const std::string& out_path) {
  Model model = load_checkpoint(model_dir);
  std::ifstream in(input_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open input file: " + input_path);
  std::ofstream file_out;
  const bool to_stdout = out_path.empty() || out_path == "-";
  if (!to_stdout) {
    file_out.open(out_path, std::ios::binary);
    if (!file_out) throw ConfigError("cannot write output file: " + out_path);
  }
  std::ostream& out = to_stdout ? std::cout : file_out;

  const bool file_mode = model.config().embed_mode == EmbedMode::file_backed;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> chars = utf8_chars(line);
    for (const std::string& c : chars) {
      const bool known = file_mode ? model.file_embeddings().has(c) : model.knows_char(c);
      if (!known)
        std::cerr << "warning: line " << line_no << ": character '" << c
                  << "' not in vocabulary, using " << kUnkToken << "\n";
    }
    Prediction pred = model.predict(chars);
    for (std::size_t i = 0; i < chars.size(); ++i)
      out << chars[i] << '\t' << pred.tags[i] << '\n';
    out << '\n';
  }
  return 0;
}

int run_inspect(const std::string& model_dir, const std::string& text) {
  Model model = load_checkpoint(model_dir);
  const std::vector<std::string> chars = utf8_chars(text);
  if (chars.empty()) throw ConfigError("inspect needs a non-empty sentence");
  ForwardTrace trace = model.inspect(chars);
  const std::size_t n = chars.size();
  const std::size_t labels = model.labels().size();
  char buf[64];

  std::cout << "label scores (top 3 per position):\n";
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<std::size_t> order(labels);
    for (std::size_t j = 0; j < labels; ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return trace.emissions(t, a) > trace.emissions(t, b);
    });
    std::cout << "  pos " << t << " '" << chars[t] << "':";
    for (std::size_t k = 0; k < std::min<std::size_t>(3, labels); ++k) {
      std::snprintf(buf, sizeof(buf), " %s=%.6f", model.labels().tag(order[k]).c_str(),
                    trace.emissions(t, order[k]));
      std::cout << buf;
    }
    std::cout << "\n";
  }

  if (model.config().use_attention()) {
    for (std::size_t h = 0; h < trace.attention.head_weights.size(); ++h) {
      std::cout << "attention head " << h << " weights:\n";
      const Tensor& w = trace.attention.head_weights[h];
      for (std::size_t i = 0; i < n; ++i) {
        std::cout << " ";
        for (std::size_t j = 0; j < n; ++j) {
          std::snprintf(buf, sizeof(buf), " %.6f", w(i, j));
          std::cout << buf;
        }
        std::cout << "\n";
      }
    }
  } else {
    std::cout << "attention: disabled in this model\n";
  }

  if (model.config().use_capsules()) {
    std::cout << "routing couplings (final iteration, mean over primary capsules):\n";
    for (std::size_t t = 0; t < n; ++t) {
      const Tensor& c = trace.routing[t].couplings.back();
      const std::size_t P = c.shape[0];
      std::cout << "  pos " << t << ":";
      for (std::size_t j = 0; j < labels; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < P; ++i) mean += c(i, j);
        std::snprintf(buf, sizeof(buf), " %.4f", mean / static_cast<double>(P));
        std::cout << buf;
      }
      std::cout << "\n";
    }
  } else {
    std::cout << "routing: scalar head, no capsule couplings\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"character-level sequence labeler with a capsule-network output layer"};
  app.require_subcommand(1);

  GenOptions gen;
  CLI::App* cmd_gen = app.add_subcommand("gen", "generate a synthetic CoNLL corpus");
  cmd_gen->add_option("--sentences", gen.synth.sentences, "sentence count")
      ->check(CLI::PositiveNumber);
  cmd_gen->add_option("--vocab", gen.synth.vocab_size, "vocabulary size (>= 10)");
  cmd_gen->add_option("--entity-types", gen.synth.entity_types, "number of entity types");
  cmd_gen->add_option("--min-len", gen.synth.min_len, "minimum sentence length");
  cmd_gen->add_option("--max-len", gen.synth.max_len, "maximum sentence length");
  cmd_gen->add_option("--seed", gen.synth.seed, "generator seed");
  cmd_gen->add_option("--out", gen.out_path, "output CoNLL path")->required();

  TrainOptions tr;
  CLI::App* cmd_train = app.add_subcommand("train", "train a model on a CoNLL corpus");
  cmd_train->set_config("--config", "", "key-value config file; flags win over file entries");
  cmd_train->allow_config_extras(false);
  cmd_train->add_option("--train", tr.train_path, "training CoNLL path")->required();
  cmd_train->add_option("--dev", tr.dev_path, "dev CoNLL path (default: seeded 10% split)");
  cmd_train->add_option("--out", tr.out_dir, "output directory for checkpoint + metrics")->required();
  cmd_train->add_option("--epochs", tr.train.epochs, "training epochs");
  cmd_train->add_option("--batch-size", tr.train.batch_size, "sentences per optimizer step");
  cmd_train->add_option("--lr", tr.train.learning_rate, "Adam learning rate");
  cmd_train->add_option("--dropout", tr.model.dropout, "dropout rate");
  cmd_train->add_option("--seed", tr.train.seed, "master seed (init, shuffle, dropout, split)");
  cmd_train->add_option("--ablation", tr.ablation, "full|no_attention|scalar_head|trainable_embed")
      ->check(CLI::IsMember({"full", "no_attention", "scalar_head", "trainable_embed"}));
  cmd_train->add_option("--embed-mode", tr.embed_mode, "file|composed")
      ->check(CLI::IsMember({"file", "composed"}));
  cmd_train->add_option("--embeddings", tr.embeddings_path,
                        "embedding text file for file mode (default: seeded random table)");
  auto* embed_dim_opt = cmd_train->add_option("--embed-dim", tr.model.embed_dim, "character vector dimension");
  cmd_train->add_option("--max-position", tr.model.max_position, "max sentence length (composed mode)");
  cmd_train->add_option("--gru-hidden", tr.model.gru_hidden, "GRU hidden dimension");
  cmd_train->add_option("--heads", tr.model.attention_heads, "attention heads");
  cmd_train->add_flag("--scale-by-head-dim", tr.model.scale_by_head_dim,
                      "scale attention scores by sqrt(head dim) instead of sqrt(model dim)");
  cmd_train->add_option("--num-primary", tr.model.capsule.num_primary, "primary capsules");
  cmd_train->add_option("--primary-dim", tr.model.capsule.primary_dim, "primary capsule dimension");
  cmd_train->add_option("--digit-dim", tr.model.capsule.digit_dim, "digit capsule dimension");
  cmd_train->add_option("--routing-iters", tr.model.capsule.routing_iterations, "routing iterations");
  cmd_train->add_flag("!--routing-over-primaries", tr.model.capsule.softmax_over_digits,
                      "normalize couplings over primaries instead of digits");
  cmd_train->add_option("--hard-mask", tr.hard_mask, "on|off|auto (auto: off for scalar_head)")
      ->check(CLI::IsMember({"on", "off", "auto"}));
  cmd_train->add_flag("--no-stop-term", tr.no_stop_term, "drop the STOP column from path scores");
  cmd_train->add_option("--stop-at-f1", tr.train.stop_at_dev_f1, "stop once dev F1 reaches this");
  cmd_train->add_option("--dev-fraction", tr.train.dev_fraction, "held-out fraction when no --dev");
  auto* clip_opt = cmd_train->add_option("--grad-clip", tr.train.grad_clip_norm, "global gradient norm clip");

  std::string eval_model, eval_data;
  CLI::App* cmd_eval = app.add_subcommand("eval", "score a checkpoint on a CoNLL corpus");
  cmd_eval->add_option("--model", eval_model, "checkpoint directory")->required();
  cmd_eval->add_option("--data", eval_data, "CoNLL corpus path")->required();

  std::string tag_model, tag_input, tag_out;
  CLI::App* cmd_tag = app.add_subcommand("tag", "tag plain text, one sentence per line");
  cmd_tag->add_option("--model", tag_model, "checkpoint directory")->required();
  cmd_tag->add_option("--input", tag_input, "plain-text input path")->required();
  cmd_tag->add_option("--out", tag_out, "output CoNLL path (default stdout)");

  std::string inspect_model, inspect_text;
  CLI::App* cmd_inspect = app.add_subcommand("inspect", "dump per-layer diagnostics for a sentence");
  cmd_inspect->add_option("--model", inspect_model, "checkpoint directory")->required();
  cmd_inspect->add_option("--text", inspect_text, "sentence to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (cmd_gen->parsed()) return run_gen(gen);
    if (cmd_train->parsed()) {
      tr.explicit_embed_dim = embed_dim_opt->count() > 0;
      tr.train.grad_clip = clip_opt->count() > 0;
      return run_train(std::move(tr));
    }
    if (cmd_eval->parsed()) return run_eval(eval_model, eval_data);
    if (cmd_tag->parsed()) return run_tag(tag_model, tag_input, tag_out);
    if (cmd_inspect->parsed()) return run_inspect(inspect_model, inspect_text);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
