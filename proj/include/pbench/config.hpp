#pragma once

#include <cstdint>
#include <string>

#include "pbench/bleu.hpp"
#include "pbench/models.hpp"

namespace pbench::cli {

struct Paths {
  std::string corpus = "corpus.tsv";
  std::string test_set = "test_set.jsonl";
  std::string vocab_src = "vocab_src.txt";
  std::string vocab_tgt = "vocab_tgt.txt";
  std::string gru_checkpoint = "gru.ckpt";
  std::string transformer_checkpoint = "transformer.ckpt";
  std::string gru_train_log = "train_gru.tsv";
  std::string transformer_train_log = "train_transformer.tsv";
  std::string report_json = "report.json";
  std::string report_csv = "report.csv";
  std::string per_n_csv = "per_n_bleu.csv";
  std::string chart_svg = "priming_chart.svg";

  bool operator==(const Paths&) const = default;
};

// Effective configuration of one pipeline run. Every artifact a command
// writes embeds the seed and the hash of this structure.
struct RunConfig {
  uint64_t seed = 42;
  std::string out_dir = "out";
  int64_t corpus_n_per_structure = 500;
  int64_t test_n_per_structure = 30;
  int64_t min_count = 1;
  int64_t max_len = 32;
  int64_t epochs = 30;
  int64_t batch_size = 32;
  double learning_rate = 1e-3;
  model::GruHyper gru;
  model::TransformerHyper transformer;
  bleu::BleuConfig bleu;
  Paths paths;

  bool operator==(const RunConfig&) const = default;

  std::string to_json_text() const;
  static RunConfig from_json_text(const std::string& text);
  static RunConfig load_file(const std::string& path);

  uint64_t config_hash() const;
  std::string hash_hex() const;
  // "seed=<seed> config_hash=<hex>", the provenance line for artifacts
  std::string meta_comment() const;
  // out_dir / name
  std::string resolve(const std::string& name) const;

  void validate() const;  // throws ConfigError
};

}  // namespace pbench::cli
