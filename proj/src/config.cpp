#include "pbench/config.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "pbench/optim.hpp"

namespace pbench::cli {

using nlohmann::json;

namespace {

constexpr const char* kKnownKeys[] = {
    "seed",       "out_dir",  "corpus", "test_set", "train",
    "model",      "bleu",     "paths",  "max_len",  "min_count",
    "_config_hash",
};

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

json paths_to_json(const Paths& p) {
  return json{{"corpus", p.corpus},
              {"test_set", p.test_set},
              {"vocab_src", p.vocab_src},
              {"vocab_tgt", p.vocab_tgt},
              {"gru_checkpoint", p.gru_checkpoint},
              {"transformer_checkpoint", p.transformer_checkpoint},
              {"gru_train_log", p.gru_train_log},
              {"transformer_train_log", p.transformer_train_log},
              {"report_json", p.report_json},
              {"report_csv", p.report_csv},
              {"per_n_csv", p.per_n_csv},
              {"chart_svg", p.chart_svg}};
}

json config_to_json(const RunConfig& c) {
  return json{
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"corpus",
       {{"n_per_structure", c.corpus_n_per_structure},
        {"min_count", c.min_count}}},
      {"test_set", {{"n_per_structure", c.test_n_per_structure}}},
      {"max_len", c.max_len},
      {"train",
       {{"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"learning_rate", c.learning_rate}}},
      {"model",
       {{"gru", {{"embed", c.gru.embed}, {"hidden", c.gru.hidden}}},
        {"transformer",
         {{"d_model", c.transformer.d_model},
          {"n_heads", c.transformer.n_heads},
          {"n_layers", c.transformer.n_layers},
          {"d_ff", c.transformer.d_ff}}}}},
      {"bleu",
       {{"max_n", c.bleu.max_n},
        {"smoothing_epsilon", c.bleu.smoothing_epsilon}}},
      {"paths", paths_to_json(c.paths)},
  };
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : kKnownKeys) known = known || key == k;
    if (!known) throw ConfigError("unknown configuration key '" + key + "'");
  }
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.max_len = j.value("max_len", c.max_len);
    c.min_count = j.value("min_count", c.min_count);
    if (j.contains("corpus")) {
      const json& corpus = j.at("corpus");
      c.corpus_n_per_structure =
          corpus.value("n_per_structure", c.corpus_n_per_structure);
      c.min_count = corpus.value("min_count", c.min_count);
    }
    if (j.contains("test_set")) {
      c.test_n_per_structure =
          j.at("test_set").value("n_per_structure", c.test_n_per_structure);
    }
    if (j.contains("train")) {
      const json& train = j.at("train");
      c.epochs = train.value("epochs", c.epochs);
      c.batch_size = train.value("batch_size", c.batch_size);
      c.learning_rate = train.value("learning_rate", c.learning_rate);
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      if (m.contains("gru")) {
        c.gru.embed = m.at("gru").value("embed", c.gru.embed);
        c.gru.hidden = m.at("gru").value("hidden", c.gru.hidden);
      }
      if (m.contains("transformer")) {
        const json& t = m.at("transformer");
        c.transformer.d_model = t.value("d_model", c.transformer.d_model);
        c.transformer.n_heads = t.value("n_heads", c.transformer.n_heads);
        c.transformer.n_layers = t.value("n_layers", c.transformer.n_layers);
        c.transformer.d_ff = t.value("d_ff", c.transformer.d_ff);
      }
    }
    if (j.contains("bleu")) {
      const json& b = j.at("bleu");
      c.bleu.max_n = b.value("max_n", c.bleu.max_n);
      c.bleu.smoothing_epsilon =
          b.value("smoothing_epsilon", c.bleu.smoothing_epsilon);
    }
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      c.paths.corpus = p.value("corpus", c.paths.corpus);
      c.paths.test_set = p.value("test_set", c.paths.test_set);
      c.paths.vocab_src = p.value("vocab_src", c.paths.vocab_src);
      c.paths.vocab_tgt = p.value("vocab_tgt", c.paths.vocab_tgt);
      c.paths.gru_checkpoint =
          p.value("gru_checkpoint", c.paths.gru_checkpoint);
      c.paths.transformer_checkpoint =
          p.value("transformer_checkpoint", c.paths.transformer_checkpoint);
      c.paths.gru_train_log = p.value("gru_train_log", c.paths.gru_train_log);
      c.paths.transformer_train_log =
          p.value("transformer_train_log", c.paths.transformer_train_log);
      c.paths.report_json = p.value("report_json", c.paths.report_json);
      c.paths.report_csv = p.value("report_csv", c.paths.report_csv);
      c.paths.per_n_csv = p.value("per_n_csv", c.paths.per_n_csv);
      c.paths.chart_svg = p.value("chart_svg", c.paths.chart_svg);
    }
  } catch (const json::exception& e) {
    throw ConfigError("bad configuration value: " + std::string(e.what()));
  }
  c.validate();
  return c;
}

}  // namespace

std::string RunConfig::to_json_text() const {
  return config_to_json(*this).dump(2);
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("configuration is not valid JSON: " +
                      std::string(e.what()));
  }
  return config_from_json(j);
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

uint64_t RunConfig::config_hash() const {
  std::string canonical = config_to_json(*this).dump();
  return ad::fnv1a(canonical.data(), canonical.size());
}

std::string RunConfig::hash_hex() const { return hex64(config_hash()); }

std::string RunConfig::meta_comment() const {
  return "seed=" + std::to_string(seed) + " config_hash=" + hash_hex();
}

std::string RunConfig::resolve(const std::string& name) const {
  return (std::filesystem::path(out_dir) / name).string();
}

void RunConfig::validate() const {
  if (corpus_n_per_structure < 1) {
    throw ConfigError("corpus.n_per_structure must be >= 1");
  }
  if (test_n_per_structure < 1) {
    throw ConfigError("test_set.n_per_structure must be >= 1");
  }
  if (max_len < 2) throw ConfigError("max_len must be >= 2");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate >= 0)) throw ConfigError("train.learning_rate must be >= 0");
  if (bleu.max_n < 1) throw ConfigError("bleu.max_n must be >= 1");
  if (bleu.smoothing_epsilon < 0) {
    throw ConfigError("bleu.smoothing_epsilon must be >= 0");
  }
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

}  // namespace pbench::cli
