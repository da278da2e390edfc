#include "pbench/commands.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "pbench/priming.hpp"
#include "pbench/rng.hpp"

namespace pbench::cli {

namespace fs = std::filesystem;
using data::ParallelPair;
using model::Model;
using model::ModelKind;

namespace {

void write_config_dump(const RunConfig& config, const std::string& name) {
  std::ofstream out(config.resolve(name), std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write config dump: " + config.resolve(name));
  // the frozen dump carries the hash of the hashed (hash-free) form
  nlohmann::json j = nlohmann::json::parse(config.to_json_text());
  j["_config_hash"] = config.hash_hex();
  out << j.dump(2) << "\n";
}

void ensure_out_dir(const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + config.out_dir);
}

model::ModelHyper hyper_for(const RunConfig& config, ModelKind kind,
                            int64_t src_vocab, int64_t tgt_vocab) {
  model::ModelHyper h;
  h.kind = kind;
  h.src_vocab = src_vocab;
  h.tgt_vocab = tgt_vocab;
  h.max_len = config.max_len;
  h.gru = config.gru;
  h.tf = config.transformer;
  return h;
}

const std::string& checkpoint_name(const RunConfig& config, ModelKind kind) {
  return kind == ModelKind::Gru ? config.paths.gru_checkpoint
                                : config.paths.transformer_checkpoint;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

int effective_threads() {
  const char* env = std::getenv("PRIMING_BENCH_THREADS");
  if (env && *env) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == nullptr || *end != '\0' || v < 1) {
      throw ConfigError("PRIMING_BENCH_THREADS must be a positive integer");
    }
    return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw, 1u, 8u));
}

int run_generate(const RunConfig& config) {
  ensure_out_dir(config);
  auto corpus = prime::generate_parallel_corpus(config.seed,
                                                config.corpus_n_per_structure);
  data::save_corpus(corpus, config.resolve(config.paths.corpus),
                    config.meta_comment());
  auto items =
      prime::generate_test_set(config.seed, config.test_n_per_structure);
  prime::save_test_set(items, config.resolve(config.paths.test_set),
                       config.meta_comment());
  write_config_dump(config, "config_generate.json");

  std::map<StructureLabel, int64_t> corpus_counts, item_counts;
  for (const auto& p : corpus) corpus_counts[*p.structure]++;
  for (const auto& item : items) item_counts[item.structure]++;
  std::printf("corpus: %zu pairs -> %s\n", corpus.size(),
              config.resolve(config.paths.corpus).c_str());
  for (auto s : kAllStructures) {
    std::printf("  %-8s %lld\n", to_string(s),
                static_cast<long long>(corpus_counts[s]));
  }
  std::printf("test set: %zu items -> %s\n", items.size(),
              config.resolve(config.paths.test_set).c_str());
  for (auto s : kAllStructures) {
    std::printf("  %-8s %lld\n", to_string(s),
                static_cast<long long>(item_counts[s]));
  }
  return 0;
}

int run_train(const RunConfig& config, ModelKind kind) {
  ensure_out_dir(config);
  auto corpus = data::load_corpus(config.resolve(config.paths.corpus));
  if (corpus.empty()) {
    throw FormatError("corpus is empty: " + config.resolve(config.paths.corpus));
  }
  auto src_vocab =
      data::build_vocabulary(corpus, data::Side::Source, config.min_count);
  auto tgt_vocab =
      data::build_vocabulary(corpus, data::Side::Target, config.min_count);
  data::save_vocabulary(src_vocab, config.resolve(config.paths.vocab_src),
                        config.meta_comment());
  data::save_vocabulary(tgt_vocab, config.resolve(config.paths.vocab_tgt),
                        config.meta_comment());

  Model model = model::init_model(
      hyper_for(config, kind, src_vocab.size(), tgt_vocab.size()), config.seed);
  ad::AdamState adam;
  adam.learning_rate = config.learning_rate;

  const std::string log_path =
      config.resolve(kind == ModelKind::Gru
                         ? config.paths.gru_train_log
                         : config.paths.transformer_train_log);
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw IoError("cannot write training log: " + log_path);
  log << "# " << config.meta_comment() << " model=" << to_string(kind) << "\n";

  // one RNG stream drives the per-epoch shuffles
  Rng order_rng(config.seed);
  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order);
    std::vector<data::Batch> batches;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.batch_size)) {
      size_t stop = std::min(order.size(),
                             start + static_cast<size_t>(config.batch_size));
      std::vector<ParallelPair> chunk;
      chunk.reserve(stop - start);
      for (size_t i = start; i < stop; ++i) chunk.push_back(corpus[order[i]]);
      batches.push_back(data::make_batch(chunk, src_vocab, tgt_vocab));
    }
    double loss = model::train_epoch(model, batches, adam);
    if (!std::isfinite(loss)) {
      throw Error("training diverged: non-finite loss " + format_double(loss) +
                  " at epoch " + std::to_string(epoch + 1));
    }
    log << (epoch + 1) << '\t' << format_double(loss) << '\n';
    std::printf("epoch %lld/%lld loss %.6f\n",
                static_cast<long long>(epoch + 1),
                static_cast<long long>(config.epochs), loss);
  }
  log.flush();
  if (!log) throw IoError("short write on training log: " + log_path);

  const std::string ckpt = config.resolve(checkpoint_name(config, kind));
  model::save_model(model, ckpt, config.seed, config.config_hash());
  write_config_dump(config, std::string("config_train_") + to_string(kind) +
                                ".json");
  std::printf("checkpoint -> %s\n", ckpt.c_str());
  return 0;
}

int run_eval(const RunConfig& config) {
  ensure_out_dir(config);
  auto items = prime::load_test_set(config.resolve(config.paths.test_set));
  if (items.empty()) {
    throw FormatError("test set is empty: " +
                      config.resolve(config.paths.test_set));
  }
  prime::VocabPair vocabs{
      data::load_vocabulary(config.resolve(config.paths.vocab_src)),
      data::load_vocabulary(config.resolve(config.paths.vocab_tgt))};

  const std::string gru_ckpt = config.resolve(config.paths.gru_checkpoint);
  const std::string tf_ckpt =
      config.resolve(config.paths.transformer_checkpoint);
  Model gru = model::load_model(
      gru_ckpt, hyper_for(config, ModelKind::Gru, vocabs.src.size(),
                          vocabs.tgt.size()));
  Model tf = model::load_model(
      tf_ckpt, hyper_for(config, ModelKind::Transformer, vocabs.src.size(),
                         vocabs.tgt.size()));

  prime::EvalConfig eval_config;
  eval_config.bleu = config.bleu;
  eval_config.seed = config.seed;
  eval_config.threads = effective_threads();
  eval_config.max_decode_len = config.max_len;

  prime::ReportMetadata metadata;
  metadata.seed = config.seed;
  metadata.config_hash = config.hash_hex();
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(ad::file_checksum(gru_ckpt)));
  metadata.gru_checksum = hex;
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(ad::file_checksum(tf_ckpt)));
  metadata.transformer_checksum = hex;

  prime::PrimingReport report =
      prime::priming_report(gru, tf, vocabs, items, eval_config, metadata);
  prime::save_report_json(report, config.resolve(config.paths.report_json));
  prime::save_report_csv(report, config.resolve(config.paths.report_csv),
                         config.meta_comment());
  write_config_dump(config, "config_eval.json");
  std::printf("report -> %s\n", config.resolve(config.paths.report_json).c_str());
  std::printf("per-item CSV -> %s\n",
              config.resolve(config.paths.report_csv).c_str());
  return 0;
}

std::string render_report_table(const prime::PrimingReport& report) {
  std::ostringstream os;
  char line[256];
  os << "structure   | model        cat1    cat2    cat3    cat4    "
        "proportion  accuracy | gap(pp)\n";
  os << "------------+----------------------------------------------------"
        "---------------+--------\n";
  for (auto s : kAllStructures) {
    if (!report.gru.category_means.count(s)) continue;
    const auto& g = report.gru;
    const auto& t = report.transformer;
    std::snprintf(line, sizeof(line),
                  "%-11s | gru         %6.4f  %6.4f  %6.4f  %6.4f  %10.4f  "
                  "%8.4f | %+7.2f\n",
                  to_string(s), g.category_means.at(s)[0],
                  g.category_means.at(s)[1], g.category_means.at(s)[2],
                  g.category_means.at(s)[3], g.priming_proportion.at(s),
                  g.structural_accuracy.at(s),
                  report.gap_percentage_points.at(s));
    os << line;
    std::snprintf(line, sizeof(line),
                  "%-11s | transformer %6.4f  %6.4f  %6.4f  %6.4f  %10.4f  "
                  "%8.4f |\n",
                  "", t.category_means.at(s)[0], t.category_means.at(s)[1],
                  t.category_means.at(s)[2], t.category_means.at(s)[3],
                  t.priming_proportion.at(s), t.structural_accuracy.at(s));
    os << line;
  }
  os << "gap (transformer - gru, percentage points):";
  for (auto s : kAllStructures) {
    if (!report.gap_percentage_points.count(s)) continue;
    std::snprintf(line, sizeof(line), " %s %+.2f", to_string(s),
                  report.gap_percentage_points.at(s));
    os << line;
  }
  os << "\n";
  return os.str();
}

void write_per_n_csv(const prime::PrimingReport& report,
                     const std::string& path, const std::string& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write per-n CSV: " + path);
  if (!meta.empty()) out << "# " << meta << "\n";
  out << "model,structure,reference,n,bleu,bleu_smoothed\n";
  auto emit = [&](const char* name, const prime::ModelAggregates& agg) {
    for (auto s : kAllStructures) {
      auto it = agg.per_n.find(s);
      if (it == agg.per_n.end()) continue;
      const auto& c = it->second;
      for (size_t n = 0; n < c.correct.size(); ++n) {
        out << name << ',' << to_string(s) << ",correct," << (n + 1) << ','
            << format_double(c.correct[n]) << ','
            << format_double(c.correct_smoothed[n]) << "\n";
      }
      for (size_t n = 0; n < c.incorrect.size(); ++n) {
        out << name << ',' << to_string(s) << ",incorrect," << (n + 1) << ','
            << format_double(c.incorrect[n]) << ','
            << format_double(c.incorrect_smoothed[n]) << "\n";
      }
    }
  };
  emit("gru", report.gru);
  emit("transformer", report.transformer);
  if (!out) throw IoError("short write on per-n CSV: " + path);
}

void write_chart_svg(const prime::PrimingReport& report,
                     const std::string& path, const std::string& meta) {
  // grouped bars of the per-structure priming proportion, no dependencies
  const int width = 640;
  const int height = 400;
  const int base_y = 340;
  const int plot_h = 280;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\">\n";
  if (!meta.empty()) os << "<!-- " << meta << " -->\n";
  os << "<text x=\"20\" y=\"30\" font-family=\"sans-serif\" font-size=\"16\">"
        "Congruent-preference proportion by structure</text>\n";
  os << "<line x1=\"50\" y1=\"" << base_y << "\" x2=\"" << (width - 20)
     << "\" y2=\"" << base_y << "\" stroke=\"black\"/>\n";
  // 0.5 guide line
  int half_y = base_y - plot_h / 2;
  os << "<line x1=\"50\" y1=\"" << half_y << "\" x2=\"" << (width - 20)
     << "\" y2=\"" << half_y
     << "\" stroke=\"#999\" stroke-dasharray=\"4,4\"/>\n";
  os << "<text x=\"8\" y=\"" << (half_y + 5)
     << "\" font-family=\"sans-serif\" font-size=\"12\">0.5</text>\n";
  int group = 0;
  char buf[160];
  for (auto s : kAllStructures) {
    if (!report.gru.priming_proportion.count(s)) continue;
    int x0 = 70 + group * 140;
    double g = report.gru.priming_proportion.at(s);
    double t = report.transformer.priming_proportion.at(s);
    int gh = static_cast<int>(std::lround(g * plot_h));
    int th = static_cast<int>(std::lround(t * plot_h));
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%d\" y=\"%d\" width=\"40\" height=\"%d\" "
                  "fill=\"#4878a8\"/>\n",
                  x0, base_y - gh, gh);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%d\" y=\"%d\" width=\"40\" height=\"%d\" "
                  "fill=\"#b85c3c\"/>\n",
                  x0 + 48, base_y - th, th);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" "
                  "font-size=\"13\">%s</text>\n",
                  x0 + 10, base_y + 20, to_string(s));
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" "
                  "font-size=\"10\">%.3f</text>\n",
                  x0, base_y - gh - 4, g);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" "
                  "font-size=\"10\">%.3f</text>\n",
                  x0 + 48, base_y - th - 4, t);
    os << buf;
    ++group;
  }
  os << "<rect x=\"480\" y=\"50\" width=\"14\" height=\"14\" fill=\"#4878a8\"/>"
        "<text x=\"500\" y=\"62\" font-family=\"sans-serif\" font-size=\"12\">"
        "gru</text>\n";
  os << "<rect x=\"480\" y=\"70\" width=\"14\" height=\"14\" fill=\"#b85c3c\"/>"
        "<text x=\"500\" y=\"82\" font-family=\"sans-serif\" font-size=\"12\">"
        "transformer</text>\n";
  os << "</svg>\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write chart: " + path);
  out << os.str();
  if (!out) throw IoError("short write on chart: " + path);
}

int run_report(const RunConfig& config) {
  ensure_out_dir(config);
  prime::PrimingReport report =
      prime::load_report_json(config.resolve(config.paths.report_json));
  std::string table = render_report_table(report);
  std::fputs(table.c_str(), stdout);
  write_per_n_csv(report, config.resolve(config.paths.per_n_csv),
                  config.meta_comment());
  write_chart_svg(report, config.resolve(config.paths.chart_svg),
                  config.meta_comment());
  write_config_dump(config, "config_report.json");
  std::printf("per-n CSV -> %s\n", config.resolve(config.paths.per_n_csv).c_str());
  std::printf("chart -> %s\n", config.resolve(config.paths.chart_svg).c_str());
  return 0;
}

}  // namespace pbench::cli
