#include "pbench/evaluate.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "pbench/parallel.hpp"
#include "pbench/rng.hpp"

namespace pbench::prime {

using bleu::BleuConfig;
using bleu::Tokens;
using model::Model;
using nlohmann::json;

double normalized_prob_from_logs(double lp_congruent, double lp_incongruent) {
  if (std::isinf(lp_congruent) && lp_congruent < 0 &&
      std::isinf(lp_incongruent) && lp_incongruent < 0) {
    throw ValueError("both target probabilities are zero");
  }
  // exp(lp_c - lse(lp_c, lp_i)) with the two-term log-sum-exp reduced so
  // equal log probabilities give exactly one half
  return 1.0 / (1.0 + std::exp(lp_incongruent - lp_congruent));
}

double normalized_prob_from_raw(double p_congruent, double p_incongruent) {
  if (p_congruent < 0 || p_incongruent < 0) {
    throw ValueError("probabilities must be non-negative");
  }
  double denom = p_congruent + p_incongruent;
  if (denom == 0.0) throw ValueError("both target probabilities are zero");
  return p_congruent / denom;
}

double normalized_target_prob(const Model& model, const VocabPair& vocabs,
                              const PrimingItem& item) {
  auto src = vocabs.src.encode_tokens(
      data::tokenize(item.prime_source, data::Side::Source));
  auto cong = vocabs.tgt.encode_tokens(
      data::tokenize(item.congruent_target, data::Side::Target));
  auto incong = vocabs.tgt.encode_tokens(
      data::tokenize(item.incongruent_target, data::Side::Target));
  double lp_c = model::sequence_log_prob(model, src, cong);
  double lp_i = model::sequence_log_prob(model, src, incong);
  return normalized_prob_from_logs(lp_c, lp_i);
}

std::vector<std::array<size_t, 2>> choose_donors(
    const std::vector<PrimingItem>& items, uint64_t seed) {
  Rng rng(seed);
  std::vector<std::array<size_t, 2>> donors(items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    std::vector<size_t> candidates;
    for (size_t j = 0; j < items.size(); ++j) {
      if (j == i) continue;
      if (items[j].structure != items[i].structure) continue;
      if (!keys_disjoint(items[j].lexicon_key, items[i].lexicon_key)) continue;
      candidates.push_back(j);
    }
    if (candidates.empty()) {
      throw ValueError("insufficient donors for item " + std::to_string(i) +
                       " (" + items[i].lexicon_key + ")");
    }
    donors[i][0] = candidates[rng.below(candidates.size())];
    donors[i][1] = candidates[rng.below(candidates.size())];
  }
  return donors;
}

namespace {

double proportion_score(double p_n) {
  if (p_n > 0.5) return 1.0;
  if (p_n == 0.5) return 0.5;
  return 0.0;
}

BleuConfig one_hot_config(int n, double smoothing) {
  BleuConfig cfg;
  cfg.max_n = n;
  cfg.weights.assign(static_cast<size_t>(n), 0.0);
  cfg.weights.back() = 1.0;
  cfg.smoothing_epsilon = smoothing;
  return cfg;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

ModelAggregates aggregate(const std::vector<PrimingItem>& items,
                          const std::vector<ItemEval>& evals, int max_n) {
  ModelAggregates agg;
  std::map<StructureLabel, int64_t> counts;
  for (size_t i = 0; i < items.size(); ++i) {
    StructureLabel s = items[i].structure;
    const ItemEval& e = evals[i];
    auto& cat = agg.category_means[s];
    for (int c = 0; c < 4; ++c) cat[static_cast<size_t>(c)] += e.category_bleu[static_cast<size_t>(c)];
    agg.priming_proportion[s] += proportion_score(e.p_n_congruent);
    agg.structural_accuracy[s] +=
        e.decoded_structure && *e.decoded_structure == s ? 1.0 : 0.0;
    auto& pn = agg.per_n[s];
    if (pn.correct.empty()) {
      pn.correct.assign(static_cast<size_t>(max_n), 0.0);
      pn.correct_smoothed.assign(static_cast<size_t>(max_n), 0.0);
      pn.incorrect.assign(static_cast<size_t>(max_n), 0.0);
      pn.incorrect_smoothed.assign(static_cast<size_t>(max_n), 0.0);
    }
    for (int n = 0; n < max_n; ++n) {
      pn.correct[static_cast<size_t>(n)] += e.per_n_correct[static_cast<size_t>(n)];
      pn.correct_smoothed[static_cast<size_t>(n)] +=
          e.per_n_correct_smoothed[static_cast<size_t>(n)];
      pn.incorrect[static_cast<size_t>(n)] += e.per_n_incorrect[static_cast<size_t>(n)];
      pn.incorrect_smoothed[static_cast<size_t>(n)] +=
          e.per_n_incorrect_smoothed[static_cast<size_t>(n)];
    }
    counts[s] += 1;
  }
  for (auto& [s, cat] : agg.category_means) {
    double k = static_cast<double>(counts[s]);
    for (auto& v : cat) v /= k;
    agg.priming_proportion[s] /= k;
    agg.structural_accuracy[s] /= k;
    auto& pn = agg.per_n[s];
    for (auto* curve : {&pn.correct, &pn.correct_smoothed, &pn.incorrect,
                        &pn.incorrect_smoothed}) {
      for (auto& v : *curve) v /= k;
    }
  }
  return agg;
}

}  // namespace

ModelEval evaluate_model(const Model& model, const VocabPair& vocabs,
                         const std::vector<PrimingItem>& items,
                         const EvalConfig& config) {
  auto donors = choose_donors(items, config.seed);
  std::vector<ItemEval> evals(items.size());
  const double smoothing =
      config.bleu.smoothing_epsilon > 0 ? config.bleu.smoothing_epsilon : 1e-9;
  parallel_for(items.size(), config.threads, [&](size_t i) {
    const PrimingItem& item = items[i];
    ItemEval e;
    auto src = vocabs.src.encode_tokens(
        data::tokenize(item.prime_source, data::Side::Source));
    auto decode = model::greedy_decode(model, src, config.max_decode_len);
    Tokens decoded = vocabs.tgt.decode_ids(decode.ids);
    e.decoded = join_tokens(decoded);
    e.decoded_structure = classify_structure(decoded);

    Tokens cong = data::tokenize(item.congruent_target, data::Side::Target);
    Tokens incong = data::tokenize(item.incongruent_target, data::Side::Target);
    Tokens donor_cong = data::tokenize(items[donors[i][0]].congruent_target,
                                       data::Side::Target);
    Tokens donor_incong = data::tokenize(items[donors[i][1]].incongruent_target,
                                         data::Side::Target);
    e.category_bleu[0] = bleu::bleu_score(decoded, cong, config.bleu);
    e.category_bleu[1] = bleu::bleu_score(decoded, incong, config.bleu);
    e.category_bleu[2] = bleu::bleu_score(decoded, donor_cong, config.bleu);
    e.category_bleu[3] = bleu::bleu_score(decoded, donor_incong, config.bleu);

    for (int n = 1; n <= config.bleu.max_n; ++n) {
      e.per_n_correct.push_back(
          bleu::bleu_score(decoded, cong, one_hot_config(n, 0.0)));
      e.per_n_correct_smoothed.push_back(
          bleu::bleu_score(decoded, cong, one_hot_config(n, smoothing)));
      e.per_n_incorrect.push_back(
          bleu::bleu_score(decoded, incong, one_hot_config(n, 0.0)));
      e.per_n_incorrect_smoothed.push_back(
          bleu::bleu_score(decoded, incong, one_hot_config(n, smoothing)));
    }

    e.log_prob_congruent = model::sequence_log_prob(
        model, src, vocabs.tgt.encode_tokens(cong));
    e.log_prob_incongruent = model::sequence_log_prob(
        model, src, vocabs.tgt.encode_tokens(incong));
    e.p_n_congruent =
        normalized_prob_from_logs(e.log_prob_congruent, e.log_prob_incongruent);
    evals[i] = std::move(e);
  });
  ModelEval result;
  result.aggregates = aggregate(items, evals, config.bleu.max_n);
  result.items = std::move(evals);
  return result;
}

std::map<StructureLabel, std::array<double, 4>> evaluate_reference_categories(
    const Model& model, const VocabPair& vocabs,
    const std::vector<PrimingItem>& items, const EvalConfig& config) {
  return evaluate_model(model, vocabs, items, config).aggregates.category_means;
}

PrimingReport priming_report(const Model& gru_model,
                             const Model& transformer_model,
                             const VocabPair& vocabs,
                             const std::vector<PrimingItem>& items,
                             const EvalConfig& config,
                             const ReportMetadata& metadata) {
  if (gru_model.hyper.kind != model::ModelKind::Gru ||
      transformer_model.hyper.kind != model::ModelKind::Transformer) {
    throw ValueError("priming_report needs one GRU and one transformer model");
  }
  ModelEval gru_eval = evaluate_model(gru_model, vocabs, items, config);
  ModelEval tf_eval = evaluate_model(transformer_model, vocabs, items, config);
  PrimingReport report;
  report.metadata = metadata;
  report.metadata.n_items = static_cast<int64_t>(items.size());
  report.metadata.bleu_max_n = config.bleu.max_n;
  report.metadata.bleu_smoothing = config.bleu.smoothing_epsilon;
  report.gru = gru_eval.aggregates;
  report.transformer = tf_eval.aggregates;
  for (const auto& [s, acc] : report.transformer.structural_accuracy) {
    report.gap_percentage_points[s] =
        100.0 * (acc - report.gru.structural_accuracy.at(s));
  }
  report.items.reserve(items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    ItemRow row;
    row.structure = items[i].structure;
    row.lexicon_key = items[i].lexicon_key;
    row.gru = gru_eval.items[i];
    row.transformer = tf_eval.items[i];
    report.items.push_back(std::move(row));
  }
  return report;
}

// --- serialization ---

namespace {

json curves_to_json(const PerNCurves& c) {
  return json{{"correct", c.correct},
              {"correct_smoothed", c.correct_smoothed},
              {"incorrect", c.incorrect},
              {"incorrect_smoothed", c.incorrect_smoothed}};
}

PerNCurves curves_from_json(const json& j) {
  PerNCurves c;
  c.correct = j.at("correct").get<std::vector<double>>();
  c.correct_smoothed = j.at("correct_smoothed").get<std::vector<double>>();
  c.incorrect = j.at("incorrect").get<std::vector<double>>();
  c.incorrect_smoothed = j.at("incorrect_smoothed").get<std::vector<double>>();
  return c;
}

json aggregates_to_json(const ModelAggregates& a) {
  json cat = json::object();
  json prop = json::object();
  json acc = json::object();
  json per_n = json::object();
  for (const auto& [s, v] : a.category_means) cat[to_string(s)] = v;
  for (const auto& [s, v] : a.priming_proportion) prop[to_string(s)] = v;
  for (const auto& [s, v] : a.structural_accuracy) acc[to_string(s)] = v;
  for (const auto& [s, v] : a.per_n) per_n[to_string(s)] = curves_to_json(v);
  return json{{"category_bleu_means", cat},
              {"priming_proportion", prop},
              {"structural_accuracy", acc},
              {"per_n_bleu", per_n}};
}

ModelAggregates aggregates_from_json(const json& j) {
  ModelAggregates a;
  for (const auto& [key, value] : j.at("category_bleu_means").items()) {
    auto s = structure_from_string(key);
    if (!s) throw FormatError("unknown structure '" + key + "' in report");
    a.category_means[*s] = value.get<std::array<double, 4>>();
  }
  for (const auto& [key, value] : j.at("priming_proportion").items()) {
    a.priming_proportion[*structure_from_string(key)] = value.get<double>();
  }
  for (const auto& [key, value] : j.at("structural_accuracy").items()) {
    a.structural_accuracy[*structure_from_string(key)] = value.get<double>();
  }
  for (const auto& [key, value] : j.at("per_n_bleu").items()) {
    a.per_n[*structure_from_string(key)] = curves_from_json(value);
  }
  return a;
}

json item_eval_to_json(const ItemEval& e) {
  return json{
      {"decoded", e.decoded},
      {"decoded_structure",
       e.decoded_structure ? to_string(*e.decoded_structure) : "Unknown"},
      {"category_bleu", e.category_bleu},
      {"p_n_congruent", e.p_n_congruent},
      {"log_prob_congruent", e.log_prob_congruent},
      {"log_prob_incongruent", e.log_prob_incongruent},
      {"per_n_correct", e.per_n_correct},
      {"per_n_correct_smoothed", e.per_n_correct_smoothed},
      {"per_n_incorrect", e.per_n_incorrect},
      {"per_n_incorrect_smoothed", e.per_n_incorrect_smoothed},
  };
}

ItemEval item_eval_from_json(const json& j) {
  ItemEval e;
  e.decoded = j.at("decoded").get<std::string>();
  std::string ds = j.at("decoded_structure").get<std::string>();
  e.decoded_structure = structure_from_string(ds);  // "Unknown" -> nullopt
  e.category_bleu = j.at("category_bleu").get<std::array<double, 4>>();
  e.p_n_congruent = j.at("p_n_congruent").get<double>();
  e.log_prob_congruent = j.at("log_prob_congruent").get<double>();
  e.log_prob_incongruent = j.at("log_prob_incongruent").get<double>();
  e.per_n_correct = j.at("per_n_correct").get<std::vector<double>>();
  e.per_n_correct_smoothed =
      j.at("per_n_correct_smoothed").get<std::vector<double>>();
  e.per_n_incorrect = j.at("per_n_incorrect").get<std::vector<double>>();
  e.per_n_incorrect_smoothed =
      j.at("per_n_incorrect_smoothed").get<std::vector<double>>();
  return e;
}

}  // namespace

void save_report_json(const PrimingReport& report, const std::string& path) {
  json items = json::array();
  for (size_t i = 0; i < report.items.size(); ++i) {
    const ItemRow& row = report.items[i];
    items.push_back(json{{"index", i},
                         {"structure", to_string(row.structure)},
                         {"lexicon_key", row.lexicon_key},
                         {"gru", item_eval_to_json(row.gru)},
                         {"transformer", item_eval_to_json(row.transformer)}});
  }
  json gaps = json::object();
  for (const auto& [s, v] : report.gap_percentage_points) {
    gaps[to_string(s)] = v;
  }
  json j{
      {"format_version", 1},
      {"metadata",
       {{"seed", report.metadata.seed},
        {"config_hash", report.metadata.config_hash},
        {"gru_checksum", report.metadata.gru_checksum},
        {"transformer_checksum", report.metadata.transformer_checksum},
        {"n_items", report.metadata.n_items},
        {"bleu_max_n", report.metadata.bleu_max_n},
        {"bleu_smoothing", report.metadata.bleu_smoothing}}},
      {"models",
       {{"gru", aggregates_to_json(report.gru)},
        {"transformer", aggregates_to_json(report.transformer)}}},
      {"gap_percentage_points", gaps},
      {"items", items},
  };
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("short write on report: " + path);
}

PrimingReport load_report_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open report: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("bad report JSON: " + std::string(e.what()));
  }
  try {
    PrimingReport report;
    const json& meta = j.at("metadata");
    report.metadata.seed = meta.at("seed").get<uint64_t>();
    report.metadata.config_hash = meta.at("config_hash").get<std::string>();
    report.metadata.gru_checksum = meta.at("gru_checksum").get<std::string>();
    report.metadata.transformer_checksum =
        meta.at("transformer_checksum").get<std::string>();
    report.metadata.n_items = meta.at("n_items").get<int64_t>();
    report.metadata.bleu_max_n = meta.at("bleu_max_n").get<int>();
    report.metadata.bleu_smoothing = meta.at("bleu_smoothing").get<double>();
    report.gru = aggregates_from_json(j.at("models").at("gru"));
    report.transformer = aggregates_from_json(j.at("models").at("transformer"));
    for (const auto& [key, value] : j.at("gap_percentage_points").items()) {
      auto s = structure_from_string(key);
      if (!s) throw FormatError("unknown structure '" + key + "' in report");
      report.gap_percentage_points[*s] = value.get<double>();
    }
    for (const auto& item : j.at("items")) {
      ItemRow row;
      auto s = structure_from_string(item.at("structure").get<std::string>());
      if (!s) throw FormatError("unknown structure in report item");
      row.structure = *s;
      row.lexicon_key = item.at("lexicon_key").get<std::string>();
      row.gru = item_eval_from_json(item.at("gru"));
      row.transformer = item_eval_from_json(item.at("transformer"));
      report.items.push_back(std::move(row));
    }
    return report;
  } catch (const json::exception& e) {
    throw FormatError("malformed report: " + std::string(e.what()));
  }
}

void save_report_csv(const PrimingReport& report, const std::string& path,
                     const std::string& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write CSV: " + path);
  if (!meta.empty()) out << "# " << meta << "\n";
  out << "index,structure,lexicon_key";
  for (const char* m : {"gru", "transformer"}) {
    out << ',' << m << "_p_n_congruent";
    for (int c = 1; c <= 4; ++c) out << ',' << m << "_bleu_cat" << c;
    out << ',' << m << "_decoded_structure," << m << "_decoded";
  }
  out << "\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (size_t i = 0; i < report.items.size(); ++i) {
    const ItemRow& row = report.items[i];
    out << i << ',' << to_string(row.structure) << ',' << row.lexicon_key;
    for (const ItemEval* e : {&row.gru, &row.transformer}) {
      out << ',' << num(e->p_n_congruent);
      for (double b : e->category_bleu) out << ',' << num(b);
      out << ','
          << (e->decoded_structure ? to_string(*e->decoded_structure)
                                   : "Unknown")
          << ',' << e->decoded;
    }
    out << "\n";
  }
  if (!out) throw IoError("short write on CSV: " + path);
}

}  // namespace pbench::prime
