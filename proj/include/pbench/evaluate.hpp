#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pbench/bleu.hpp"
#include "pbench/models.hpp"
#include "pbench/priming.hpp"

namespace pbench::prime {

struct VocabPair {
  data::Vocabulary src;
  data::Vocabulary tgt;
};

struct EvalConfig {
  bleu::BleuConfig bleu;
  uint64_t seed = 0;  // donor sampling for reference categories 3 and 4
  int threads = 1;
  int64_t max_decode_len = 32;
};

// Reference categories, indexed 0..3:
//   [0] congruent target (same content, same structure)
//   [1] incongruent target (same content, alternate structure)
//   [2] donor congruent target (different content, same structure)
//   [3] donor incongruent target (different content, different structure)
struct ItemEval {
  std::string decoded;  // space-joined greedy decode
  std::optional<StructureLabel> decoded_structure;
  std::array<double, 4> category_bleu{0, 0, 0, 0};
  double p_n_congruent = 0.0;
  double log_prob_congruent = 0.0;
  double log_prob_incongruent = 0.0;
  std::vector<double> per_n_correct;            // one-hot weight at n, no smoothing
  std::vector<double> per_n_correct_smoothed;   // same with epsilon smoothing
  std::vector<double> per_n_incorrect;
  std::vector<double> per_n_incorrect_smoothed;

  bool operator==(const ItemEval&) const = default;
};

struct PerNCurves {
  std::vector<double> correct, correct_smoothed;
  std::vector<double> incorrect, incorrect_smoothed;

  bool operator==(const PerNCurves&) const = default;
};

struct ModelAggregates {
  std::map<StructureLabel, std::array<double, 4>> category_means;
  std::map<StructureLabel, double> priming_proportion;
  std::map<StructureLabel, double> structural_accuracy;
  std::map<StructureLabel, PerNCurves> per_n;

  bool operator==(const ModelAggregates&) const = default;
};

struct ModelEval {
  std::vector<ItemEval> items;
  ModelAggregates aggregates;
};

// Log-space normalized preference for the congruent target:
// exp(lp_c) / (exp(lp_c) + exp(lp_i)) computed via log-sum-exp. The
// incongruent probability is 1 minus this by construction.
double normalized_prob_from_logs(double lp_congruent, double lp_incongruent);
// Raw-probability form of the same ratio (used to check scale invariance).
double normalized_prob_from_raw(double p_congruent, double p_incongruent);

double normalized_target_prob(const model::Model& model,
                              const VocabPair& vocabs, const PrimingItem& item);

// Deterministic donor picks per item: (category-3 donor, category-4 donor),
// sampled with `seed` from same-structure items with disjoint lexicon keys.
// Raises ValueError when an item has no eligible donor.
std::vector<std::array<size_t, 2>> choose_donors(
    const std::vector<PrimingItem>& items, uint64_t seed);

ModelEval evaluate_model(const model::Model& model, const VocabPair& vocabs,
                         const std::vector<PrimingItem>& items,
                         const EvalConfig& config);

// Per-structure mean BLEU against the four reference categories.
std::map<StructureLabel, std::array<double, 4>> evaluate_reference_categories(
    const model::Model& model, const VocabPair& vocabs,
    const std::vector<PrimingItem>& items, const EvalConfig& config);

struct ReportMetadata {
  uint64_t seed = 0;
  std::string config_hash;
  std::string gru_checksum;
  std::string transformer_checksum;
  int64_t n_items = 0;
  int bleu_max_n = 4;
  double bleu_smoothing = 0.0;

  bool operator==(const ReportMetadata&) const = default;
};

struct ItemRow {
  StructureLabel structure = StructureLabel::Active;
  std::string lexicon_key;
  ItemEval gru;
  ItemEval transformer;
};

struct PrimingReport {
  ReportMetadata metadata;
  ModelAggregates gru;
  ModelAggregates transformer;
  // (transformer accuracy - gru accuracy) in percentage points
  std::map<StructureLabel, double> gap_percentage_points;
  std::vector<ItemRow> items;
};

PrimingReport priming_report(const model::Model& gru_model,
                             const model::Model& transformer_model,
                             const VocabPair& vocabs,
                             const std::vector<PrimingItem>& items,
                             const EvalConfig& config,
                             const ReportMetadata& metadata);

void save_report_json(const PrimingReport& report, const std::string& path);
PrimingReport load_report_json(const std::string& path);
void save_report_csv(const PrimingReport& report, const std::string& path,
                     const std::string& meta = "");

}  // namespace pbench::prime
