#include "pbench/bleu.hpp"

#include <cmath>
#include <unordered_map>

namespace pbench::bleu {

std::vector<double> BleuConfig::effective_weights() const {
  if (max_n < 1) throw ValueError("max_n must be >= 1");
  if (weights.empty()) {
    return std::vector<double>(static_cast<size_t>(max_n), 1.0 / max_n);
  }
  if (static_cast<int>(weights.size()) != max_n) {
    throw ValueError("expected " + std::to_string(max_n) + " weights, got " +
                     std::to_string(weights.size()));
  }
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (std::fabs(sum - 1.0) > 1e-12) {
    throw ValueError("BLEU weights must sum to 1");
  }
  return weights;
}

namespace {

// n-grams keyed by their tokens joined with an unlikely separator
std::unordered_map<std::string, int64_t> ngram_counts(const Tokens& tokens,
                                                      int n) {
  std::unordered_map<std::string, int64_t> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      if (j) key.push_back('\x1f');
      key += tokens[i + j];
    }
    counts[key] += 1;
  }
  return counts;
}

}  // namespace

std::pair<int64_t, int64_t> clipped_ngram_precision(const Tokens& candidate,
                                                    const Tokens& reference,
                                                    int n) {
  if (n < 1) throw ValueError("n-gram order must be >= 1");
  int64_t total = static_cast<int64_t>(candidate.size()) - n + 1;
  if (total < 0) total = 0;
  if (total == 0) return {0, 0};
  auto cand = ngram_counts(candidate, n);
  auto ref = ngram_counts(reference, n);
  int64_t matched = 0;
  for (const auto& [gram, count] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) matched += std::min(count, it->second);
  }
  return {matched, total};
}

double brevity_penalty(int64_t candidate_len, int64_t reference_len) {
  if (candidate_len < 0 || reference_len < 0) {
    throw ValueError("lengths must be non-negative");
  }
  if (candidate_len == 0) return 0.0;
  if (candidate_len >= reference_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(reference_len) /
                            static_cast<double>(candidate_len));
}

double bleu_score(const Tokens& candidate, const Tokens& reference,
                  const BleuConfig& config) {
  auto weights = config.effective_weights();
  double bp = brevity_penalty(static_cast<int64_t>(candidate.size()),
                              static_cast<int64_t>(reference.size()));
  if (bp == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= config.max_n; ++n) {
    auto [matched, total] = clipped_ngram_precision(candidate, reference, n);
    double p;
    if (total > 0 && matched > 0) {
      p = static_cast<double>(matched) / static_cast<double>(total);
    } else if (config.smoothing_epsilon > 0.0) {
      p = total > 0 ? config.smoothing_epsilon / static_cast<double>(total)
                    : config.smoothing_epsilon;
    } else {
      return 0.0;
    }
    log_sum += weights[static_cast<size_t>(n - 1)] * std::log(p);
  }
  return bp * std::exp(log_sum);
}

double bleu_difference(const Tokens& prediction, const Tokens& correct_ref,
                       const Tokens& incorrect_ref, const BleuConfig& config) {
  return bleu_score(prediction, correct_ref, config) -
         bleu_score(prediction, incorrect_ref, config);
}

}  // namespace pbench::bleu
