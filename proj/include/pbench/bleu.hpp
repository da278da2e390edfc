#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pbench/errors.hpp"

namespace pbench::bleu {

// Geometric-mean BLEU over n-gram orders 1..max_n with a brevity penalty.
// smoothing_epsilon == 0 means none: any zero precision zeroes the score.
// A positive epsilon replaces zero precisions so short sentences keep a
// nonzero geometric mean.
struct BleuConfig {
  int max_n = 4;
  std::vector<double> weights;  // empty -> uniform 1/max_n
  double smoothing_epsilon = 0.0;

  std::vector<double> effective_weights() const;
};

using Tokens = std::vector<std::string>;

// Clipped n-gram matches: (matched, total) where matched sums
// min(candidate count, reference count) over candidate n-gram types and
// total = max(0, |candidate| - n + 1).
std::pair<int64_t, int64_t> clipped_ngram_precision(const Tokens& candidate,
                                                    const Tokens& reference,
                                                    int n);

// 1 when c >= r, exp(1 - r/c) when 0 < c < r, 0 when c == 0.
double brevity_penalty(int64_t candidate_len, int64_t reference_len);

double bleu_score(const Tokens& candidate, const Tokens& reference,
                  const BleuConfig& config = {});

// bleu(prediction, correct) - bleu(prediction, incorrect); positive means
// the prediction sides with the structurally congruent reference.
double bleu_difference(const Tokens& prediction, const Tokens& correct_ref,
                       const Tokens& incorrect_ref,
                       const BleuConfig& config = {});

}  // namespace pbench::bleu
