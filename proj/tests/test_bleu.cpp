#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "bleu_oracle.hpp"
#include "pbench/bleu.hpp"
#include "pbench/rng.hpp"

using namespace pbench;
using namespace pbench::bleu;
using pbench::testing::oracle_bleu;
using pbench::testing::oracle_clipped;

namespace {

Tokens split(const std::string& s) {
  Tokens out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

TEST_CASE("clipped n-gram precision examples") {
  Tokens same = split("one two three four five");
  auto [m, t] = clipped_ngram_precision(same, same, 2);
  CHECK(m == 4);
  CHECK(t == 4);

  Tokens cand = split("the the the the the the the");
  Tokens ref = split("the cat is on the mat");
  auto [m1, t1] = clipped_ngram_precision(cand, ref, 1);
  CHECK(m1 == 2);  // "the" appears twice in the reference
  CHECK(t1 == 7);

  Tokens disjoint = split("aa bb cc");
  auto [m2, t2] = clipped_ngram_precision(disjoint, split("dd ee ff"), 1);
  CHECK(m2 == 0);
  CHECK(t2 == 3);

  auto [m3, t3] = clipped_ngram_precision(split("a b"), ref, 3);
  CHECK(m3 == 0);
  CHECK(t3 == 0);

  CHECK_THROWS_AS(clipped_ngram_precision(cand, ref, 0), ValueError);
}

TEST_CASE("brevity penalty cases") {
  CHECK(brevity_penalty(10, 8) == 1.0);
  CHECK(brevity_penalty(8, 8) == 1.0);
  CHECK(brevity_penalty(4, 8) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(brevity_penalty(0, 8) == 0.0);
  CHECK_THROWS_AS(brevity_penalty(-1, 3), ValueError);
}

TEST_CASE("bleu_score fixed points") {
  Tokens sent = split("they planted many trees today");
  CHECK(bleu_score(sent, sent) == doctest::Approx(1.0).epsilon(1e-15));

  // zero 4-gram overlap with no smoothing zeroes the score
  Tokens cand = split("a b c d");
  Tokens ref = split("a b x c d");
  auto [m4, t4] = clipped_ngram_precision(cand, ref, 4);
  REQUIRE(m4 == 0);
  CHECK(bleu_score(cand, ref) == 0.0);

  // unigram-only clipping case: 2/7, BP = 1 since 7 > 6
  BleuConfig uni;
  uni.max_n = 1;
  CHECK(bleu_score(split("the the the the the the the"),
                   split("the cat is on the mat"), uni) ==
        doctest::Approx(2.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("bleu config validation") {
  BleuConfig bad;
  bad.max_n = 2;
  bad.weights = {0.9, 0.3};
  Tokens s = split("a b c");
  CHECK_THROWS_AS(bleu_score(s, s, bad), ValueError);
  bad.weights = {0.5};
  CHECK_THROWS_AS(bleu_score(s, s, bad), ValueError);
  BleuConfig ok;
  ok.max_n = 2;
  ok.weights = {0.25, 0.75};
  CHECK(bleu_score(s, s, ok) == 1.0);
}

TEST_CASE("bleu_difference composes two scores") {
  Tokens pred = split("x y z w");
  Tokens correct = pred;
  Tokens incorrect = split("p q r s");
  CHECK(bleu_difference(pred, correct, incorrect) == 1.0);
  CHECK(bleu_difference(pred, correct, correct) == 0.0);

  Rng rng(1234);
  std::vector<std::string> vocab = {"a", "b", "c", "d", "e"};
  for (int iter = 0; iter < 30; ++iter) {
    auto mk = [&]() {
      Tokens t;
      size_t len = 4 + rng.below(5);
      for (size_t i = 0; i < len; ++i) t.push_back(vocab[rng.below(5)]);
      return t;
    };
    Tokens p = mk();
    Tokens r1 = mk();
    Tokens r2 = mk();
    BleuConfig cfg;
    cfg.smoothing_epsilon = 1e-9;
    CHECK(bleu_difference(p, r1, r2, cfg) ==
          doctest::Approx(bleu_score(p, r1, cfg) - bleu_score(p, r2, cfg))
              .epsilon(1e-15));
  }
}

TEST_CASE("bleu matches the nested-loop oracle on random pairs") {
  Rng rng(99);
  std::vector<std::string> vocab;
  for (int i = 0; i < 10; ++i) vocab.push_back("w" + std::to_string(i));
  int checked = 0;
  for (int iter = 0; iter < 100; ++iter) {
    auto mk = [&]() {
      Tokens t;
      size_t len = 1 + rng.below(12);
      for (size_t i = 0; i < len; ++i) t.push_back(vocab[rng.below(10)]);
      return t;
    };
    Tokens cand = mk();
    Tokens ref = mk();
    for (double eps : {0.0, 1e-9}) {
      BleuConfig cfg;
      cfg.smoothing_epsilon = eps;
      double got = bleu_score(cand, ref, cfg);
      double want = oracle_bleu(cand, ref, cfg);
      CHECK(std::fabs(got - want) <= 1e-12);
      CHECK(got >= 0.0);
      CHECK(got <= 1.0);
    }
    for (int n = 1; n <= 4; ++n) {
      auto got = clipped_ngram_precision(cand, ref, n);
      auto want = oracle_clipped(cand, ref, n);
      CHECK(got == want);
    }
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("shortening a candidate never increases the brevity penalty") {
  for (int64_t r = 1; r <= 12; ++r) {
    double prev = -1.0;
    for (int64_t c = 0; c <= 12; ++c) {
      double bp = brevity_penalty(c, r);
      CHECK(bp >= prev);
      prev = bp;
    }
  }
}

TEST_CASE("per-n one-hot weights recover individual precisions") {
  Tokens cand = split("a b c d e");
  Tokens ref = split("a b x d e");
  for (int n = 1; n <= 3; ++n) {
    BleuConfig cfg;
    cfg.max_n = n;
    cfg.weights.assign(static_cast<size_t>(n), 0.0);
    cfg.weights.back() = 1.0;
    auto [m, t] = clipped_ngram_precision(cand, ref, n);
    double expect = t > 0 && m > 0 ? static_cast<double>(m) / t : 0.0;
    CHECK(bleu_score(cand, ref, cfg) == doctest::Approx(expect).epsilon(1e-12));
  }
}
