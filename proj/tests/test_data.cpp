#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "pbench/data.hpp"
#include "pbench/priming.hpp"

using namespace pbench;
using namespace pbench::data;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("source tokenization splits unicode scalars") {
  auto toks = tokenize("他们种树", Side::Source);
  REQUIRE(toks.size() == 4);
  CHECK(toks[0] == "他");
  CHECK(toks[1] == "们");
  CHECK(toks[2] == "种");
  CHECK(toks[3] == "树");
}

TEST_CASE("target tokenization lowercases, splits, strips punctuation") {
  auto toks = tokenize("They planted many trees.", Side::Target);
  REQUIRE(toks.size() == 4);
  CHECK(toks[0] == "they");
  CHECK(toks[1] == "planted");
  CHECK(toks[2] == "many");
  CHECK(toks[3] == "trees");

  auto collapsed = tokenize(" a  b ", Side::Target);
  REQUIRE(collapsed.size() == 2);
  CHECK(collapsed[0] == "a");
  CHECK(collapsed[1] == "b");
}

TEST_CASE("tokenize rejects empty input") {
  CHECK_THROWS_AS(tokenize("", Side::Source), ValueError);
  CHECK_THROWS_AS(tokenize("", Side::Target), ValueError);
  CHECK_THROWS_AS(tokenize("...", Side::Target), ValueError);
  CHECK_THROWS_AS(tokenize("\xff\xfe", Side::Source), ValueError);
}

TEST_CASE("vocabulary specials occupy ids 0 through 3") {
  Vocabulary v;
  CHECK(v.size() == 4);
  CHECK(v.decode(Vocabulary::kPad) == "<pad>");
  CHECK(v.decode(Vocabulary::kBos) == "<bos>");
  CHECK(v.decode(Vocabulary::kEos) == "<eos>");
  CHECK(v.decode(Vocabulary::kUnk) == "<unk>");
  CHECK(v.encode("missing") == Vocabulary::kUnk);
  CHECK_THROWS_AS(v.decode(4), ValueError);
}

TEST_CASE("build_vocabulary assigns ids after the specials") {
  std::vector<ParallelPair> corpus = {{"甲", "a b", std::nullopt}};
  Vocabulary v = build_vocabulary(corpus, Side::Target);
  CHECK(v.size() == 6);
  CHECK(v.encode("a") == 4);
  CHECK(v.encode("b") == 5);
}

TEST_CASE("min_count filters everything unique") {
  std::vector<ParallelPair> corpus = {{"甲乙", "x y z", std::nullopt}};
  Vocabulary v = build_vocabulary(corpus, Side::Target, 2);
  CHECK(v.size() == 4);  // specials only
  CHECK(v.encode("x") == Vocabulary::kUnk);
}

TEST_CASE("vocabulary frequency order matches a counting oracle") {
  std::vector<ParallelPair> corpus = {
      {"甲", "b a b c b a", std::nullopt},
      {"乙", "c a", std::nullopt},
  };
  // counts: a=3, b=3, c=2 -> a before b (tie broken lexicographically)
  std::map<std::string, int> counts;
  for (const auto& p : corpus) {
    for (const auto& t : tokenize(p.target, Side::Target)) counts[t]++;
  }
  CHECK(counts["a"] == 3);
  CHECK(counts["b"] == 3);
  CHECK(counts["c"] == 2);
  Vocabulary v = build_vocabulary(corpus, Side::Target);
  CHECK(v.encode("a") == 4);
  CHECK(v.encode("b") == 5);
  CHECK(v.encode("c") == 6);
}

TEST_CASE("build_vocabulary is deterministic") {
  std::vector<ParallelPair> corpus = {
      {"树很", "the tall tree fell", std::nullopt},
      {"树树", "the tree stood", std::nullopt},
  };
  Vocabulary a = build_vocabulary(corpus, Side::Target);
  Vocabulary b = build_vocabulary(corpus, Side::Target);
  CHECK(a.tokens() == b.tokens());
  Vocabulary src = build_vocabulary(corpus, Side::Source);
  CHECK(src.encode("树") == 4);  // most frequent source character
}

TEST_CASE("batch padding and label masking") {
  std::vector<ParallelPair> corpus = {
      {"甲乙", "u v", std::nullopt},
      {"丙", "w x y z", std::nullopt},
  };
  Vocabulary sv = build_vocabulary(corpus, Side::Source);
  Vocabulary tv = build_vocabulary(corpus, Side::Target);
  Batch b = make_batch(corpus, sv, tv);
  REQUIRE(b.batch_size() == 2);
  REQUIRE(b.src_len() == 2);
  REQUIRE(b.tgt_len() == 5);

  // row 0: target "u v" -> labels [u, v, EOS, -100, -100]
  CHECK(b.labels[0][0] == tv.encode("u"));
  CHECK(b.labels[0][1] == tv.encode("v"));
  CHECK(b.labels[0][2] == Vocabulary::kEos);
  CHECK(b.labels[0][3] == ad::kMaskedLabel);
  CHECK(b.labels[0][4] == ad::kMaskedLabel);

  // teacher forcing alignment: tgt_in is labels shifted right with BOS
  CHECK(b.tgt_in_ids[0][0] == Vocabulary::kBos);
  CHECK(b.tgt_in_ids[0][1] == tv.encode("u"));
  CHECK(b.tgt_in_ids[0][2] == tv.encode("v"));
  CHECK(b.tgt_in_ids[0][3] == Vocabulary::kPad);

  // -100 exactly where the padded input is PAD
  for (size_t i = 0; i < 2; ++i) {
    for (size_t j = 0; j < 5; ++j) {
      bool in_pad = b.tgt_in_ids[i][j] == Vocabulary::kPad;
      bool masked = b.labels[i][j] == ad::kMaskedLabel;
      CHECK(in_pad == masked);
    }
  }

  // source padding
  CHECK(b.src_ids[1][0] == sv.encode("丙"));
  CHECK(b.src_ids[1][1] == Vocabulary::kPad);
}

TEST_CASE("single pair batch has no masked labels") {
  std::vector<ParallelPair> corpus = {{"甲", "only pair", std::nullopt}};
  Vocabulary sv = build_vocabulary(corpus, Side::Source);
  Vocabulary tv = build_vocabulary(corpus, Side::Target);
  Batch b = make_batch(corpus, sv, tv);
  for (int64_t v : b.labels[0]) CHECK(v != ad::kMaskedLabel);
  CHECK(b.labels[0].back() == Vocabulary::kEos);
}

TEST_CASE("encode/decode round trip on random token sequences") {
  std::vector<ParallelPair> corpus = {
      {"甲乙丙丁", "alpha beta gamma delta epsilon zeta", std::nullopt}};
  Vocabulary tv = build_vocabulary(corpus, Side::Target);
  Rng rng(5);
  for (int iter = 0; iter < 50; ++iter) {
    std::vector<std::string> toks;
    size_t len = 1 + rng.below(6);
    auto all = tokenize(corpus[0].target, Side::Target);
    for (size_t i = 0; i < len; ++i) {
      toks.push_back(all[rng.below(all.size())]);
    }
    CHECK(tv.decode_ids(tv.encode_tokens(toks)) == toks);
  }
}

TEST_CASE("unknown tokens map to UNK and decode back as <unk>") {
  std::vector<ParallelPair> corpus = {{"甲", "known words", std::nullopt}};
  Vocabulary tv = build_vocabulary(corpus, Side::Target);
  auto ids = tv.encode_tokens({"known", "mystery"});
  CHECK(ids[1] == Vocabulary::kUnk);
  CHECK(tv.decode(ids[1]) == "<unk>");
}

TEST_CASE("corpus TSV parsing") {
  auto path = temp_file("pbench_corpus.tsv");
  {
    std::ofstream out(path, std::ios::binary);
    out << "# meta line\n";
    out << "他们种树\tthey planted many trees\tActive\n";
    out << "别的\tsomething else\n";
  }
  auto pairs = load_corpus(path.string());
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].source == "他们种树");
  CHECK(pairs[0].target == "they planted many trees");
  CHECK(pairs[0].structure == StructureLabel::Active);
  CHECK(!pairs[1].structure.has_value());
  std::filesystem::remove(path);
}

TEST_CASE("empty corpus file loads as empty list") {
  auto path = temp_file("pbench_corpus_empty.tsv");
  std::ofstream(path).close();
  CHECK(load_corpus(path.string()).empty());
  std::filesystem::remove(path);
}

TEST_CASE("malformed corpus lines carry line numbers") {
  auto path = temp_file("pbench_corpus_bad.tsv");
  {
    std::ofstream out(path, std::ios::binary);
    out << "好\tfine pair\n";
    out << "no tabs here\n";
  }
  try {
    load_corpus(path.string());
    CHECK(false);
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  {
    std::ofstream out(path, std::ios::binary);
    out << "好\tpair\tBogusLabel\n";
  }
  try {
    load_corpus(path.string());
    CHECK(false);
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    CHECK(std::string(e.what()).find("BogusLabel") != std::string::npos);
  }
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.tsv"), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("corpus save/load round trip is byte identical on 1000 pairs") {
  std::vector<ParallelPair> pairs = prime::generate_parallel_corpus(77, 250);
  REQUIRE(pairs.size() == 1000);
  auto p1 = temp_file("pbench_rt1.tsv");
  auto p2 = temp_file("pbench_rt2.tsv");
  save_corpus(pairs, p1.string(), "seed=1 config=deadbeef");
  auto loaded = load_corpus(p1.string());
  CHECK(loaded == pairs);
  save_corpus(loaded, p2.string(), "seed=1 config=deadbeef");
  CHECK(read_file(p1) == read_file(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("vocabulary file round trip") {
  std::vector<ParallelPair> corpus = {
      {"甲乙丙", "some words repeated words", std::nullopt}};
  Vocabulary v = build_vocabulary(corpus, Side::Target);
  auto path = temp_file("pbench_vocab.txt");
  save_vocabulary(v, path.string(), "seed=1");
  Vocabulary loaded = load_vocabulary(path.string());
  CHECK(loaded.tokens() == v.tokens());
  CHECK_THROWS_AS(load_vocabulary("/nonexistent/vocab.txt"), IoError);
  std::filesystem::remove(path);
}


TEST_CASE("batch round trip over 50 generated pairs") {
  auto corpus = prime::generate_parallel_corpus(21, 13);
  corpus.resize(50);
  Vocabulary sv = build_vocabulary(corpus, Side::Source);
  Vocabulary tv = build_vocabulary(corpus, Side::Target);
  Batch b = make_batch(corpus, sv, tv);
  for (size_t i = 0; i < corpus.size(); ++i) {
    std::vector<int64_t> src_ids;
    for (int64_t id : b.src_ids[i]) {
      if (id != Vocabulary::kPad) src_ids.push_back(id);
    }
    CHECK(sv.decode_ids(src_ids) == tokenize(corpus[i].source, Side::Source));

    std::vector<int64_t> tgt_ids;
    for (int64_t id : b.labels[i]) {
      if (id != ad::kMaskedLabel && id != Vocabulary::kEos) tgt_ids.push_back(id);
    }
    CHECK(tv.decode_ids(tgt_ids) == tokenize(corpus[i].target, Side::Target));
  }
}
