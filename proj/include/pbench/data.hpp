#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pbench/structure.hpp"
#include "pbench/tensor.hpp"

namespace pbench::data {

enum class Side { Source, Target };

// Source side: one token per Unicode scalar (whitespace skipped).
// Target side: lowercased whitespace-split words, surrounding punctuation
// stripped. Throws ValueError when no tokens remain.
std::vector<std::string> tokenize(const std::string& text, Side side);

// Splits a UTF-8 string into scalar values; throws ValueError on bad bytes.
std::vector<std::string> utf8_chars(const std::string& text);

struct ParallelPair {
  std::string source;  // Chinese sentence
  std::string target;  // English sentence
  std::optional<StructureLabel> structure;

  bool operator==(const ParallelPair&) const = default;
};

// Token <-> id maps. Ids 0..3 are reserved for the specials in every
// vocabulary; real tokens start at 4.
class Vocabulary {
 public:
  static constexpr int64_t kPad = 0;
  static constexpr int64_t kBos = 1;
  static constexpr int64_t kEos = 2;
  static constexpr int64_t kUnk = 3;

  Vocabulary();

  // Appends a token with the next free id; rejects duplicates.
  int64_t add_token(const std::string& token);

  int64_t size() const { return static_cast<int64_t>(id_to_token_.size()); }
  int64_t encode(const std::string& token) const;  // kUnk when absent
  const std::string& decode(int64_t id) const;

  std::vector<int64_t> encode_tokens(const std::vector<std::string>& toks) const;
  // Inverse of encode_tokens; ids must be in range.
  std::vector<std::string> decode_ids(const std::vector<int64_t>& ids) const;

  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int64_t> token_to_id_;
};

// Tokens with count >= min_count, ordered by descending frequency then
// lexicographically, after the four specials.
Vocabulary build_vocabulary(const std::vector<ParallelPair>& corpus, Side side,
                            int64_t min_count = 1);

// One token per line; line k holds the token with id k + 4 (specials are
// implicit). Lines starting with '#' are metadata and skipped on load.
void save_vocabulary(const Vocabulary& vocab, const std::string& path,
                     const std::string& meta = "");
Vocabulary load_vocabulary(const std::string& path);

// Teacher-forcing batch. labels[i][j] is the gold id for decoder input
// tgt_in_ids[i][j]; padding positions carry ad::kMaskedLabel.
struct Batch {
  ad::IdMatrix src_ids;     // B x S, PAD-padded
  ad::IdMatrix tgt_in_ids;  // B x T, starts with BOS
  ad::IdMatrix labels;      // B x T, ends with EOS, -100 at padding

  int64_t batch_size() const { return static_cast<int64_t>(src_ids.size()); }
  int64_t src_len() const { return src_ids.empty() ? 0 : static_cast<int64_t>(src_ids[0].size()); }
  int64_t tgt_len() const { return tgt_in_ids.empty() ? 0 : static_cast<int64_t>(tgt_in_ids[0].size()); }
};

Batch make_batch(const std::vector<ParallelPair>& pairs,
                 const Vocabulary& src_vocab, const Vocabulary& tgt_vocab);

// UTF-8 TSV, one pair per line: source TAB target [TAB structure].
// '#'-prefixed lines are metadata. Malformed lines raise FormatError with
// their line number.
std::vector<ParallelPair> load_corpus(const std::string& path);
void save_corpus(const std::vector<ParallelPair>& pairs,
                 const std::string& path, const std::string& meta = "");

}  // namespace pbench::data
