#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pbench/data.hpp"
#include "pbench/structure.hpp"

namespace pbench::prime {

// One evaluation item: a Chinese prime plus two English targets with the
// same content words, one sharing the prime's construction and one using
// the alternate construction of the pair.
struct PrimingItem {
  std::string prime_source;
  std::string congruent_target;
  std::string incongruent_target;
  StructureLabel structure = StructureLabel::Active;
  std::string lexicon_key;  // '|'-joined content-word atoms

  bool operator==(const PrimingItem&) const = default;
};

struct LexiconCapacity {
  int64_t agents = 0;
  int64_t patients = 0;
  int64_t themes = 0;
  int64_t transitive_verbs = 0;
  int64_t ditransitive_verbs = 0;
  int64_t active_passive_combos = 0;  // agent x verb x patient
  int64_t po_do_combos = 0;           // agent x verb x theme x recipient
};

LexiconCapacity lexicon_capacity();

// Renders one labelled pair from named lexemes: agents by head word
// ("they", "cowboy"), verbs by English past form ("planted", "gave"),
// patients/themes by head noun ("trees", "book"). Recipient is required
// for PO/DO and must differ from the agent.
data::ParallelPair realize_pair(StructureLabel s, const std::string& agent,
                                const std::string& verb,
                                const std::string& object,
                                const std::string& recipient = "");
PrimingItem realize_item(StructureLabel s, const std::string& agent,
                         const std::string& verb, const std::string& object,
                         const std::string& recipient = "");

// Labelled training pairs, n per structure, interleaved
// Active/Passive/PO/DO. Sampling is a seeded shuffle of the unique
// combination space; asking for more than the space holds raises
// CapacityError. A given seed always produces the same corpus.
std::vector<data::ParallelPair> generate_parallel_corpus(
    uint64_t seed, int64_t n_per_structure);

// Evaluation items, n per structure, drawn from the opposite end of the
// same seeded shuffle so they avoid the training combinations whenever the
// space is large enough.
std::vector<PrimingItem> generate_test_set(uint64_t seed,
                                           int64_t n_per_structure);

// Rule-based structure detection over tokenized English. Returns nullopt
// (unknown) when no pattern fires.
std::optional<StructureLabel> classify_structure(
    const std::vector<std::string>& tokens);

// JSON-lines persistence; an optional first record carries run metadata.
void save_test_set(const std::vector<PrimingItem>& items,
                   const std::string& path, const std::string& meta = "");
std::vector<PrimingItem> load_test_set(const std::string& path);

// Splits a lexicon key back into its atoms.
std::vector<std::string> key_atoms(const std::string& lexicon_key);
// True when the two keys share no content atom.
bool keys_disjoint(const std::string& a, const std::string& b);

}  // namespace pbench::prime
