#include "pbench/priming.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include "pbench/rng.hpp"

namespace pbench::prime {

using data::ParallelPair;

namespace {

struct Agent {
  const char* subj;  // English subject form
  const char* obj;   // English object form (after "by"/as recipient)
  const char* zh;
  const char* atom;
};

struct Patient {
  const char* en;
  bool plural;
  const char* zh;
  const char* atom;
};

struct TransVerb {
  const char* past;
  const char* participle;
  const char* zh;
};

struct DitransVerb {
  const char* past;
  const char* participle;
  const char* zh;
};

struct Theme {
  const char* en;
  const char* zh;
  const char* atom;
};

const Agent kAgents[] = {
    {"they", "them", "他们", "they"},
    {"the cowboy", "the cowboy", "牛仔", "cowboy"},
    {"the sailor", "the sailor", "水手", "sailor"},
    {"the teacher", "the teacher", "老师", "teacher"},
    {"the doctor", "the doctor", "医生", "doctor"},
    {"the farmer", "the farmer", "农民", "farmer"},
    {"the writer", "the writer", "作家", "writer"},
    {"the soldier", "the soldier", "士兵", "soldier"},
    {"the singer", "the singer", "歌手", "singer"},
    {"the painter", "the painter", "画家", "painter"},
    {"the lawyer", "the lawyer", "律师", "lawyer"},
    {"the nurse", "the nurse", "护士", "nurse"},
    {"the pilot", "the pilot", "飞行员", "pilot"},
    {"the chef", "the chef", "厨师", "chef"},
    {"the student", "the student", "学生", "student"},
    {"the worker", "the worker", "工人", "worker"},
    {"the driver", "the driver", "司机", "driver"},
    {"the hunter", "the hunter", "猎人", "hunter"},
    {"the dancer", "the dancer", "舞者", "dancer"},
    {"the judge", "the judge", "法官", "judge"},
    {"the poet", "the poet", "诗人", "poet"},
    {"the actor", "the actor", "演员", "actor"},
};

const Patient kPatients[] = {
    {"many trees", true, "很多树", "trees"},
    {"the letter", false, "那封信", "letter"},
    {"the song", false, "那首歌", "song"},
    {"the wall", false, "那堵墙", "wall"},
    {"the house", false, "那座房子", "house"},
    {"the fence", false, "那道栅栏", "fence"},
    {"the floor", false, "那块地板", "floor"},
    {"the window", false, "那扇窗户", "window"},
    {"the garden", false, "那个花园", "garden"},
    {"many flowers", true, "很多花", "flowers"},
    {"the roof", false, "那个屋顶", "roof"},
    {"the door", false, "那扇门", "door"},
    {"the bridge", false, "那座桥", "bridge"},
    {"the road", false, "那条路", "road"},
    {"the boat", false, "那条船", "boat"},
    {"the car", false, "那辆车", "car"},
    {"the dinner", false, "那顿晚餐", "dinner"},
    {"many dishes", true, "很多盘子", "dishes"},
    {"the shirt", false, "那件衬衫", "shirt"},
    {"the poem", false, "那首诗", "poem"},
};

const TransVerb kTransVerbs[] = {
    {"planted", "planted", "种"},
    {"repaired", "repaired", "修"},
    {"built", "built", "建"},
    {"washed", "washed", "洗"},
    {"painted", "painted", "画"},
    {"wrote", "written", "写"},
    {"cleaned", "cleaned", "打扫"},
    {"moved", "moved", "搬"},
    {"watered", "watered", "浇"},
    {"sold", "sold", "卖"},
    {"found", "found", "找到"},
    {"inspected", "inspected", "检查"},
};

const DitransVerb kDitransVerbs[] = {
    {"gave", "given", "给"},
    {"mailed", "mailed", "寄"},
    {"handed", "handed", "递"},
    {"lent", "lent", "借"},
    {"showed", "shown", "展示"},
    {"offered", "offered", "提供"},
    {"passed", "passed", "传"},
    {"returned", "returned", "还"},
    {"taught", "taught", "教"},
    {"paid", "paid", "付"},
};

const Theme kThemes[] = {
    {"the book", "那本书", "book"},
    {"the map", "那张地图", "map"},
    {"the key", "那把钥匙", "key"},
    {"the pen", "那支笔", "pen"},
    {"the cup", "那个杯子", "cup"},
    {"the hat", "那顶帽子", "hat"},
    {"the ball", "那个球", "ball"},
    {"the ticket", "那张票", "ticket"},
    {"the photo", "那张照片", "photo"},
    {"the coin", "那枚硬币", "coin"},
    {"the ring", "那枚戒指", "ring"},
    {"the knife", "那把刀", "knife"},
    {"the bottle", "那个瓶子", "bottle"},
    {"the basket", "那个篮子", "basket"},
    {"the blanket", "那条毯子", "blanket"},
    {"the radio", "那台收音机", "radio"},
    {"the camera", "那台相机", "camera"},
    {"the guitar", "那把吉他", "guitar"},
    {"the drum", "那面鼓", "drum"},
    {"the lamp", "那盏灯", "lamp"},
};

constexpr int64_t kNumAgents = std::size(kAgents);
constexpr int64_t kNumPatients = std::size(kPatients);
constexpr int64_t kNumTransVerbs = std::size(kTransVerbs);
constexpr int64_t kNumDitransVerbs = std::size(kDitransVerbs);
constexpr int64_t kNumThemes = std::size(kThemes);

constexpr int64_t kApCombos = kNumAgents * kNumTransVerbs * kNumPatients;
constexpr int64_t kPdCombos =
    kNumAgents * kNumDitransVerbs * kNumThemes * (kNumAgents - 1);

struct ApCombo {
  int64_t agent, verb, patient;
};

struct PdCombo {
  int64_t agent, verb, theme, recipient;
};

ApCombo ap_from_index(int64_t i) {
  ApCombo c;
  c.patient = i % kNumPatients;
  i /= kNumPatients;
  c.verb = i % kNumTransVerbs;
  c.agent = i / kNumTransVerbs;
  return c;
}

PdCombo pd_from_index(int64_t i) {
  PdCombo c;
  int64_t rec = i % (kNumAgents - 1);
  i /= (kNumAgents - 1);
  c.theme = i % kNumThemes;
  i /= kNumThemes;
  c.verb = i % kNumDitransVerbs;
  c.agent = i / kNumDitransVerbs;
  c.recipient = rec >= c.agent ? rec + 1 : rec;  // skip the agent itself
  return c;
}

std::string zh_active(const ApCombo& c) {
  return std::string(kAgents[c.agent].zh) + kTransVerbs[c.verb].zh + "了" +
         kPatients[c.patient].zh;
}

std::string zh_passive(const ApCombo& c) {
  return std::string(kPatients[c.patient].zh) + "被" + kAgents[c.agent].zh +
         kTransVerbs[c.verb].zh + "了";
}

std::string en_active(const ApCombo& c) {
  return std::string(kAgents[c.agent].subj) + " " + kTransVerbs[c.verb].past +
         " " + kPatients[c.patient].en;
}

std::string en_passive(const ApCombo& c) {
  const char* be = kPatients[c.patient].plural ? "were" : "was";
  return std::string(kPatients[c.patient].en) + " " + be + " " +
         kTransVerbs[c.verb].participle + " by " + kAgents[c.agent].obj;
}

std::string zh_po(const PdCombo& c) {
  return std::string(kAgents[c.agent].zh) + kDitransVerbs[c.verb].zh + "了" +
         kThemes[c.theme].zh + "给" + kAgents[c.recipient].zh;
}

std::string zh_do(const PdCombo& c) {
  return std::string(kAgents[c.agent].zh) + kDitransVerbs[c.verb].zh + "了" +
         kAgents[c.recipient].zh + kThemes[c.theme].zh;
}

std::string en_po(const PdCombo& c) {
  return std::string(kAgents[c.agent].subj) + " " + kDitransVerbs[c.verb].past +
         " " + kThemes[c.theme].en + " to " + kAgents[c.recipient].obj;
}

std::string en_do(const PdCombo& c) {
  return std::string(kAgents[c.agent].subj) + " " + kDitransVerbs[c.verb].past +
         " " + kAgents[c.recipient].obj + " " + kThemes[c.theme].en;
}

std::string ap_key(const ApCombo& c) {
  return std::string(kAgents[c.agent].atom) + "|" + kTransVerbs[c.verb].past +
         "|" + kPatients[c.patient].atom;
}

std::string pd_key(const PdCombo& c) {
  return std::string(kAgents[c.agent].atom) + "|" +
         kDitransVerbs[c.verb].past + "|" + kThemes[c.theme].atom + "|" +
         kAgents[c.recipient].atom;
}

ParallelPair pair_from_ap(StructureLabel s, const ApCombo& c) {
  ParallelPair p;
  p.structure = s;
  if (s == StructureLabel::Active) {
    p.source = zh_active(c);
    p.target = en_active(c);
  } else {
    p.source = zh_passive(c);
    p.target = en_passive(c);
  }
  return p;
}

ParallelPair pair_from_pd(StructureLabel s, const PdCombo& c) {
  ParallelPair p;
  p.structure = s;
  if (s == StructureLabel::PO) {
    p.source = zh_po(c);
    p.target = en_po(c);
  } else {
    p.source = zh_do(c);
    p.target = en_do(c);
  }
  return p;
}

PrimingItem item_from_ap(StructureLabel s, const ApCombo& c) {
  PrimingItem item;
  item.structure = s;
  item.lexicon_key = ap_key(c);
  if (s == StructureLabel::Active) {
    item.prime_source = zh_active(c);
    item.congruent_target = en_active(c);
    item.incongruent_target = en_passive(c);
  } else {
    item.prime_source = zh_passive(c);
    item.congruent_target = en_passive(c);
    item.incongruent_target = en_active(c);
  }
  return item;
}

PrimingItem item_from_pd(StructureLabel s, const PdCombo& c) {
  PrimingItem item;
  item.structure = s;
  item.lexicon_key = pd_key(c);
  if (s == StructureLabel::PO) {
    item.prime_source = zh_po(c);
    item.congruent_target = en_po(c);
    item.incongruent_target = en_do(c);
  } else {
    item.prime_source = zh_do(c);
    item.congruent_target = en_do(c);
    item.incongruent_target = en_po(c);
  }
  return item;
}

// Both generators draw from one seeded shuffle per combination pool: the
// corpus consumes slices from the front, the test set from the back.
struct ShuffledPools {
  std::vector<int64_t> ap;
  std::vector<int64_t> pd;
};

ShuffledPools shuffled_pools(uint64_t seed) {
  ShuffledPools pools;
  pools.ap.resize(static_cast<size_t>(kApCombos));
  pools.pd.resize(static_cast<size_t>(kPdCombos));
  for (int64_t i = 0; i < kApCombos; ++i) pools.ap[static_cast<size_t>(i)] = i;
  for (int64_t i = 0; i < kPdCombos; ++i) pools.pd[static_cast<size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(pools.ap);
  rng.shuffle(pools.pd);
  return pools;
}

int64_t find_agent(const std::string& name) {
  for (int64_t i = 0; i < kNumAgents; ++i) {
    if (name == kAgents[i].atom) return i;
  }
  throw ValueError("unknown agent '" + name + "'");
}

ApCombo resolve_ap(const std::string& agent, const std::string& verb,
                   const std::string& object) {
  ApCombo c;
  c.agent = find_agent(agent);
  c.verb = -1;
  for (int64_t i = 0; i < kNumTransVerbs; ++i) {
    if (verb == kTransVerbs[i].past) c.verb = i;
  }
  if (c.verb < 0) throw ValueError("unknown transitive verb '" + verb + "'");
  c.patient = -1;
  for (int64_t i = 0; i < kNumPatients; ++i) {
    if (object == kPatients[i].atom) c.patient = i;
  }
  if (c.patient < 0) throw ValueError("unknown patient '" + object + "'");
  return c;
}

PdCombo resolve_pd(const std::string& agent, const std::string& verb,
                   const std::string& object, const std::string& recipient) {
  PdCombo c;
  c.agent = find_agent(agent);
  c.recipient = find_agent(recipient);
  if (c.recipient == c.agent) {
    throw ValueError("recipient must differ from the agent");
  }
  c.verb = -1;
  for (int64_t i = 0; i < kNumDitransVerbs; ++i) {
    if (verb == kDitransVerbs[i].past) c.verb = i;
  }
  if (c.verb < 0) throw ValueError("unknown ditransitive verb '" + verb + "'");
  c.theme = -1;
  for (int64_t i = 0; i < kNumThemes; ++i) {
    if (object == kThemes[i].atom) c.theme = i;
  }
  if (c.theme < 0) throw ValueError("unknown theme '" + object + "'");
  return c;
}

}  // namespace

LexiconCapacity lexicon_capacity() {
  LexiconCapacity c;
  c.agents = kNumAgents;
  c.patients = kNumPatients;
  c.themes = kNumThemes;
  c.transitive_verbs = kNumTransVerbs;
  c.ditransitive_verbs = kNumDitransVerbs;
  c.active_passive_combos = kApCombos;
  c.po_do_combos = kPdCombos;
  return c;
}

ParallelPair realize_pair(StructureLabel s, const std::string& agent,
                          const std::string& verb, const std::string& object,
                          const std::string& recipient) {
  if (s == StructureLabel::Active || s == StructureLabel::Passive) {
    return pair_from_ap(s, resolve_ap(agent, verb, object));
  }
  return pair_from_pd(s, resolve_pd(agent, verb, object, recipient));
}

PrimingItem realize_item(StructureLabel s, const std::string& agent,
                         const std::string& verb, const std::string& object,
                         const std::string& recipient) {
  if (s == StructureLabel::Active || s == StructureLabel::Passive) {
    return item_from_ap(s, resolve_ap(agent, verb, object));
  }
  return item_from_pd(s, resolve_pd(agent, verb, object, recipient));
}

std::vector<ParallelPair> generate_parallel_corpus(uint64_t seed,
                                                   int64_t n_per_structure) {
  if (n_per_structure < 1) throw ValueError("n_per_structure must be >= 1");
  if (2 * n_per_structure > kApCombos) {
    throw CapacityError("corpus needs " + std::to_string(2 * n_per_structure) +
                        " active/passive combinations but the lexicon holds " +
                        std::to_string(kApCombos));
  }
  if (2 * n_per_structure > kPdCombos) {
    throw CapacityError("corpus needs " + std::to_string(2 * n_per_structure) +
                        " PO/DO combinations but the lexicon holds " +
                        std::to_string(kPdCombos));
  }
  ShuffledPools pools = shuffled_pools(seed);
  std::vector<ParallelPair> out;
  out.reserve(static_cast<size_t>(4 * n_per_structure));
  for (int64_t i = 0; i < n_per_structure; ++i) {
    out.push_back(pair_from_ap(
        StructureLabel::Active,
        ap_from_index(pools.ap[static_cast<size_t>(i)])));
    out.push_back(pair_from_ap(
        StructureLabel::Passive,
        ap_from_index(pools.ap[static_cast<size_t>(n_per_structure + i)])));
    out.push_back(pair_from_pd(
        StructureLabel::PO, pd_from_index(pools.pd[static_cast<size_t>(i)])));
    out.push_back(pair_from_pd(
        StructureLabel::DO,
        pd_from_index(pools.pd[static_cast<size_t>(n_per_structure + i)])));
  }
  return out;
}

std::vector<PrimingItem> generate_test_set(uint64_t seed,
                                           int64_t n_per_structure) {
  if (n_per_structure < 1) throw ValueError("n_per_structure must be >= 1");
  if (2 * n_per_structure > kApCombos) {
    throw CapacityError("test set needs " +
                        std::to_string(2 * n_per_structure) +
                        " active/passive combinations but the lexicon holds " +
                        std::to_string(kApCombos));
  }
  if (2 * n_per_structure > kPdCombos) {
    throw CapacityError("test set needs " +
                        std::to_string(2 * n_per_structure) +
                        " PO/DO combinations but the lexicon holds " +
                        std::to_string(kPdCombos));
  }
  ShuffledPools pools = shuffled_pools(seed);
  std::vector<PrimingItem> out;
  out.reserve(static_cast<size_t>(4 * n_per_structure));
  for (int64_t i = 0; i < n_per_structure; ++i) {
    out.push_back(item_from_ap(
        StructureLabel::Active,
        ap_from_index(pools.ap[static_cast<size_t>(kApCombos - 1 - i)])));
    out.push_back(item_from_ap(
        StructureLabel::Passive,
        ap_from_index(pools.ap[static_cast<size_t>(kApCombos - 1 -
                                                   n_per_structure - i)])));
    out.push_back(item_from_pd(
        StructureLabel::PO,
        pd_from_index(pools.pd[static_cast<size_t>(kPdCombos - 1 - i)])));
    out.push_back(item_from_pd(
        StructureLabel::DO,
        pd_from_index(pools.pd[static_cast<size_t>(kPdCombos - 1 -
                                                   n_per_structure - i)])));
  }
  return out;
}

std::optional<StructureLabel> classify_structure(
    const std::vector<std::string>& tokens) {
  static const std::unordered_set<std::string> trans_past = [] {
    std::unordered_set<std::string> s;
    for (const auto& v : kTransVerbs) s.insert(v.past);
    return s;
  }();
  static const std::unordered_set<std::string> ditrans_past = [] {
    std::unordered_set<std::string> s;
    for (const auto& v : kDitransVerbs) s.insert(v.past);
    return s;
  }();
  static const std::unordered_set<std::string> participles = [] {
    std::unordered_set<std::string> s;
    for (const auto& v : kTransVerbs) s.insert(v.participle);
    for (const auto& v : kDitransVerbs) s.insert(v.participle);
    return s;
  }();

  size_t n = tokens.size();
  // passive: was/were + participle + by, in order
  for (size_t i = 0; i < n; ++i) {
    if (tokens[i] != "was" && tokens[i] != "were") continue;
    for (size_t j = i + 1; j < n; ++j) {
      if (!participles.count(tokens[j])) continue;
      for (size_t k = j + 1; k < n; ++k) {
        if (tokens[k] == "by") return StructureLabel::Passive;
      }
    }
  }
  // ditransitive frames: verb .. to .. -> PO, verb NP NP -> DO
  for (size_t i = 0; i < n; ++i) {
    if (!ditrans_past.count(tokens[i])) continue;
    for (size_t k = i + 2; k + 1 < n; ++k) {
      if (tokens[k] == "to") return StructureLabel::PO;
    }
    bool has_to = false;
    for (size_t k = i + 1; k < n; ++k) has_to = has_to || tokens[k] == "to";
    if (!has_to && n - i - 1 >= 2) return StructureLabel::DO;
    return std::nullopt;
  }
  // plain subject-verb-object
  for (size_t i = 1; i + 1 < n; ++i) {
    if (trans_past.count(tokens[i])) return StructureLabel::Active;
  }
  return std::nullopt;
}

void save_test_set(const std::vector<PrimingItem>& items,
                   const std::string& path, const std::string& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write test set: " + path);
  if (!meta.empty()) {
    nlohmann::json m{{"_meta", {{"info", meta}}}};
    out << m.dump() << "\n";
  }
  for (const auto& item : items) {
    nlohmann::json j{
        {"prime_source", item.prime_source},
        {"congruent_target", item.congruent_target},
        {"incongruent_target", item.incongruent_target},
        {"structure", to_string(item.structure)},
        {"lexicon_key", item.lexicon_key},
    };
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("short write on test set: " + path);
}

std::vector<PrimingItem> load_test_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open test set: " + path);
  std::vector<PrimingItem> items;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(lineno) + ": bad JSON (" +
                        e.what() + ")");
    }
    if (j.contains("_meta")) continue;
    try {
      PrimingItem item;
      item.prime_source = j.at("prime_source").get<std::string>();
      item.congruent_target = j.at("congruent_target").get<std::string>();
      item.incongruent_target = j.at("incongruent_target").get<std::string>();
      auto label = structure_from_string(j.at("structure").get<std::string>());
      if (!label) {
        throw FormatError("line " + std::to_string(lineno) +
                          ": unknown structure label");
      }
      item.structure = *label;
      item.lexicon_key = j.at("lexicon_key").get<std::string>();
      items.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(lineno) +
                        ": missing field (" + e.what() + ")");
    }
  }
  return items;
}

std::vector<std::string> key_atoms(const std::string& lexicon_key) {
  std::vector<std::string> atoms;
  size_t start = 0;
  while (true) {
    size_t bar = lexicon_key.find('|', start);
    if (bar == std::string::npos) {
      atoms.push_back(lexicon_key.substr(start));
      return atoms;
    }
    atoms.push_back(lexicon_key.substr(start, bar - start));
    start = bar + 1;
  }
}

bool keys_disjoint(const std::string& a, const std::string& b) {
  auto aa = key_atoms(a);
  auto bb = key_atoms(b);
  for (const auto& x : aa) {
    for (const auto& y : bb) {
      if (x == y) return false;
    }
  }
  return true;
}

}  // namespace pbench::prime
