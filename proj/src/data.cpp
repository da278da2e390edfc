#include "pbench/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace pbench::data {

namespace {

bool is_ws_scalar(const std::string& c) {
  return c == " " || c == "\t" || c == "\r" || c == "\n" ||
         c == "\xe3\x80\x80";  // U+3000 ideographic space
}

bool is_strippable(char c) {
  switch (c) {
    case '.':
    case ',':
    case '!':
    case '?':
    case ';':
    case ':':
    case '"':
    case '\'':
    case '(':
    case ')':
      return true;
    default:
      return false;
  }
}

}  // namespace

std::vector<std::string> utf8_chars(const std::string& text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    unsigned char b = static_cast<unsigned char>(text[i]);
    size_t len;
    if (b < 0x80) {
      len = 1;
    } else if ((b & 0xe0) == 0xc0) {
      len = 2;
    } else if ((b & 0xf0) == 0xe0) {
      len = 3;
    } else if ((b & 0xf8) == 0xf0) {
      len = 4;
    } else {
      throw ValueError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + len > text.size()) throw ValueError("truncated UTF-8 sequence");
    for (size_t j = 1; j < len; ++j) {
      if ((static_cast<unsigned char>(text[i + j]) & 0xc0) != 0x80) {
        throw ValueError("invalid UTF-8 continuation at offset " +
                         std::to_string(i + j));
      }
    }
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> tokenize(const std::string& text, Side side) {
  if (text.empty()) throw ValueError("cannot tokenize empty text");
  std::vector<std::string> tokens;
  if (side == Side::Source) {
    for (const std::string& c : utf8_chars(text)) {
      if (!is_ws_scalar(c)) tokens.push_back(c);
    }
  } else {
    std::istringstream ss(text);
    std::string word;
    while (ss >> word) {
      size_t lo = 0;
      size_t hi = word.size();
      while (lo < hi && is_strippable(word[lo])) ++lo;
      while (hi > lo && is_strippable(word[hi - 1])) --hi;
      if (lo == hi) continue;
      std::string tok = word.substr(lo, hi - lo);
      for (char& c : tok) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
      tokens.push_back(tok);
    }
  }
  if (tokens.empty()) throw ValueError("text has no tokens: '" + text + "'");
  return tokens;
}

Vocabulary::Vocabulary() {
  for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>"}) add_token(s);
}

int64_t Vocabulary::add_token(const std::string& token) {
  if (token_to_id_.count(token)) {
    throw ValueError("duplicate vocabulary token '" + token + "'");
  }
  int64_t id = size();
  token_to_id_[token] = id;
  id_to_token_.push_back(token);
  return id;
}

int64_t Vocabulary::encode(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::decode(int64_t id) const {
  if (id < 0 || id >= size()) {
    throw ValueError("token id " + std::to_string(id) + " out of range [0," +
                     std::to_string(size()) + ")");
  }
  return id_to_token_[static_cast<size_t>(id)];
}

std::vector<int64_t> Vocabulary::encode_tokens(
    const std::vector<std::string>& toks) const {
  std::vector<int64_t> ids;
  ids.reserve(toks.size());
  for (const auto& t : toks) ids.push_back(encode(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode_ids(
    const std::vector<int64_t>& ids) const {
  std::vector<std::string> toks;
  toks.reserve(ids.size());
  for (int64_t id : ids) toks.push_back(decode(id));
  return toks;
}

Vocabulary build_vocabulary(const std::vector<ParallelPair>& corpus, Side side,
                            int64_t min_count) {
  std::map<std::string, int64_t> counts;
  for (const auto& pair : corpus) {
    const std::string& text = side == Side::Source ? pair.source : pair.target;
    for (const auto& tok : tokenize(text, side)) counts[tok] += 1;
  }
  std::vector<std::pair<std::string, int64_t>> entries(counts.begin(),
                                                       counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  for (const auto& [tok, count] : entries) {
    if (count >= min_count) vocab.add_token(tok);
  }
  return vocab;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path,
                     const std::string& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary: " + path);
  if (!meta.empty()) out << "# " << meta << "\n";
  const auto& toks = vocab.tokens();
  for (size_t i = 4; i < toks.size(); ++i) out << toks[i] << "\n";
  if (!out) throw IoError("short write on vocabulary: " + path);
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary: " + path);
  Vocabulary vocab;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    try {
      vocab.add_token(line);
    } catch (const ValueError&) {
      throw FormatError("line " + std::to_string(lineno) +
                        ": duplicate token '" + line + "' in " + path);
    }
  }
  return vocab;
}

Batch make_batch(const std::vector<ParallelPair>& pairs,
                 const Vocabulary& src_vocab, const Vocabulary& tgt_vocab) {
  Batch batch;
  std::vector<std::vector<int64_t>> src;
  std::vector<std::vector<int64_t>> tgt;
  size_t max_src = 0;
  size_t max_tgt = 0;
  for (const auto& pair : pairs) {
    src.push_back(src_vocab.encode_tokens(tokenize(pair.source, Side::Source)));
    tgt.push_back(tgt_vocab.encode_tokens(tokenize(pair.target, Side::Target)));
    max_src = std::max(max_src, src.back().size());
    max_tgt = std::max(max_tgt, tgt.back().size());
  }
  size_t t = max_tgt + 1;  // room for BOS on the input / EOS on the labels
  for (size_t i = 0; i < pairs.size(); ++i) {
    std::vector<int64_t> s = src[i];
    s.resize(max_src, Vocabulary::kPad);
    batch.src_ids.push_back(std::move(s));

    std::vector<int64_t> in_row(t, Vocabulary::kPad);
    std::vector<int64_t> label_row(t, ad::kMaskedLabel);
    in_row[0] = Vocabulary::kBos;
    for (size_t j = 0; j < tgt[i].size(); ++j) {
      in_row[j + 1] = tgt[i][j];
      label_row[j] = tgt[i][j];
    }
    label_row[tgt[i].size()] = Vocabulary::kEos;
    batch.tgt_in_ids.push_back(std::move(in_row));
    batch.labels.push_back(std::move(label_row));
  }
  return batch;
}

std::vector<ParallelPair> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus: " + path);
  std::vector<ParallelPair> pairs;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] == '#') continue;
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() ||
        fields[1].empty()) {
      throw FormatError("line " + std::to_string(lineno) +
                        ": expected 'source<TAB>target[<TAB>structure]' in " +
                        path);
    }
    ParallelPair pair;
    pair.source = fields[0];
    pair.target = fields[1];
    if (fields.size() == 3) {
      auto label = structure_from_string(fields[2]);
      if (!label) {
        throw FormatError("line " + std::to_string(lineno) +
                          ": unknown structure label '" + fields[2] + "'");
      }
      pair.structure = label;
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

void save_corpus(const std::vector<ParallelPair>& pairs,
                 const std::string& path, const std::string& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write corpus: " + path);
  if (!meta.empty()) out << "# " << meta << "\n";
  for (const auto& pair : pairs) {
    out << pair.source << '\t' << pair.target;
    if (pair.structure) out << '\t' << to_string(*pair.structure);
    out << '\n';
  }
  if (!out) throw IoError("short write on corpus: " + path);
}

}  // namespace pbench::data
