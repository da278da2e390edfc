#include "pbench/optim.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace pbench::ad {

Tensor ParamSet::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw ValueError("duplicate parameter '" + name + "'");
  index_[name] = items_.size();
  items_.emplace_back(name, t);
  return t;
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("unknown parameter '" + name + "'");
  return items_[it->second].second;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("unknown parameter '" + name + "'");
  return items_[it->second].second;
}

bool ParamSet::contains(const std::string& name) const {
  return index_.count(name) > 0;
}

int64_t ParamSet::total_numel() const {
  int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

void adam_step(ParamSet& params, AdamState& state) {
  state.step_count += 1;
  double t = static_cast<double>(state.step_count);
  double bc1 = 1.0 - std::pow(state.beta1, t);
  double bc2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [name, p] : params) {
    if (!p.requires_grad()) continue;
    if (!p.has_grad()) {
      throw ValueError("missing gradient for parameter '" + name + "'");
    }
    const auto& g = p.grad();
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.empty()) m.assign(g.size(), 0.0);
    if (v.empty()) v.assign(g.size(), 0.0);
    if (m.size() != g.size() || v.size() != g.size()) {
      throw ValueError("optimizer state size mismatch for '" + name + "'");
    }
    auto& w = p.data();
    for (size_t i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      w[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

// --- checkpoint serialization ---

namespace {

constexpr char kMagic[4] = {'P', 'B', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
  put_u64(buf, std::bit_cast<uint64_t>(v));
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}
  void need(size_t n) const {
    if (pos + n > buf.size()) throw FormatError("truncated checkpoint");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    }
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    }
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const ParamSet& params, const std::string& path,
                     uint64_t seed, uint64_t config_hash) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_u64(buf, seed);
  put_u64(buf, config_hash);
  put_u64(buf, static_cast<uint64_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_u32(buf, static_cast<uint32_t>(name.size()));
    buf.append(name);
    put_u32(buf, static_cast<uint32_t>(t.shape().size()));
    for (int64_t d : t.shape()) put_u64(buf, static_cast<uint64_t>(d));
    for (double v : t.data()) put_f64(buf, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write on checkpoint: " + path);
}

CheckpointHeader load_checkpoint(ParamSet& params, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  Reader r(buf);
  if (r.bytes(4) != std::string(kMagic, 4)) {
    throw FormatError("bad checkpoint magic in " + path);
  }
  CheckpointHeader hdr;
  hdr.version = r.u32();
  if (hdr.version != kVersion) {
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(hdr.version));
  }
  hdr.seed = r.u64();
  hdr.config_hash = r.u64();
  uint64_t count = r.u64();
  if (count != params.size()) {
    throw MismatchError("checkpoint holds " + std::to_string(count) +
                        " parameters, model has " +
                        std::to_string(params.size()));
  }
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t nlen = r.u32();
    std::string name = r.bytes(nlen);
    if (!params.contains(name)) {
      throw MismatchError("checkpoint parameter '" + name +
                          "' not present in model");
    }
    Tensor& t = params.at(name);
    uint32_t rank = r.u32();
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int64_t>(r.u64());
    if (shape != t.shape()) {
      throw MismatchError("checkpoint parameter '" + name + "' has shape " +
                          shape_str(shape) + ", model expects " +
                          shape_str(t.shape()));
    }
    auto& data = t.data();
    for (size_t j = 0; j < data.size(); ++j) data[j] = r.f64();
  }
  return hdr;
}

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for checksum: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  return fnv1a(buf.data(), buf.size());
}

}  // namespace pbench::ad
