#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pbench/tensor.hpp"

namespace pbench::ad {

// Named trainable tensors with stable insertion order (checkpoints and the
// optimizer both iterate in this order).
class ParamSet {
 public:
  Tensor add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  size_t size() const { return items_.size(); }
  int64_t total_numel() const;
  void zero_grad();

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> index_;
};

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t step_count = 0;
  // Per-parameter moment buffers, allocated on first step.
  std::unordered_map<std::string, std::vector<double>> first_moment;
  std::unordered_map<std::string, std::vector<double>> second_moment;
};

// One Adam update with bias correction. Gradients are left untouched;
// the caller zeroes them.
void adam_step(ParamSet& params, AdamState& state);

// Binary checkpoint: versioned header followed by name -> shape -> flat
// little-endian doubles for every parameter, in insertion order.
void save_checkpoint(const ParamSet& params, const std::string& path,
                     uint64_t seed, uint64_t config_hash);

struct CheckpointHeader {
  uint32_t version = 0;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
};

// Loads values in place; the parameter set must already hold tensors with
// matching names and shapes.
CheckpointHeader load_checkpoint(ParamSet& params, const std::string& path);

// FNV-1a over a file's bytes; used to fingerprint artifacts.
uint64_t file_checksum(const std::string& path);
uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace pbench::ad
