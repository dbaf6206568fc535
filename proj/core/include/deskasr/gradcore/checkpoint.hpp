#pragma once

#include <string>
#include <utility>
#include <vector>

#include "deskasr/gradcore/tensor.hpp"

namespace deskasr::gradcore {

// Named parameter collection used for checkpointing and optimizer wiring.
struct ParamMap {
  std::vector<std::pair<std::string, Tensor>> items;

  void add(std::string name, Tensor t) { items.emplace_back(std::move(name), std::move(t)); }
  void append(const ParamMap& other, const std::string& prefix = "");
  Tensor* find(const std::string& name);
  std::vector<Tensor> tensors() const;
  std::size_t total_size() const;
  void zero_grads();
};

// Checkpoint container, version 1. Line-oriented text:
//   deskasr-ckpt-v1
//   count <N>
// then per parameter two lines:
//   <name> <ndim> <d0> <d1> ...
//   <v0> <v1> ...            (C hexfloat, bit-exact round trip)
void save_checkpoint(const std::string& path, const ParamMap& params);

// Loads into an existing map; every stored name must exist with an identical
// shape, and every map entry must be present in the file.
void load_checkpoint(const std::string& path, ParamMap& params);

// Reads a checkpoint into a fresh map (shapes taken from the file).
ParamMap read_checkpoint(const std::string& path);

}  // namespace deskasr::gradcore
