// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "fm3/tensor.hpp"

namespace fm3 {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(const Digest& d);

/// SHA-256 over name, shape and little-endian value bytes of each tensor, in key order.
Digest digest_tensors(const std::map<std::string, Tensor>& tensors);

/// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::span<const std::uint8_t> bytes);
  Digest finish();

 private:
  void* ctx_;
};

}  // namespace fm3
