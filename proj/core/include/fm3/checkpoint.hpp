// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary layout (little endian):
//   "FM3C" | u32 version | u64 n | n bytes of JSON snapshot
//   u64 tensor count | per tensor: u32 name length, name, u32 rank,
//                      u64 extents[rank], f64 values
//   32-byte SHA-256 of everything before it

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fm3/config.hpp"
#include "fm3/model.hpp"

namespace fm3 {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
  RunConfig config;
  Model model;
};

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const RunConfig& cfg);
LoadedCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Model& model, const RunConfig& cfg, const std::string& path);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace fm3
