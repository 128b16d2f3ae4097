// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ifal/nn/param_store.hpp"

namespace ifal::nn {

// Binary layout (all integers little-endian):
//   "IFAL" | u32 version | u32 count |
//   count x ( u32 name_len | name | u8 dtype | u8 frozen | u32 rank | rank x u64 dim | f64 payload )
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 1;

struct CheckpointEntry {
  std::string name;
  bool frozen = false;
  Tensor value;
};

// Serializes every parameter whose name starts with `prefix`, in sorted name order.
std::string encode_checkpoint(const ParamStore& store, std::string_view prefix = "");
std::vector<CheckpointEntry> decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const ParamStore& store, std::string_view prefix = "");
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);

// Copies entries into existing parameters of the same name and shape, including
// freeze flags. Throws FormatError on unknown names or mismatched shapes.
void restore(ParamStore& store, const std::vector<CheckpointEntry>& entries);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ifal::nn
