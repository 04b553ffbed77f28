// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fassl/param_tree.hpp"

namespace fassl::checkpoint {

inline constexpr char kMagic[4] = {'F', 'S', 'S', 'L'};
inline constexpr std::uint16_t kVersion = 1;

/// Layout (all integers little-endian):
///   "FSSL" | u16 version | u32 entry count |
///   per entry: u16 name length, UTF-8 name, u8 rank, u32 dims[rank], f64 payload.
/// Entries are written in canonical name order, so equal trees give equal bytes.
std::vector<std::uint8_t> to_bytes(const ParamTree& params);
ParamTree from_bytes(const std::vector<std::uint8_t>& bytes);

void save(const ParamTree& params, const std::filesystem::path& path);
ParamTree load(const std::filesystem::path& path);

}  // namespace fassl::checkpoint
