#pragma once

// "VDCK" container: a flat, ordered list of named f64 arrays.
//   magic "VDCK" | u32 version | u32 count
//   per array: u32 name length | name bytes | u8 dtype (1 = f64) | u32 rank |
//              u32 extents[rank] | f64 payload, all little-endian

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vd/tensor.hpp"

namespace vd::ckpt {

inline constexpr std::uint32_t kVersion = 1;

using NamedArrays = std::vector<std::pair<std::string, ag::Array>>;

std::string serialize(const NamedArrays& arrays);
NamedArrays deserialize(const std::string& bytes);

void save(const NamedArrays& arrays, const std::filesystem::path& path);
NamedArrays load(const std::filesystem::path& path);

const ag::Array& find(const NamedArrays& arrays, const std::string& name);

}  // namespace vd::ckpt
