#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace codelid {

// Length in bytes of the UTF-8 sequence starting with `lead`; invalid lead
// bytes count as a single byte so malformed input never stalls a scan.
std::size_t utf8_sequence_length(unsigned char lead);

// Number of code points, counting each malformed byte as one.
std::size_t utf8_length(std::string_view text);

// Byte offset just past the first `max_code_points` code points.
std::size_t utf8_prefix_bytes(std::string_view text, std::size_t max_code_points);

// 64-bit FNV-1a, used for config fingerprints in run manifests.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t value);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace codelid
