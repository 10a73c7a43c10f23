#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace zigan {

/// Generator for one (seed, stream) pair. Every seeded sampling site takes its
/// own stream index so results never depend on call order or worker count.
std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t stream);

/// Unbiased integer in [0, bound). Implemented here rather than via
/// std::uniform_int_distribution so manifests are identical across standard
/// libraries.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);

template <typename T>
void shuffle_in_place(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

/// "U+4E00" style label, upper-case hex, at least four digits.
std::string codepoint_label(char32_t cp);
/// Parses "U+4E00", "u+4e00" or "0x4E00". Returns nullopt on anything else.
std::optional<char32_t> parse_codepoint(std::string_view text);

std::string utf8_encode(char32_t cp);
/// Decodes UTF-8 text; throws Error(Config) on malformed input.
std::vector<char32_t> utf8_decode(std::string_view text);

/// Writes through a sibling temporary file and renames it into place, so a
/// failure never leaves a partially written target behind.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

/// FNV-1a over raw bytes.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h = 1469598103934665603ULL);

}  // namespace zigan
