#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace linkscope {

// 64-bit FNV-1a. Used for manifest checksums and per-link RNG stream derivation;
// stable across platforms and runs.
class Fnv1a {
 public:
  void update(std::string_view bytes);
  void update(std::span<const double> values);
  void update(std::uint64_t value);
  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t fnv1a(std::string_view bytes);
std::string to_hex(std::uint64_t value);

// Checksum of a file's bytes. Throws IngestError if unreadable.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace linkscope
