#include "linkscope/checksum.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <fstream>

#include "linkscope/error.hpp"

namespace linkscope {

namespace {
constexpr std::uint64_t kPrime = 0x100000001b3ULL;
}

void Fnv1a::update(std::string_view bytes) {
  for (unsigned char c : bytes) {
    state_ ^= c;
    state_ *= kPrime;
  }
}

void Fnv1a::update(std::uint64_t value) {
  for (int i = 0; i < 8; ++i) {
    state_ ^= (value >> (8 * i)) & 0xffU;
    state_ *= kPrime;
  }
}

void Fnv1a::update(std::span<const double> values) {
  for (double v : values) update(std::bit_cast<std::uint64_t>(v));
}

std::string Fnv1a::hex() const { return to_hex(state_); }

std::uint64_t fnv1a(std::string_view bytes) {
  Fnv1a h;
  h.update(bytes);
  return h.digest();
}

std::string to_hex(std::uint64_t value) {
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(value));
  return std::string(buf.data(), 16);
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot read " + path.string());
  Fnv1a h;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return h.hex();
}

}  // namespace linkscope
