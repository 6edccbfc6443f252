#pragma once

#include <cstdint>
#include <string_view>

#include "linkscope/checksum.hpp"

namespace linkscope::detail {

// Stable sub-seed for a named purpose, so unrelated random streams never share state.
template <class... Parts>
std::uint64_t derive_seed(std::uint64_t base, const Parts&... parts) {
  Fnv1a h;
  h.update(base);
  ((h.update(std::string_view(parts)), h.update(std::string_view("\x1f", 1))), ...);
  return h.digest();
}

}  // namespace linkscope::detail
