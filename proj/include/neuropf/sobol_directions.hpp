#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace neuropf::detail {

inline constexpr std::size_t kSobolMaxDim = 1111;

// Primitive polynomial (leading and constant bits included) and initial
// direction numbers m_1..m_s for one dimension.
struct SobolDimension {
  std::uint32_t poly;
  std::array<std::uint32_t, 18> m;
};

extern const std::array<SobolDimension, kSobolMaxDim> kSobolTable;

}  // namespace neuropf::detail
