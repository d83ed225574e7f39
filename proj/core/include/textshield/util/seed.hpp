#pragma once

#include <cstdint>
#include <string_view>

namespace textshield {

// FNV-1a, 64-bit. Used for config hashes and seed derivation.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

// Component seed = splitmix64(master ^ fnv1a64(label)). Stable across runs and
// platforms, so sub-experiments can be reproduced in isolation.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace textshield
