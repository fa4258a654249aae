#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedrec {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

/// Independent named stream derived from a master seed. The same
/// (seed, name) pair always yields the same generator state.
Rng derive_stream(std::uint64_t master_seed, std::string_view name);
Rng derive_stream(std::uint64_t master_seed, std::string_view name, std::uint64_t index);

}  // namespace fedrec
