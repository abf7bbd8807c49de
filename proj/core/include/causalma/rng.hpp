#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace causalma {

using Rng = std::mt19937_64;

// Mixes a base seed with a sequence of stream coordinates (scenario id,
// replication index, bootstrap index, ...) into a new 64-bit seed. The result
// depends only on the values, never on call order or thread, so every
// (seed, coordinates) pair names one reproducible stream.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords) noexcept;

inline Rng make_stream(std::uint64_t base, std::initializer_list<std::uint64_t> coords) {
  return Rng(derive_seed(base, coords));
}

// Draws source.size() indices uniformly with replacement from `source`.
void resample_into(Rng& rng, std::span<const std::size_t> source, std::vector<std::size_t>& out);

std::vector<std::size_t> resample(Rng& rng, std::span<const std::size_t> source);

}  // namespace causalma
