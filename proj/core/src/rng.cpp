#include "causalma/rng.hpp"

namespace causalma {
namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords) noexcept {
  std::uint64_t h = splitmix64(base ^ 0x6a09e667f3bcc909ULL);
  std::uint64_t position = 1;
  for (std::uint64_t c : coords) {
    h = splitmix64(h ^ splitmix64(c + 0x3c6ef372fe94f82bULL * position));
    ++position;
  }
  return h;
}

void resample_into(Rng& rng, std::span<const std::size_t> source, std::vector<std::size_t>& out) {
  out.resize(source.size());
  if (source.empty()) return;
  std::uniform_int_distribution<std::size_t> pick(0, source.size() - 1);
  for (auto& slot : out) slot = source[pick(rng)];
}

std::vector<std::size_t> resample(Rng& rng, std::span<const std::size_t> source) {
  std::vector<std::size_t> out;
  resample_into(rng, source, out);
  return out;
}

}  // namespace causalma
