#include "causalma/parallel.hpp"

namespace causalma {

unsigned resolve_workers(unsigned requested) noexcept {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace causalma
