#include "ckmm/rng.hpp"

#include "ckmm/margins.hpp"

namespace ckmm {

double Rng::normal() noexcept { return normal_quantile(uniform()); }

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
  if (bound <= 1) return 0;
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = max() - max() % bound;
  std::uint64_t x = (*this)();
  while (x >= limit) x = (*this)();
  return x % bound;
}

}  // namespace ckmm
