#pragma once

// Counter-based seeding: every (root seed, agent, iteration, stream, column)
// tuple maps to an independent engine, so draws do not depend on the order in
// which work items run.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mra {

enum class Stream : std::uint64_t {
  value_direction = 1,
  price_perturbation = 2,
  heuristic_sampling = 3,
  generator = 4,
};

std::uint64_t splitmix64(std::uint64_t x);

// Folds the key words into one 64-bit seed.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> key);

inline std::mt19937_64 substream(std::uint64_t root, std::initializer_list<std::uint64_t> key) {
  return std::mt19937_64(derive_seed(root, key));
}

}  // namespace mra
