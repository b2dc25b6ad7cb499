#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rtrrl {

using Rng = std::mt19937_64;

/// Seed for the named substream of a run seed. Every random draw in a run
/// comes from one of these streams ("init", "feedback", "env", "policy",
/// "eval_env"), never from ambient entropy.
std::uint64_t substream_seed(std::uint64_t run_seed, std::string_view name);

inline Rng make_rng(std::uint64_t run_seed, std::string_view name) {
  return Rng(substream_seed(run_seed, name));
}

}  // namespace rtrrl
