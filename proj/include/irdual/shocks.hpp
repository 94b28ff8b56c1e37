#pragma once

#include <cstdint>
#include <random>

#include "irdual/market_model.hpp"

namespace irdual {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Stream key for draw `index` of run `run` under `seed`. Independent of the
/// order in which draws are generated.
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t run, std::uint64_t index) {
  return detail::splitmix64(detail::splitmix64(detail::splitmix64(seed) ^ run) ^ index);
}

/// Base (non-negated) shock path for (seed, run, index).
inline ShockPath draw_shocks(const ModelParams& p, std::uint64_t seed, std::uint64_t run, std::uint64_t index) {
  std::mt19937_64 gen(stream_key(seed, run, index));
  std::normal_distribution<double> normal(0.0, 1.0);
  ShockPath s{Mat(p.K, p.n), Mat(p.K, p.d), false};
  for (int k = 0; k < p.K; ++k) {
    for (int j = 0; j < p.n; ++j) s.Z(k, j) = normal(gen);
    for (int j = 0; j < p.d; ++j) s.Ztilde(k, j) = normal(gen);
  }
  return s;
}

inline ShockPath zero_shocks(const ModelParams& p) { return ShockPath{Mat::Zero(p.K, p.n), Mat::Zero(p.K, p.d), false}; }

}  // namespace irdual
