#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fbmkde {

using Seed = std::uint64_t;

//! Hash domains keep independent seed streams disjoint.
enum class SeedDomain : std::uint32_t {
  component = 0x636f6d70,  // per-coordinate fGn streams
  experiment = 0x65787072, // Monte Carlo replicates
  oracle = 0x6f72636c,     // long-run ground truth
  sampling = 0x736d706c,   // drift checks and randomized suites
  brownian = 0x62726f77,   // two-sided Brownian grids
};

//! Deterministic sub-seed for (base, domain, indices...).
inline Seed derive_seed(Seed base, SeedDomain domain, std::initializer_list<std::uint64_t> indices = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(3 + 2 * indices.size());
  words.push_back(static_cast<std::uint32_t>(base));
  words.push_back(static_cast<std::uint32_t>(base >> 32));
  words.push_back(static_cast<std::uint32_t>(domain));
  for (auto i : indices) {
    words.push_back(static_cast<std::uint32_t>(i));
    words.push_back(static_cast<std::uint32_t>(i >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<Seed>(out[1]) << 32) | out[0];
}

using Engine = std::mt19937_64;

inline std::vector<double> standard_normals(Engine& eng, std::size_t n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> z(n);
  for (auto& v : z) v = dist(eng);
  return z;
}

} // namespace fbmkde
