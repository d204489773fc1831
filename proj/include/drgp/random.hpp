#ifndef DRGP_RANDOM_HPP
#define DRGP_RANDOM_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace drgp {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30U)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27U)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31U);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  return mix_seed(mix_seed(parent) ^ (stream * 0xd6e8feb86659fd93ULL));
}

// FNV-1a over a label, so streams can be named ("ps", "a-prbf", ...).
constexpr std::uint64_t label_hash(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) {
  return derive_seed(parent, label_hash(label));
}

inline double standard_normal(Rng &rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline double uniform01(Rng &rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

} // namespace drgp

#endif // DRGP_RANDOM_HPP
