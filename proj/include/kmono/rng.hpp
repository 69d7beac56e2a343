#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

#include <boost/random/beta_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace kmono {

using Engine = std::mt19937_64;

//! splitmix64 finalizer.
constexpr std::uint64_t
mix64(std::uint64_t z)
{
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

//! FNV-1a, used to fold string coordinates (density ids etc.) into seeds.
constexpr std::uint64_t
hash_string(std::string_view s)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

//! Derives a task seed from a master seed and task coordinates. The result
//! depends only on the values, so work can be scheduled in any order.
inline std::uint64_t
derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coords)
{
  std::uint64_t s = mix64(master);
  for (auto c : coords)
    s = mix64(s ^ mix64(c + 0x632be59bd9b4e019ULL));
  return s;
}

//! Uniform on the open interval (0,1).
inline double
uniform_open(Engine& rng)
{
  for (;;) {
    // 53 random bits
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (u > 0.0)
      return u;
  }
}

inline double
std_normal(Engine& rng)
{
  boost::random::normal_distribution<double> d(0.0, 1.0);
  return d(rng);
}

inline double
beta_draw(Engine& rng, double a, double b)
{
  boost::random::beta_distribution<double> d(a, b);
  double v = d(rng);
  // keep strictly inside (0,1); Beta(1+n,1) with large n can round to 1
  if (v <= 0.0)
    v = 0x1.0p-1074;
  if (v >= 1.0)
    v = 1.0 - 0x1.0p-53;
  return v;
}

} // namespace kmono
