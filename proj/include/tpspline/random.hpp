#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tps {

/// splitmix64 finaliser; used to spread (seed, index) pairs into engine seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seedable random stream. Independent child streams are derived from a master
/// seed and an index path, so results do not depend on scheduling order.
class RandomStream {
public:
  explicit RandomStream(std::uint64_t seed);

  static RandomStream derive(std::uint64_t master, std::initializer_list<std::uint64_t> path);

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Inverse transform: -ln(1 - U) / rate.
  double exponential(double rate);
  /// Standard normal via Box-Muller; values come in cached pairs.
  double normal();

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tps
