#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace apportion {

// Counter-based generator Philox4x64-10 (Salmon, Moraes, Dror, Shaw, SC'11).
// Output for (counter, key) matches the reference Random123 implementation.
struct Philox4x64 {
  using Block = std::array<std::uint64_t, 4>;
  using Key = std::array<std::uint64_t, 2>;
  static Block generate(Block counter, Key key);
};

inline constexpr std::string_view kRandomStreamVersion = "philox4x64-10/stream-v1";

// Mixes a path of integers (purpose tag, indices...) into a 64-bit stream id.
std::uint64_t derive_stream(std::initializer_list<std::uint64_t> path);

// An independent random stream: key = (seed, 0), counter = (block, 0, stream, 0).
// Satisfies UniformRandomBitGenerator.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::uint64_t stream);
  RandomStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path)
      : RandomStream(seed, derive_stream(path)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()();

  // Uniform on the open interval (0, 1).
  double uniform();
  double normal() { return normal_(*this); }
  // log of a Gamma(shape, 1) draw; stays finite for tiny shapes.
  double log_gamma_variate(double shape);

 private:
  Philox4x64::Key key_;
  Philox4x64::Block counter_;
  Philox4x64::Block buffer_{};
  int used_ = 4;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace apportion
