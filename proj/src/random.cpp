#include "apportion/random.hpp"

#include <cmath>

namespace apportion {

namespace {

constexpr std::uint64_t kM0 = 0xD2E7470EE14C6C93ULL;
constexpr std::uint64_t kM1 = 0xCA5A826395121157ULL;
constexpr std::uint64_t kW0 = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kW1 = 0xBB67AE8584CAA73BULL;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
  const unsigned __int128 prod = static_cast<unsigned __int128>(a) * b;
  hi = static_cast<std::uint64_t>(prod >> 64);
  lo = static_cast<std::uint64_t>(prod);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

Philox4x64::Block Philox4x64::generate(Block c, Key k) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      k[0] += kW0;
      k[1] += kW1;
    }
    std::uint64_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, c[0], hi0, lo0);
    mulhilo(kM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
  return c;
}

std::uint64_t derive_stream(std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = 0x5EEDF00DULL;
  for (std::uint64_t v : path) h = splitmix64(h ^ splitmix64(v));
  return h;
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream)
    : key_{seed, 0}, counter_{0, 0, stream, 0} {}

RandomStream::result_type RandomStream::operator()() {
  if (used_ == 4) {
    buffer_ = Philox4x64::generate(counter_, key_);
    if (++counter_[0] == 0) ++counter_[1];
    used_ = 0;
  }
  return buffer_[static_cast<std::size_t>(used_++)];
}

double RandomStream::uniform() {
  // 53 random bits, shifted off zero.
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::log_gamma_variate(double shape) {
  if (shape >= 1.0) {
    std::gamma_distribution<double> g(shape, 1.0);
    return std::log(g(*this));
  }
  // Gamma(a) = Gamma(a + 1) * U^{1/a}
  std::gamma_distribution<double> g(shape + 1.0, 1.0);
  const double big = g(*this);
  return std::log(big) + std::log(uniform()) / shape;
}

}  // namespace apportion
