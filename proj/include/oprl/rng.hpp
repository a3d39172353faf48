#pragma once
#include <cmath>
#include <cstdint>
#include <initializer_list>

#include <Eigen/Core>

namespace oprl {

// Deterministic random streams. Sampling avoids std:: distributions so that
// byte-identical output does not depend on the standard library version.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    s0_ = splitmix(seed ^ 0x9e3779b97f4a7c15ull);
    s1_ = splitmix(s0_);
    if (s0_ == 0 && s1_ == 0) s0_ = 1;
  }

  // Named substream: hashes (seed, parts...) so that e.g. the stream for
  // (iteration, h, a, a') is independent of how many draws other streams took.
  static Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t x = splitmix(seed);
    for (std::uint64_t p : parts) x = splitmix(x ^ splitmix(p + 0x632be59bd9b4e019ull));
    return Rng(x);
  }

  std::uint64_t next_u64() {  // xorshift128+
    std::uint64_t x = s0_, y = s1_;
    s0_ = y;
    x ^= x << 23;
    s1_ = x ^ y ^ (x >> 17) ^ (y >> 26);
    return s1_ + y;
  }

  double uniform() {  // [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  int uniform_int(int n) {  // [0, n)
    int i = static_cast<int>(uniform() * n);
    return i < n ? i : n - 1;
  }

  double normal() {  // Box-Muller, pair cached
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  // index ~ p / sum(p); p nonnegative, not necessarily normalized
  int categorical(const Eigen::VectorXd& p) {
    double u = uniform() * p.sum();
    double acc = 0.0;
    int last = 0;
    for (int i = 0; i < p.size(); ++i) {
      if (p[i] <= 0.0) continue;
      acc += p[i];
      last = i;
      if (u < acc) return i;
    }
    return last;  // u landed on accumulated round-off
  }

 private:
  std::uint64_t s0_ = 0, s1_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;

  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }
};

}  // namespace oprl
