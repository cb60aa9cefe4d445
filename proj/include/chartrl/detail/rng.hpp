#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace chartrl {

/// Uniform doubles in [0, 1) from the top 53 bits of mt19937_64, whose
/// output sequence is fixed by the standard (unlike the distributions).
class PortableRng {
 public:
  explicit PortableRng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::size_t categorical(const std::vector<double>& p) {
    const double u = uniform();
    double c = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      c += p[k];
      if (u < c) return k;
    }
    return p.size() - 1;
  }

 private:
  std::mt19937_64 engine_;
};

/// Fisher-Yates shuffle driven by PortableRng.
template <class T>
void portable_shuffle(std::vector<T>& v, PortableRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(v[i - 1], v[j < i ? j : i - 1]);
  }
}

}  // namespace chartrl
