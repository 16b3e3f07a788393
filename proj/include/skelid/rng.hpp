#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "skelid/common.hpp"

namespace skelid {

// Counter-based pseudo-random stream: draw i of stream `key` is a pure
// function mix(key, i). Streams for unrelated purposes are derived from the
// run seed plus purpose/name strings, so adding a consumer somewhere never
// shifts the draws seen elsewhere.
class CounterRng {
  public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    static CounterRng from(std::uint64_t seed, std::string_view purpose) {
        return CounterRng(derive_key({seed, fnv1a64(purpose)}));
    }
    static CounterRng from(std::uint64_t seed, std::string_view purpose, std::uint64_t index) {
        return CounterRng(derive_key({seed, fnv1a64(purpose), index}));
    }

    std::uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++)); }

    // Uniform in [0, 1): 53 mantissa bits.
    double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_uniform(); }

    // Standard normal via Box-Muller; pairs are generated lazily.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_uniform();
        double u2 = next_uniform();
        // Guard against log(0).
        while (u1 <= 0.0) u1 = next_uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) throw ValidationError("next_below: n must be positive");
        std::uint64_t threshold = (0ULL - n) % n;  // 2^64 mod n
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Fisher-Yates; spelled out because std::shuffle's draw pattern is
    // implementation-defined and outputs here must be platform-stable.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace skelid
