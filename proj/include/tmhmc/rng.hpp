#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tmhmc {

// Deterministic random stream. The generator is std::mt19937_64 (bit-stable
// across standard libraries); the variate transforms are spelled out here
// because std::normal_distribution and friends are implementation-defined,
// which would break byte-identical reruns across toolchains.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Independent stream for a replica chain: the chain index is mixed into
    // the seed through splitmix64 so streams do not overlap trivially.
    static Rng for_chain(std::uint64_t seed, std::uint64_t chain) {
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (chain + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

    // Uniform on the open interval (0, 1).
    double uniform() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via the Marsaglia polar method (caches the spare).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double a, b, s;
        do {
            a = 2.0 * uniform() - 1.0;
            b = 2.0 * uniform() - 1.0;
            s = a * a + b * b;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = b * m;
        have_spare_ = true;
        return a * m;
    }

    // Gamma(shape, scale) by Marsaglia-Tsang squeeze; shape < 1 handled by the
    // boost relation Gamma(a) = Gamma(a+1) * U^{1/a}.
    double gamma(double shape, double scale) {
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
        }
    }

    double chisq(double df) { return gamma(0.5 * df, 2.0); }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace tmhmc
