#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ssrtb {

// All randomness flows from one root seed through named sub-streams, so the
// sources (day generation, user response, exploration, weight init) can be
// isolated and replayed independently.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(gen_);
    }
    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }
    // inclusive bounds
    int uniform_int(int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(gen_);
    }
    bool bernoulli(double p) { return uniform() < p; }

    double exponential(double mean) {
        return std::exponential_distribution<double>(1.0 / mean)(gen_);
    }
    double normal(double mu, double sigma) {
        return std::normal_distribution<double>(mu, sigma)(gen_);
    }
    double lognormal(double mu, double sigma) {
        return std::lognormal_distribution<double>(mu, sigma)(gen_);
    }
    long poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        return std::poisson_distribution<long>(lambda)(gen_);
    }
    double beta(double a, double b) {
        std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
        double x = ga(gen_), y = gb(gen_);
        return x / (x + y);
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

// FNV-1a over (seed, name, index); used to derive independent sub-stream seeds.
inline std::uint64_t substream_seed(std::uint64_t root, std::string_view name,
                                    std::uint64_t index = 0) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffu;
            h *= 1099511628211ull;
        }
    };
    mix(root);
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    mix(index);
    return h;
}

inline Rng substream(std::uint64_t root, std::string_view name,
                     std::uint64_t index = 0) {
    return Rng(substream_seed(root, name, index));
}

} // namespace ssrtb
