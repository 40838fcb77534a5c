#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace sdb {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for stream `index` of a run seeded with `base`.
constexpr std::uint64_t stream_seed(std::uint64_t base, std::uint64_t index) {
    return mix_seed(mix_seed(base) ^ (index + 1) * 0xd1b54a32d192ed03ULL);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(mix_seed(seed)) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal_(engine_);
        return v;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace sdb
