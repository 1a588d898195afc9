// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/linalg/random.hpp"

#include <cmath>
#include <numbers>

#include "malk/errors.hpp"

namespace malk {

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) throw InvalidInput("Rng::below: bound must be positive");
    // Rejection sampling keeps the result unbiased.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % bound;
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) noexcept {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double kaiming_bound(std::size_t fan_in) {
    if (fan_in == 0) throw InvalidInput("kaiming_bound: fan-in must be positive");
    return std::sqrt(6.0 / static_cast<double>(fan_in));
}

Matrix kaiming_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
    if (rows == 0 || cols == 0) throw InvalidInput("kaiming_uniform: dimensions must be positive");
    const double b = kaiming_bound(cols);
    return uniform_matrix(rows, cols, -b, b, rng);
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = rng.uniform(lo, hi);
    return m;
}

Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = stddev * rng.normal();
    return m;
}

}  // namespace malk
