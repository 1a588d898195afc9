// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "malk/linalg/matrix.hpp"

namespace malk {

/// Seeded random stream that yields the same values on every platform.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard distributions are implementation-defined, so
/// uniforms are built directly from the top 53 bits and normals use the
/// Box-Muller transform.
class Rng {
public:
    static constexpr std::string_view kAlgorithm = "mt19937_64/u53/box-muller";

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    // Uniform on [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    // Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

    // Independent child seed for a named sub-stream (splitmix64 finaliser).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) noexcept;

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// He-uniform initialisation: entries i.i.d. on [-b, b] with b = sqrt(6 / cols)
/// (fan-in is the column count).
Matrix kaiming_uniform(std::size_t rows, std::size_t cols, Rng& rng);

double kaiming_bound(std::size_t fan_in);

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng);
Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

}  // namespace malk
