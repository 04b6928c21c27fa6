#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace dysarar {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// T observations of an N-vector, stored one row per period.
using PanelMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// T regressor slices, each N x K. K may be zero.
using RegressorPanel = std::vector<Matrix>;

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent substreams from a base seed
// so that replication b gets the same draws regardless of scheduling.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t substream_seed(std::uint64_t base, std::uint64_t stream) noexcept {
    return mix_seed(mix_seed(base) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t substream_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) noexcept {
    return substream_seed(substream_seed(base, a), b);
}

inline Rng make_rng(std::uint64_t seed) { return Rng{mix_seed(seed)}; }

// Serial runs are the reference; parallel runs must reproduce them exactly.
enum class Execution { serial, parallel };

}  // namespace dysarar
