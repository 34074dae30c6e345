#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace lbt {

using Vector = Eigen::VectorXd;
/// Row-major so that one sample is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Seed = std::uint64_t;

/// Child seed for a named sub-stream. Stable across platforms (splitmix64 over
/// an FNV-1a hash of the tag).
Seed derive_seed(Seed parent, std::string_view tag);
Seed derive_seed(Seed parent, std::uint64_t index);

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 1469598103934665603ULL);

}  // namespace lbt
