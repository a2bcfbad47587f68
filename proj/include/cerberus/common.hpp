#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cerberus {

// Row-major so that one user / word / context embedding is a contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or unknown configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An upstream artifact is absent or was produced under a different configuration.
class MissingArtifact : public Error {
public:
    using Error::Error;
};

std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t h = 14695981039346656037ull);

/// Per-stage seed: every random stream in a run derives from one top-level seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

std::string hex64(std::uint64_t v);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace cerberus
