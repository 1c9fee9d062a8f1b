#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hazgam {

// Output channels: PGA, PGV, then PSA at 25 oscillator periods.
inline constexpr std::size_t kNumChannels = 27;
inline constexpr std::size_t kNumPsaPeriods = 25;
inline constexpr std::size_t kPgaChannel = 0;
inline constexpr std::size_t kPgvChannel = 1;

inline constexpr std::array<double, kNumPsaPeriods> kPsaPeriods = {
    0.01, 0.02, 0.03, 0.04, 0.05, 0.075, 0.1, 0.12, 0.15, 0.17, 0.2, 0.25, 0.3,
    0.4,  0.5,  0.6,  0.7,  0.8,  1.0,   1.25, 1.5, 2.0,  3.0,  4.0, 5.0};

using Spectrum = std::array<double, kNumChannels>;

/// Channel label as used in flatfile columns, e.g. "pga", "pgv", "psa_0p075".
std::string channel_name(std::size_t channel);

/// Channel index for a PSA period in seconds; throws DomainError if the period
/// is not one of the 25 tabulated periods.
std::size_t psa_channel(double period_s);

/// Period in seconds for PSA channels; PGA reports 0 and PGV reports -1.
double channel_period(std::size_t channel);

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class RowError : public Error {
public:
    RowError(std::string what, std::vector<std::size_t> rows)
        : Error(std::move(what)), rows_(std::move(rows)) {}
    const std::vector<std::size_t>& rows() const noexcept { return rows_; }

private:
    std::vector<std::size_t> rows_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class FitError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// splitmix64 finalizer; used to derive independent stream seeds from one
// top-level seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

using Rng = std::mt19937_64;

// Portable helpers: std::uniform_*_distribution output is library specific,
// these are not.
double uniform01(Rng& rng);
std::size_t uniform_index(Rng& rng, std::size_t n);
double standard_normal(Rng& rng);

template <class T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(rng, i);
        std::swap(v[i - 1], v[j]);
    }
}

/// Writes `contents` to `path` via a sibling temporary file and rename.
void write_file_atomic(const std::string& path, std::string_view contents);
std::string read_file(const std::string& path);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

}  // namespace hazgam
