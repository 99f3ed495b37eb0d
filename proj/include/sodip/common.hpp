#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sodip {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// Errors. One type per failure mode so callers can catch selectively; the
// message always names the offending input (cell, row, flag, ...).
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingColumn : Error { using Error::Error; };
struct BadNumeric : Error { using Error::Error; };
struct RangeViolation : Error { using Error::Error; };
struct TooFewRecords : Error { using Error::Error; };
struct NonFinite : Error { using Error::Error; };
struct OutOfImage : Error { using Error::Error; };
struct DegenerateSample : Error { using Error::Error; };
struct MissingMonomer : Error { using Error::Error; };
struct TooFewRows : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct BadFoldCount : Error { using Error::Error; };
struct BadCounts : Error { using Error::Error; };
struct SingularScale : Error { using Error::Error; };
struct NotPositiveDefinite : Error { using Error::Error; };
struct NoQualifyingCluster : Error { using Error::Error; };
struct EmptyResponsibilities : Error { using Error::Error; };
struct ObjectiveFailure : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct UnknownDescriptor : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };
struct CorruptArchive : Error { using Error::Error; };
struct SchemaViolation : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Deterministic random source. All randomness in the library flows through
// this class so results are reproducible bit-for-bit across runs; the raw
// mt19937_64 stream is mapped to doubles with fixed arithmetic instead of
// the standard-library distributions, whose output is not pinned down by
// the standard.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), rejection sampled so every value is
    // equally likely.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Marsaglia's polar method. The cached spare is part
    // of the generator state, so sequences stay deterministic.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[uniform_int(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Deterministic stream splitting: derive an independent-looking seed for a
// sub-task (fold f, chain c, ...) from a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Scalar numerics shared across modules.
// ---------------------------------------------------------------------------

inline double log_sum_exp(const std::vector<double>& logs) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logs) mx = std::max(mx, v);
    if (!std::isfinite(mx)) return mx;
    double acc = 0.0;
    for (double v : logs) acc += std::exp(v - mx);
    return mx + std::log(acc);
}

inline double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

// Inverse standard-normal CDF: Acklam's rational approximation followed by
// one Halley refinement against erfc, good to full double precision.
double normal_quantile(double p);

// z such that P(|N(0,1)| <= z) = level, e.g. level 0.95 -> 1.95996...
inline double normal_two_sided_z(double level) {
    return normal_quantile(0.5 + 0.5 * level);
}

double sample_skewness(const Vector& values);

// FNV-1a 64-bit, the hash used for text keys and archive checksums.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), seed);
}

}  // namespace sodip
