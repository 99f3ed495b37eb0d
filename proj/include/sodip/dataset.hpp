#pragma once

#include "sodip/common.hpp"

#include <array>

namespace sodip {

// ---------------------------------------------------------------------------
// Descriptor schema for RIG-style tabular data: 9 categorical descriptors,
// 11 numeric descriptors with units and validity ranges, one target.
// ---------------------------------------------------------------------------

constexpr int kNumCategorical = 9;
constexpr int kNumNumeric = 11;

struct NumericField {
    std::string name;
    std::string unit;
    double lower = 0.0;
    double upper = std::numeric_limits<double>::infinity();
    // Cells reading "None"/"none"/"" parse as 0 for fields that describe an
    // optional component (additive and solvent molecular weight / volume).
    bool none_is_zero = false;
};

struct DescriptorSchema {
    std::array<std::string, kNumCategorical> categorical_names;
    std::array<NumericField, kNumNumeric> numeric_fields;
    std::string target_name;
    double target_lower = 0.0;
    double target_upper = 1000.0;

    static DescriptorSchema rig_default();

    // Enforces 20 distinct descriptor names + 1 target and sane ranges.
    void validate() const;

    int categorical_index(const std::string& name) const;
    int numeric_index(const std::string& name) const;
};

// Indices into the default schema's numeric block.
enum NumericSlot : int {
    kSize = 0,
    kMwBase = 1,
    kMwMonomer = 2,
    kMwSolvent = 3,
    kMwAdditive = 4,
    kDose = 5,
    kTemp = 6,
    kTime = 7,
    kMonomerConc = 8,
    kSolventConc = 9,
    kAdditiveConc = 10,
};

enum CategoricalSlot : int {
    kFilm = 0,
    kMonomer = 1,
    kBasePolymer = 2,
    kMorphology = 3,
    kSupplier = 4,
    kMethod = 5,
    kSource = 6,
    kSolvent = 7,
    kAdditive = 8,
};

struct RigRecord {
    std::array<std::string, kNumCategorical> categoricals;  // "" encodes None
    std::array<double, kNumNumeric> numerics{};
    double target = 0.0;
};

struct Dataset {
    DescriptorSchema schema;
    std::vector<RigRecord> records;
    std::string provenance;

    Index size() const { return static_cast<Index>(records.size()); }

    // Numeric descriptors as an n x 11 matrix in schema order.
    Matrix numeric_matrix() const;
    Vector target_vector() const;

    // Content hash over all cells, used for archive provenance.
    std::uint64_t content_hash() const;
};

// ---------------------------------------------------------------------------
// CSV ingestion. Header row must contain every schema column (case
// insensitive, any order). Errors name the offending cell.
// ---------------------------------------------------------------------------

Dataset parse_dataset(const std::string& csv_text, const DescriptorSchema& schema);

// Lenient variant for prediction inputs: the target column may be absent, in
// which case targets are NaN.
Dataset parse_records(const std::string& csv_text, const DescriptorSchema& schema);

// Inverse of parse_dataset: numeric cells at 12 significant digits,
// categorical cells byte-exact.
std::string write_csv(const Dataset& dataset);

void validate_record(const RigRecord& record, const DescriptorSchema& schema,
                     Index row_for_messages = -1, bool check_target = true);

// ---------------------------------------------------------------------------
// Canonical text-key serialization of the categorical block plus the
// discrete-ish numerics (size, solvent and additive volume fractions) in
// fixed order, matching the literature serialization these datasets use.
// ---------------------------------------------------------------------------

std::string build_text_key(const RigRecord& record);

// Number formatting used inside text keys and CSV output: shortest decimal
// text that round-trips at the requested precision.
std::string format_number(double value, int significant_digits = 12);

// ---------------------------------------------------------------------------
// Categorical encoders. Deterministic: equal inputs give bit-identical
// vectors. The hashing encoder is the built-in implementation; the interface
// leaves room for external embedding providers.
// ---------------------------------------------------------------------------

class CategoricalEncoder {
public:
    virtual ~CategoricalEncoder() = default;
    virtual Index dimension() const = 0;
    virtual Vector encode(const RigRecord& record) const = 0;
};

// Sign-hashing of the text key's tokens: each token lands in one bucket with
// a +/-1 sign, and the result is L2-normalized when nonzero.
Vector hashing_encode(const std::string& key, Index dimension, std::uint64_t seed);

class HashingEncoder final : public CategoricalEncoder {
public:
    HashingEncoder(Index dimension, std::uint64_t seed);

    Index dimension() const override { return dimension_; }
    Vector encode(const RigRecord& record) const override;
    std::uint64_t seed() const { return seed_; }

private:
    Index dimension_;
    std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Seeded train/val/test split. The test block is carved first from a seeded
// shuffle (|test| = floor(n * test_frac), matching how these corpora are
// reported), then train and val from the remainder.
// ---------------------------------------------------------------------------

struct SplitPlan {
    std::vector<Index> train_idx;
    std::vector<Index> val_idx;
    std::vector<Index> test_idx;
    std::uint64_t seed = 0;
};

SplitPlan split(const Dataset& dataset, double train_frac, double val_frac,
                std::uint64_t seed);

Dataset subset(const Dataset& dataset, const std::vector<Index>& idx);

}  // namespace sodip
