#pragma once

#include "sodip/pipeline.hpp"

#include <map>

namespace sodip {

// ---------------------------------------------------------------------------
// Metrics, calibration and cluster reporting, response-surface and
// descriptor-effect exports.
// ---------------------------------------------------------------------------

struct Metrics {
    double mae = 0.0;
    double rmse = 0.0;
    double r2 = std::numeric_limits<double>::quiet_NaN();
    bool r2_defined = false;  // false when the targets have zero variance
    Index n = 0;
};

Metrics metrics(const Vector& y, const Vector& yhat);

struct CalibrationReport {
    double level = 0.95;
    double coverage = 0.0;
    double mean_halfwidth = 0.0;
    // cluster id -> (coverage, count); present when cluster tags are given.
    std::map<int, std::pair<double, Index>> per_cluster;
};

CalibrationReport interval_coverage(const Vector& y, const Vector& mu, const Vector& var,
                                    double level,
                                    const std::vector<int>& cluster_tags = {});

struct ClusterReportRow {
    int cluster_id = -1;
    Index n = 0;
    Metrics metrics;
    double response_min = 0.0;
    double response_max = 0.0;
    std::array<Index, 20> histogram{};  // targets binned over [min, max]
    std::string stability;              // "stable" | "partial" | "unstable"
};

struct ClusterReport {
    std::vector<ClusterReportRow> rows;
};

ClusterReport cluster_report(const FittedPipeline& pipeline, const Dataset& eval_set);

struct SurfaceRow {
    Vector point;  // varied-dimension coordinates
    double mean = 0.0;
    double var = 0.0;
    double pi_lower = 0.0;
    double pi_upper = 0.0;
    int dominant_cluster = -1;
};

enum class SurfaceMode { Lattice, Lhc };

struct SurfaceSpec {
    // Varied numeric descriptors (schema names) with ranges.
    std::vector<std::string> varied_names;
    std::vector<std::pair<double, double>> varied_ranges;
    // Values for every remaining descriptor, categorical and numeric.
    RigRecord base;
    SurfaceMode mode = SurfaceMode::Lhc;
    // Lhc: total points. Lattice: points per varied dimension.
    Index n = 2000;
    std::uint64_t seed = 0;
};

struct SurfaceGrid {
    std::vector<std::string> varied_names;
    std::vector<std::pair<double, double>> varied_ranges;
    std::vector<SurfaceRow> rows;
};

SurfaceGrid surface_grid(const FittedPipeline& pipeline, const SurfaceSpec& spec);

// Full-record CSV: every descriptor column (varied slots substituted per
// row) plus mean_gy, var_gy, pi_lo, pi_hi, cluster. Re-parses under the
// dataset module's record parser.
std::string surface_to_csv(const SurfaceGrid& grid, const DescriptorSchema& schema,
                           const RigRecord& base);

struct EffectCell {
    std::string descriptor_value;  // "" shown as None
    std::string film;
    Index count = 0;
    double mean_gy = 0.0;
    double max_gy = 0.0;
};

struct DescriptorEffectReport {
    std::string descriptor;
    std::vector<EffectCell> cells;
    std::map<std::string, Index> value_marginals;  // per descriptor value
    std::map<std::string, Index> film_marginals;   // per grafted film
};

DescriptorEffectReport descriptor_effect_report(const Dataset& dataset,
                                                const std::string& descriptor);

}  // namespace sodip
