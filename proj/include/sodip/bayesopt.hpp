#pragma once

#include "sodip/common.hpp"
#include "sodip/stacker.hpp"

#include <functional>

namespace sodip {

// ---------------------------------------------------------------------------
// GP-surrogate Bayesian optimization with expected improvement, plus Latin
// hypercube sampling for initialization and design-space exploration.
// ---------------------------------------------------------------------------

enum class DimKind { Continuous, Integer, LogContinuous };

struct SearchDim {
    std::string name;
    DimKind kind = DimKind::Continuous;
    double lower = 0.0;
    double upper = 1.0;
};

struct SearchSpace {
    std::vector<SearchDim> dims;

    void validate() const;
    Index size() const { return static_cast<Index>(dims.size()); }

    // Map between raw space coordinates and the unit cube used by the
    // surrogate (log dims are linearized in log space).
    Vector to_unit(const Vector& point) const;
    Vector from_unit(const Vector& unit) const;
};

struct Trial {
    Vector point;
    double objective = 0.0;
    int index = 0;
};

struct BoResult {
    Trial best;
    std::vector<Trial> history;
    double surrogate_log_marginal = 0.0;
};

// Standard Latin hypercube: each dimension's n strata each contain exactly
// one point. Integer dims are rounded after sampling; log dims are
// stratified in log space.
std::vector<Vector> lhc_sample(const SearchSpace& space, Index n, std::uint64_t seed);

// Expected improvement for minimization.
double expected_improvement(double mu, double sigma, double best);

using Objective = std::function<double(const Vector&)>;

struct BoOptions {
    int n_init = 10;
    int n_iters = 50;  // total evaluations including the initial design
    std::uint64_t seed = 0;
    int n_candidates = 2048;
    // Evaluated before the LHC design; counts toward n_init. Lets a caller
    // warm-start from an incumbent configuration.
    std::vector<Vector> initial_points;
};

BoResult bo_minimize(const Objective& objective, const SearchSpace& space,
                     const BoOptions& options);

// ---------------------------------------------------------------------------
// First-stage hyperparameter tuning: objective is validation RMSE of a GBT
// trained on the train split. The space's dimension names must match the
// GbtConfig field names.
// ---------------------------------------------------------------------------

SearchSpace default_gbt_space();

GbtConfig decode_gbt_point(const SearchSpace& space, const Vector& point,
                           const GbtConfig& base);

struct TuneResult {
    GbtConfig config;
    double val_rmse = 0.0;
    BoResult bo;
};

TuneResult tune_first_stage(const Matrix& X_train, const Vector& y_train,
                            const Matrix& X_val, const Vector& y_val,
                            const SearchSpace& space, int budget = 50,
                            std::uint64_t seed = 0,
                            const GbtConfig& base = GbtConfig{});

}  // namespace sodip
