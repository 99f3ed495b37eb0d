#include "sodip/bayesopt.hpp"

#include "sodip/gpr.hpp"

#include <algorithm>
#include <numeric>

namespace sodip {

void SearchSpace::validate() const {
    if (dims.empty()) throw Error("SearchSpace: needs at least one dimension");
    for (const SearchDim& d : dims) {
        if (!(d.lower < d.upper)) {
            throw Error("SearchSpace: dim '" + d.name + "' needs lower < upper");
        }
        if (d.kind == DimKind::LogContinuous && !(d.lower > 0.0)) {
            throw Error("SearchSpace: log dim '" + d.name + "' needs lower > 0");
        }
    }
    for (std::size_t i = 0; i < dims.size(); ++i) {
        for (std::size_t j = i + 1; j < dims.size(); ++j) {
            if (dims[i].name == dims[j].name) {
                throw Error("SearchSpace: duplicate dim name '" + dims[i].name + "'");
            }
        }
    }
}

Vector SearchSpace::to_unit(const Vector& point) const {
    Vector u(size());
    for (Index j = 0; j < size(); ++j) {
        const SearchDim& d = dims[j];
        if (d.kind == DimKind::LogContinuous) {
            u[j] = (std::log(point[j]) - std::log(d.lower)) /
                   (std::log(d.upper) - std::log(d.lower));
        } else {
            u[j] = (point[j] - d.lower) / (d.upper - d.lower);
        }
    }
    return u;
}

Vector SearchSpace::from_unit(const Vector& unit) const {
    Vector p(size());
    for (Index j = 0; j < size(); ++j) {
        const SearchDim& d = dims[j];
        const double t = std::clamp(unit[j], 0.0, 1.0);
        double v;
        if (d.kind == DimKind::LogContinuous) {
            v = std::exp(std::log(d.lower) + t * (std::log(d.upper) - std::log(d.lower)));
        } else {
            v = d.lower + t * (d.upper - d.lower);
        }
        if (d.kind == DimKind::Integer) v = std::round(v);
        p[j] = std::clamp(v, d.lower, d.upper);
    }
    return p;
}

std::vector<Vector> lhc_sample(const SearchSpace& space, Index n, std::uint64_t seed) {
    space.validate();
    if (n < 1) throw Error("lhc_sample: n must be >= 1");

    Rng rng(seed);
    const Index d = space.size();

    // One stratum per point per dimension, independently permuted.
    Matrix unit(n, d);
    std::vector<Index> strata(n);
    for (Index j = 0; j < d; ++j) {
        std::iota(strata.begin(), strata.end(), Index(0));
        rng.shuffle(strata);
        for (Index i = 0; i < n; ++i) {
            unit(i, j) = (double(strata[i]) + rng.uniform()) / double(n);
        }
    }

    std::vector<Vector> points;
    points.reserve(n);
    for (Index i = 0; i < n; ++i) {
        points.push_back(space.from_unit(unit.row(i).transpose()));
    }
    return points;
}

double expected_improvement(double mu, double sigma, double best) {
    if (sigma < 0.0) throw Error("expected_improvement: sigma must be >= 0");
    const double gap = best - mu;
    if (sigma == 0.0) return std::max(gap, 0.0);
    const double z = gap / sigma;
    return std::max(0.0, gap * normal_cdf(z) + sigma * normal_pdf(z));
}

BoResult bo_minimize(const Objective& objective, const SearchSpace& space,
                     const BoOptions& options) {
    space.validate();
    if (options.n_init < 2) throw Error("bo_minimize: n_init must be >= 2");
    if (options.n_iters < options.n_init) {
        throw Error("bo_minimize: n_iters must be >= n_init");
    }

    BoResult result;
    auto evaluate = [&](const Vector& point) {
        double value;
        try {
            value = objective(point);
        } catch (const std::exception& e) {
            throw ObjectiveFailure("objective failed at trial " +
                                   std::to_string(result.history.size()) + ": " + e.what());
        }
        if (!std::isfinite(value)) {
            throw ObjectiveFailure("objective returned a non-finite value at trial " +
                                   std::to_string(result.history.size()));
        }
        Trial t;
        t.point = point;
        t.objective = value;
        t.index = static_cast<int>(result.history.size());
        result.history.push_back(t);
    };

    for (const Vector& p : options.initial_points) {
        if (static_cast<int>(result.history.size()) >= options.n_init) break;
        evaluate(space.from_unit(space.to_unit(p)));  // snap into bounds/grid
    }
    const Index n_lhc = options.n_init - static_cast<Index>(result.history.size());
    if (n_lhc > 0) {
        for (const Vector& p : lhc_sample(space, n_lhc, derive_seed(options.seed, 0))) {
            evaluate(p);
        }
    }

    const Index d = space.size();
    OptimizeOptions surrogate_opt;
    surrogate_opt.n_starts = 4;
    surrogate_opt.evals_per_start = 100;

    for (int iter = options.n_init; iter < options.n_iters; ++iter) {
        // Surrogate over unit-cube coordinates and standardized objectives.
        const Index m = static_cast<Index>(result.history.size());
        Matrix U(m, d);
        Vector fy(m);
        for (Index i = 0; i < m; ++i) {
            U.row(i) = space.to_unit(result.history[i].point).transpose();
            fy[i] = result.history[i].objective;
        }
        const double f_mean = fy.mean();
        double f_std = std::sqrt((fy.array() - f_mean).square().mean());
        if (!(f_std > 1e-12)) f_std = 1.0;
        Vector fn = (fy.array() - f_mean) / f_std;

        surrogate_opt.seed = derive_seed(options.seed, 1000 + iter);
        GprModel surrogate;
        double best_norm = (fy.minCoeff() - f_mean) / f_std;
        const HyperparamResult h =
            optimize_hyperparams(U, fn, KernelFamily::Matern52, surrogate_opt);
        surrogate = gpr_fit(U, fn, h.kernel, h.sigma2);
        result.surrogate_log_marginal = h.log_marginal;

        // Argmax EI over a seeded candidate sweep.
        Rng cand_rng(derive_seed(options.seed, 2000 + iter));
        Vector best_unit(d);
        double best_ei = -1.0;
        for (int c = 0; c < options.n_candidates; ++c) {
            Vector u(d);
            for (Index j = 0; j < d; ++j) u[j] = cand_rng.uniform();
            const GprPrediction p = gpr_predict(surrogate, u);
            const double ei = expected_improvement(p.mean, std::sqrt(p.var), best_norm);
            if (ei > best_ei) {
                best_ei = ei;
                best_unit = u;
            }
        }
        evaluate(space.from_unit(best_unit));
    }

    result.best = *std::min_element(
        result.history.begin(), result.history.end(),
        [](const Trial& a, const Trial& b) { return a.objective < b.objective; });
    return result;
}

SearchSpace default_gbt_space() {
    SearchSpace s;
    s.dims = {
        SearchDim{"n_trees", DimKind::Integer, 50.0, 500.0},
        SearchDim{"learning_rate", DimKind::LogContinuous, 1e-3, 0.3},
        SearchDim{"max_depth", DimKind::Integer, 2.0, 10.0},
        SearchDim{"subsample", DimKind::Continuous, 0.5, 1.0},
        SearchDim{"colsample", DimKind::Continuous, 0.5, 1.0},
        SearchDim{"min_child_weight", DimKind::Continuous, 1.0, 10.0},
        SearchDim{"gamma", DimKind::Continuous, 0.0, 5.0},
    };
    return s;
}

GbtConfig decode_gbt_point(const SearchSpace& space, const Vector& point,
                           const GbtConfig& base) {
    GbtConfig cfg = base;
    for (Index j = 0; j < space.size(); ++j) {
        const std::string& name = space.dims[j].name;
        const double v = point[j];
        if (name == "n_trees") cfg.n_trees = static_cast<int>(std::llround(v));
        else if (name == "learning_rate") cfg.learning_rate = v;
        else if (name == "max_depth") cfg.max_depth = static_cast<int>(std::llround(v));
        else if (name == "subsample") cfg.subsample = v;
        else if (name == "colsample") cfg.colsample = v;
        else if (name == "min_child_weight") cfg.min_child_weight = v;
        else if (name == "gamma") cfg.gamma = v;
        else throw Error("decode_gbt_point: unknown dimension '" + name + "'");
    }
    cfg.validate();
    return cfg;
}

TuneResult tune_first_stage(const Matrix& X_train, const Vector& y_train,
                            const Matrix& X_val, const Vector& y_val,
                            const SearchSpace& space, int budget,
                            std::uint64_t seed, const GbtConfig& base) {
    auto rmse_of = [&](const GbtConfig& cfg) {
        const GbtModel model = gbt_fit(X_train, y_train, cfg);
        const Vector pred = gbt_predict(model, X_val);
        return std::sqrt((pred - y_val).array().square().mean());
    };

    BoOptions opt;
    opt.n_iters = budget;
    opt.n_init = std::min(10, budget);
    opt.seed = seed;

    // Warm-start with the incumbent configuration so tuning never returns
    // something worse than the baseline.
    Vector incumbent(space.size());
    for (Index j = 0; j < space.size(); ++j) {
        const std::string& name = space.dims[j].name;
        double v = 0.0;
        if (name == "n_trees") v = base.n_trees;
        else if (name == "learning_rate") v = base.learning_rate;
        else if (name == "max_depth") v = base.max_depth;
        else if (name == "subsample") v = base.subsample;
        else if (name == "colsample") v = base.colsample;
        else if (name == "min_child_weight") v = base.min_child_weight;
        else if (name == "gamma") v = base.gamma;
        incumbent[j] = std::clamp(v, space.dims[j].lower, space.dims[j].upper);
    }
    opt.initial_points.push_back(incumbent);

    GbtConfig seeded = base;
    seeded.seed = derive_seed(seed, 77);
    const BoResult bo = bo_minimize(
        [&](const Vector& point) { return rmse_of(decode_gbt_point(space, point, seeded)); },
        space, opt);

    TuneResult out;
    out.config = decode_gbt_point(space, bo.best.point, seeded);
    out.val_rmse = bo.best.objective;
    out.bo = bo;
    return out;
}

}  // namespace sodip
