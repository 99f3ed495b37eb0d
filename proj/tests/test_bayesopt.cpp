#include "sodip/bayesopt.hpp"

#include <doctest.h>

#include <set>

using namespace sodip;

namespace {

SearchSpace unit_space(Index d) {
    SearchSpace s;
    for (Index j = 0; j < d; ++j) {
        s.dims.push_back(SearchDim{"x" + std::to_string(j), DimKind::Continuous, 0.0, 1.0});
    }
    return s;
}

}  // namespace

TEST_SUITE_BEGIN("bayesopt");

TEST_CASE("lhc stratification in one dimension") {
    const SearchSpace s = unit_space(1);
    const std::vector<Vector> pts = lhc_sample(s, 4, 3);
    std::set<int> strata;
    for (const Vector& p : pts) {
        CHECK(p[0] >= 0.0);
        CHECK(p[0] < 1.0 + 1e-12);
        strata.insert(int(p[0] * 4.0));
    }
    CHECK(strata == std::set<int>{0, 1, 2, 3});
}

TEST_CASE("lhc projection property over n=100, d=5") {
    const SearchSpace s = unit_space(5);
    for (std::uint64_t seed : {1ull, 7ull, 42ull}) {
        const std::vector<Vector> pts = lhc_sample(s, 100, seed);
        REQUIRE(pts.size() == 100);
        for (Index j = 0; j < 5; ++j) {
            std::vector<int> occupancy(100, 0);
            for (const Vector& p : pts) {
                const int stratum = std::min(99, int(p[j] * 100.0 + 1e-9));
                ++occupancy[stratum];
            }
            for (int c : occupancy) CHECK(c == 1);
        }
    }
}

TEST_CASE("lhc determinism and integer rounding") {
    SearchSpace s;
    s.dims = {SearchDim{"n", DimKind::Integer, 1.0, 9.0},
              SearchDim{"lr", DimKind::LogContinuous, 1e-3, 1.0}};
    const std::vector<Vector> a = lhc_sample(s, 16, 5);
    const std::vector<Vector> b = lhc_sample(s, 16, 5);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] == b[i]);
        CHECK(a[i][0] == std::round(a[i][0]));
        CHECK(a[i][0] >= 1.0);
        CHECK(a[i][0] <= 9.0);
        CHECK(a[i][1] >= 1e-3);
        CHECK(a[i][1] <= 1.0);
    }
}

TEST_CASE("expected improvement closed forms") {
    CHECK(expected_improvement(1.0, 0.0, 1.0) == 0.0);
    CHECK(expected_improvement(2.0, 0.0, 1.0) == 0.0);
    CHECK(expected_improvement(0.25, 0.0, 1.0) == doctest::Approx(0.75));
    CHECK(expected_improvement(1.0, 1.0, 1.0) ==
          doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)).epsilon(1e-9));
    CHECK_THROWS_AS(expected_improvement(0.0, -1.0, 0.0), Error);
}

TEST_CASE("expected improvement grows with sigma") {
    for (double mu : {0.2, 1.0, 3.0}) {
        double prev = expected_improvement(mu, 1e-6, 0.0);
        for (double sigma = 0.1; sigma <= 5.0; sigma += 0.1) {
            const double ei = expected_improvement(mu, sigma, 0.0);
            CHECK(ei >= prev - 1e-12);
            prev = ei;
        }
    }
}

TEST_CASE("ei is non-negative everywhere") {
    Rng rng(8);
    for (int i = 0; i < 10000; ++i) {
        const double ei = expected_improvement(rng.uniform(-10, 10), rng.uniform(0, 5),
                                               rng.uniform(-10, 10));
        CHECK(ei >= 0.0);
    }
}

TEST_CASE("bo_minimize finds the quadratic minimum") {
    SearchSpace s = unit_space(1);
    BoOptions opt;
    opt.n_init = 8;
    opt.n_iters = 25;
    opt.seed = 11;
    const BoResult r = bo_minimize(
        [](const Vector& x) { return (x[0] - 0.3) * (x[0] - 0.3); }, s, opt);
    CHECK(std::abs(r.best.point[0] - 0.3) < 0.05);
    CHECK(r.history.size() == 25);
}

TEST_CASE("constant objective survives the zero-variance surrogate") {
    SearchSpace s = unit_space(2);
    BoOptions opt;
    opt.n_init = 5;
    opt.n_iters = 12;
    opt.seed = 13;
    const BoResult r = bo_minimize([](const Vector&) { return 7.0; }, s, opt);
    CHECK(r.best.objective == 7.0);
    CHECK(r.history.size() == 12);
}

TEST_CASE("bo history bookkeeping and monotone best-so-far") {
    SearchSpace s = unit_space(2);
    BoOptions opt;
    opt.n_init = 6;
    opt.n_iters = 20;
    opt.seed = 17;
    const BoResult r = bo_minimize(
        [](const Vector& x) { return std::cos(7.0 * x[0]) + x[1] * x[1]; }, s, opt);
    REQUIRE(r.history.size() == 20);
    double best = std::numeric_limits<double>::infinity();
    double min_seen = best;
    for (const Trial& t : r.history) {
        min_seen = std::min(min_seen, t.objective);
        best = std::min(best, t.objective);
        CHECK(best == min_seen);  // running minimum is non-increasing
    }
    CHECK(r.best.objective == min_seen);
}

TEST_CASE("bo never proposes out-of-bounds points") {
    SearchSpace s;
    s.dims = {SearchDim{"a", DimKind::Continuous, -2.0, 3.0},
              SearchDim{"b", DimKind::LogContinuous, 0.01, 10.0},
              SearchDim{"c", DimKind::Integer, 1.0, 6.0}};
    std::size_t trials = 0;
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        BoOptions opt;
        opt.n_init = 16;
        opt.n_iters = 20;
        opt.seed = seed;
        const BoResult r = bo_minimize(
            [](const Vector& x) { return x[0] + std::log(x[1]) + x[2]; }, s, opt);
        for (const Trial& t : r.history) {
            ++trials;
            for (Index j = 0; j < 3; ++j) {
                REQUIRE(t.point[j] >= s.dims[j].lower);
                REQUIRE(t.point[j] <= s.dims[j].upper);
            }
            REQUIRE(t.point[2] == std::round(t.point[2]));
        }
    }
    CHECK(trials == 10000);
}

TEST_CASE("objective failures carry the trial index") {
    SearchSpace s = unit_space(1);
    BoOptions opt;
    opt.n_init = 4;
    opt.n_iters = 8;
    CHECK_THROWS_AS(bo_minimize(
                        [](const Vector& x) {
                            if (x[0] > 0.0) throw std::runtime_error("boom");
                            return x[0];
                        },
                        s, opt),
                    ObjectiveFailure);
    CHECK_THROWS_AS(
        bo_minimize([](const Vector&) { return std::nan(""); }, s, opt),
        ObjectiveFailure);
}

TEST_CASE("tune_first_stage beats or ties the default configuration") {
    Rng rng(31);
    const Index n = 160;
    Matrix X(n, 4);
    Vector y(n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < 4; ++j) X(i, j) = rng.uniform(-2.0, 2.0);
        y[i] = 30.0 + 8.0 * std::sin(X(i, 0)) + 4.0 * X(i, 1) * X(i, 2) + rng.normal();
    }
    const Matrix Xt = X.topRows(120), Xv = X.bottomRows(40);
    const Vector yt = y.head(120), yv = y.tail(40);

    const GbtConfig base;  // subsample = colsample = 1: seed-independent
    const GbtModel base_model = gbt_fit(Xt, yt, base);
    const double base_rmse =
        std::sqrt((gbt_predict(base_model, Xv) - yv).array().square().mean());

    const TuneResult tuned =
        tune_first_stage(Xt, yt, Xv, yv, default_gbt_space(), 18, 7, base);
    CHECK(tuned.val_rmse <= base_rmse + 1e-12);

    // Decoded integers stay within their declared bounds.
    CHECK(tuned.config.n_trees >= 50);
    CHECK(tuned.config.n_trees <= 500);
    CHECK(tuned.config.max_depth >= 2);
    CHECK(tuned.config.max_depth <= 10);

    // budget == n_init degenerates to pure initial sampling.
    const TuneResult lhc_only =
        tune_first_stage(Xt, yt, Xv, yv, default_gbt_space(), 10, 9, base);
    CHECK(lhc_only.bo.history.size() == 10);
    CHECK_NOTHROW(lhc_only.config.validate());
}

TEST_SUITE_END();
