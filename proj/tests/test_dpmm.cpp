#include "sodip/dpmm.hpp"

#include "sodip/transforms.hpp"

#include <doctest.h>

#include <map>

using namespace sodip;

namespace {

Matrix blobs_1d(Index per_blob, const std::vector<double>& centers, double sigma,
                std::uint64_t seed, std::vector<int>* labels = nullptr) {
    Rng rng(seed);
    Matrix X(per_blob * Index(centers.size()), 1);
    Index row = 0;
    for (std::size_t b = 0; b < centers.size(); ++b) {
        for (Index i = 0; i < per_blob; ++i, ++row) {
            X(row, 0) = centers[b] + sigma * rng.normal();
            if (labels) labels->push_back(int(b));
        }
    }
    return X;
}

// Adjusted Rand index between two labelings.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size();
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ca, cb;
    for (std::size_t i = 0; i < n; ++i) {
        ++joint[{a[i], b[i]}];
        ++ca[a[i]];
        ++cb[b[i]];
    }
    auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
    double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (auto& [k, v] : joint) sum_joint += choose2(v);
    for (auto& [k, v] : ca) sum_a += choose2(v);
    for (auto& [k, v] : cb) sum_b += choose2(v);
    const double total = choose2(double(n));
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    return (sum_joint - expected) / (max_index - expected);
}

// Independent NIW block marginal for the enumeration oracle: the product of
// sequential posterior predictives (exchangeability makes the order moot).
double oracle_block_marginal(const NiwPrior& prior, const Matrix& X,
                             const std::vector<Index>& block) {
    ClusterStats stats(prior.dim());
    double lp = 0.0;
    for (Index i : block) {
        lp += niw_posterior_predictive(prior, stats, X.row(i).transpose());
        stats.add(X.row(i).transpose());
    }
    return lp;
}

}  // namespace

TEST_SUITE_BEGIN("dpmm");

TEST_CASE("crp_prior_finite closed form") {
    CHECK(crp_prior_finite(3, 1.0, 2, 10) == doctest::Approx(0.35).epsilon(1e-12));
    CHECK(crp_prior_finite(0, 1.0, 1, 2) == doctest::Approx(0.5).epsilon(1e-12));

    // Normalization identity: K classes with counts summing to n - 1.
    const Index n = 12;
    const int K = 4;
    const std::vector<Index> counts = {5, 3, 2, 1};
    double total = 0.0;
    for (Index m : counts) total += crp_prior_finite(m, 0.7, K, n);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(crp_prior_finite(12, 1.0, 2, 10), BadCounts);
}

TEST_CASE("crp_prior_infinite closed form") {
    const Vector first = crp_prior_infinite({}, 2.5, 1);
    REQUIRE(first.size() == 1);
    CHECK(first[0] == doctest::Approx(1.0));

    const Vector two = crp_prior_infinite({1}, 1.0, 2);
    CHECK(two[0] == doctest::Approx(0.5));
    CHECK(two[1] == doctest::Approx(0.5));

    const Vector three = crp_prior_infinite({5, 3}, 2.0, 9);
    CHECK(three[0] == doctest::Approx(0.5));
    CHECK(three[1] == doctest::Approx(0.3));
    CHECK(three[2] == doctest::Approx(0.2));
    CHECK(three.sum() == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(crp_prior_infinite({3, 3}, 1.0, 5), BadCounts);
}

TEST_CASE("crp_prior_infinite is exchangeable in the counts") {
    const Vector a = crp_prior_infinite({4, 2, 1}, 1.5, 8);
    const Vector b = crp_prior_infinite({1, 4, 2}, 1.5, 8);
    CHECK(a[0] == b[1]);
    CHECK(a[1] == b[2]);
    CHECK(a[2] == b[0]);
    CHECK(a[3] == b[3]);
}

TEST_CASE("niw prior predictive is symmetric and normalized in 1-D") {
    NiwPrior prior;
    prior.mu0 = Vector::Zero(1);
    prior.kappa0 = 1.0;
    prior.nu0 = 3.0;
    prior.psi0 = Matrix::Identity(1, 1);

    const ClusterStats empty(1);
    for (double x : {0.5, 1.0, 2.0}) {
        Vector xp(1), xm(1);
        xp << x;
        xm << -x;
        CHECK(niw_posterior_predictive(prior, empty, xp) ==
              doctest::Approx(niw_posterior_predictive(prior, empty, xm)).epsilon(1e-12));
    }

    // Trapezoid quadrature of the density over [-50, 50].
    const double h = 1e-3;
    double integral = 0.0;
    for (double x = -50.0; x <= 50.0; x += h) {
        Vector v(1);
        v << x;
        const double p = std::exp(niw_posterior_predictive(prior, empty, v));
        const bool edge = x == -50.0 || x + h > 50.0;
        integral += p * (edge ? 0.5 : 1.0) * h;
    }
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("adding an observation raises the predictive there") {
    NiwPrior prior = NiwPrior::standard(1, 1.0, 1.0, 3.0);
    Vector ten(1);
    ten << 10.0;
    const ClusterStats empty(1);
    ClusterStats with_obs(1);
    with_obs.add(ten);
    CHECK(niw_posterior_predictive(prior, with_obs, ten) >
          niw_posterior_predictive(prior, empty, ten));
}

TEST_CASE("closed-form block marginal equals the sequential predictive product") {
    Rng rng(55);
    for (Index d = 1; d <= 3; ++d) {
        const NiwPrior prior = NiwPrior::standard(d, 1.3, 0.7, double(d) + 2.0);
        for (int rep = 0; rep < 5; ++rep) {
            const Index m = 2 + Index(rng.uniform_int(6));
            Matrix X(m, d);
            for (Index i = 0; i < m; ++i) {
                for (Index j = 0; j < d; ++j) X(i, j) = rng.uniform(-3.0, 3.0);
            }
            ClusterStats stats(d);
            double sequential = 0.0;
            for (Index i = 0; i < m; ++i) {
                sequential += niw_posterior_predictive(prior, stats, X.row(i).transpose());
                stats.add(X.row(i).transpose());
            }
            CHECK(niw_marginal_log_likelihood(prior, stats) ==
                  doctest::Approx(sequential).epsilon(1e-10));
        }
    }
}

TEST_CASE("single point occupies one singleton cluster after a sweep") {
    Matrix X(1, 1);
    X << 0.7;
    const NiwPrior prior = NiwPrior::standard(1);
    DpmmConfig cfg;
    cfg.k_max = 4;
    DpmmState state;
    state.assignments = {0};
    state.clusters.assign(1, ClusterStats(1));
    state.clusters[0].add(X.row(0).transpose());

    Rng rng(1);
    gibbs_sweep(state, X, prior, cfg, rng);
    CHECK(state.active_clusters() == 1);
    CHECK(state.clusters[0].count == 1.0);
}

TEST_CASE("two identical points co-cluster as alpha vanishes") {
    Matrix X(2, 1);
    X << 1.3, 1.3;
    const NiwPrior prior = NiwPrior::standard(1);

    // Analytic two-point posterior: p(same) = L12 / (L12 + alpha L1 L2).
    const double l12 = oracle_block_marginal(prior, X, {0, 1});
    const double l1 = oracle_block_marginal(prior, X, {0});
    const double l2 = oracle_block_marginal(prior, X, {1});
    const double alpha = 1e-6;
    const double p_same =
        std::exp(l12) / (std::exp(l12) + alpha * std::exp(l1) * std::exp(l2));
    CHECK(p_same > 0.999999);

    DpmmConfig cfg;
    cfg.alpha = alpha;
    cfg.k_max = 4;
    int together = 0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        DpmmState state;
        state.assignments = {0, 0};
        state.clusters.assign(1, ClusterStats(1));
        state.clusters[0].add(X.row(0).transpose());
        state.clusters[0].add(X.row(1).transpose());
        Rng rng(1000 + t);
        gibbs_sweep(state, X, prior, cfg, rng);
        if (state.assignments[0] == state.assignments[1]) ++together;
    }
    CHECK(double(together) / trials > 0.999);
}

TEST_CASE("sufficient statistics match recomputation after sweeps") {
    std::vector<int> labels;
    const Matrix X = blobs_1d(20, {-4.0, 4.0}, 1.0, 5, &labels);
    const NiwPrior prior = NiwPrior::standard(1);
    DpmmConfig cfg;
    cfg.k_max = 6;
    cfg.seed = 9;

    DpmmState state;
    state.assignments.assign(X.rows(), 0);
    state.clusters.assign(1, ClusterStats(1));
    for (Index i = 0; i < X.rows(); ++i) state.clusters[0].add(X.row(i).transpose());

    Rng rng(cfg.seed);
    for (int sweep = 0; sweep < 10; ++sweep) {
        gibbs_sweep(state, X, prior, cfg, rng);
        const auto fresh = recompute_stats(state.assignments, X, state.active_clusters());
        REQUIRE(fresh.size() == state.clusters.size());
        double total = 0.0;
        for (std::size_t k = 0; k < fresh.size(); ++k) {
            total += state.clusters[k].count;
            CHECK(state.clusters[k].count == fresh[k].count);
            CHECK(state.clusters[k].count >= 1.0);
            CHECK((state.clusters[k].sum - fresh[k].sum).cwiseAbs().maxCoeff() < 1e-8);
            CHECK((state.clusters[k].scatter - fresh[k].scatter).cwiseAbs().maxCoeff() <
                  1e-8);
        }
        CHECK(total == double(X.rows()));
        CHECK(std::isfinite(dpmm_log_joint(state, prior, cfg.alpha)));
    }
}

TEST_CASE("fit_dpmm recovers two separated blobs") {
    std::vector<int> truth;
    const Matrix raw = blobs_1d(50, {-10.0, 10.0}, 0.5, 11, &truth);
    const Matrix X = Standardizer::fit(raw).apply(raw);  // caller contract
    const NiwPrior prior = NiwPrior::standard(1);
    DpmmConfig cfg;
    cfg.alpha = 1.0;
    cfg.k_max = 8;
    cfg.n_sweeps = 120;
    cfg.burn_in = 60;
    cfg.seed = 3;

    const DpmmFit fit = fit_dpmm(X, prior, cfg);
    CHECK(fit.state.active_clusters() == 2);
    CHECK(adjusted_rand_index(truth, fit.state.assignments) >= 0.99);

    REQUIRE(fit.train_responsibilities.size() == std::size_t(X.rows()));
    for (const Responsibilities& r : fit.train_responsibilities) {
        CHECK(r.probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("k_max 1 forces a single cluster") {
    const Matrix X = blobs_1d(15, {-8.0, 8.0}, 0.5, 13);
    DpmmConfig cfg;
    cfg.k_max = 1;
    cfg.n_sweeps = 30;
    cfg.burn_in = 10;
    const DpmmFit fit = fit_dpmm(X, NiwPrior::standard(1), cfg);
    CHECK(fit.state.active_clusters() == 1);
}

TEST_CASE("fit_dpmm is deterministic under a fixed seed") {
    const Matrix X = blobs_1d(25, {-3.0, 3.0}, 1.0, 17);
    DpmmConfig cfg;
    cfg.n_sweeps = 60;
    cfg.burn_in = 30;
    cfg.seed = 123;
    const DpmmFit a = fit_dpmm(X, NiwPrior::standard(1), cfg);
    const DpmmFit b = fit_dpmm(X, NiwPrior::standard(1), cfg);
    CHECK(a.state.assignments == b.state.assignments);
    CHECK(a.state.log_joint == b.state.log_joint);
}

TEST_CASE("responsibilities normalize and respect symmetry") {
    // Two mirrored clusters of equal size.
    std::vector<int> labels;
    Matrix X(40, 1);
    for (Index i = 0; i < 20; ++i) X(i, 0) = -5.0 - 0.1 * double(i % 5);
    for (Index i = 20; i < 40; ++i) X(i, 0) = 5.0 + 0.1 * double(i % 5);
    std::vector<int> assign(40);
    for (Index i = 0; i < 40; ++i) assign[i] = i < 20 ? 0 : 1;

    DpmmState state;
    state.assignments = assign;
    state.clusters = recompute_stats(assign, X, 2);
    const NiwPrior prior = NiwPrior::standard(1);

    Vector mid(1);
    mid << (X.col(0).head(20).mean() + X.col(0).tail(20).mean()) / 2.0;
    const Responsibilities r = responsibilities(state, prior, 0.5, mid);
    CHECK(r.probs.size() == 2);
    CHECK(r.probs[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(r.probs[1] == doctest::Approx(0.5).epsilon(1e-9));

    // Single cluster: responsibility 1 at its center.
    DpmmState one;
    one.assignments.assign(40, 0);
    one.clusters = recompute_stats(one.assignments, X, 1);
    Vector center(1);
    center << X.col(0).mean();
    const Responsibilities r1 = responsibilities(one, prior, 0.5, center);
    CHECK(r1.probs[0] == doctest::Approx(1.0));

    Rng rng(71);
    for (int q = 0; q < 1000; ++q) {
        Vector v(1);
        v << rng.uniform(-20.0, 20.0);
        CHECK(responsibilities(state, prior, 0.5, v).probs.sum() ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("three-point partition posterior matches brute-force enumeration") {
    // Small, fast version of the exactness check (the acceptance suite runs
    // the full 20k-sample variant).
    Matrix X(3, 1);
    X << -0.8, 0.2, 1.1;
    const NiwPrior prior = NiwPrior::standard(1, 1.0, 1.0, 3.0);
    const double alpha = 0.8;

    const std::vector<std::vector<std::vector<Index>>> partitions = {
        {{0, 1, 2}},
        {{0, 1}, {2}},
        {{0, 2}, {1}},
        {{1, 2}, {0}},
        {{0}, {1}, {2}},
    };
    // CRP partition prior: alpha^K prod (|b|-1)! / prod_{i<n} (alpha + i).
    std::vector<double> post;
    double norm = 0.0;
    for (const auto& part : partitions) {
        double lp = double(part.size()) * std::log(alpha) -
                    (std::log(alpha) + std::log(alpha + 1.0) + std::log(alpha + 2.0));
        for (const auto& block : part) {
            lp += std::lgamma(double(block.size()));
            lp += oracle_block_marginal(prior, X, block);
        }
        post.push_back(std::exp(lp));
        norm += post.back();
    }
    for (double& p : post) p /= norm;

    DpmmConfig cfg;
    cfg.alpha = alpha;
    cfg.k_max = 8;
    cfg.seed = 19;

    DpmmState state;
    state.assignments.assign(3, 0);
    state.clusters.assign(1, ClusterStats(1));
    for (Index i = 0; i < 3; ++i) state.clusters[0].add(X.row(i).transpose());

    Rng rng(cfg.seed);
    auto partition_of = [&](const std::vector<int>& a) {
        if (a[0] == a[1] && a[1] == a[2]) return 0;
        if (a[0] == a[1]) return 1;
        if (a[0] == a[2]) return 2;
        if (a[1] == a[2]) return 3;
        return 4;
    };
    std::array<double, 5> hits{};
    const int n_samples = 4000, burn = 200;
    for (int s = 0; s < n_samples + burn; ++s) {
        gibbs_sweep(state, X, prior, cfg, rng);
        if (s >= burn) hits[partition_of(state.assignments)] += 1.0;
    }
    double tv = 0.0;
    for (int p = 0; p < 5; ++p) tv += std::abs(hits[p] / n_samples - post[p]);
    CHECK(tv / 2.0 < 0.04);
}

TEST_SUITE_END();
