#include "sodip/dpmm.hpp"

#include <algorithm>
#include <numeric>

namespace sodip {

namespace {

double multivariate_lgamma(double a, Index d) {
    double out = 0.25 * double(d) * double(d - 1) * std::log(M_PI);
    for (Index j = 1; j <= d; ++j) {
        out += std::lgamma(a + 0.5 * double(1 - j));
    }
    return out;
}

double logdet_spd(const Matrix& A, const char* what) {
    Eigen::LLT<Matrix> llt(0.5 * (A + A.transpose()));
    if (llt.info() != Eigen::Success) {
        throw SingularScale(std::string(what) + ": scale matrix is not positive definite");
    }
    double ld = 0.0;
    for (Index i = 0; i < A.rows(); ++i) ld += std::log(llt.matrixL()(i, i));
    return 2.0 * ld;
}

struct NiwPosterior {
    double kappa_n;
    double nu_n;
    Vector mu_n;
    Matrix psi_n;
};

NiwPosterior niw_update(const NiwPrior& prior, const ClusterStats& stats) {
    NiwPosterior post;
    post.kappa_n = prior.kappa0 + stats.count;
    post.nu_n = prior.nu0 + stats.count;
    if (stats.count > 0.0) {
        post.mu_n = (prior.kappa0 * prior.mu0 + stats.sum) / post.kappa_n;
        post.psi_n = prior.psi0 + stats.scatter +
                     prior.kappa0 * prior.mu0 * prior.mu0.transpose() -
                     post.kappa_n * post.mu_n * post.mu_n.transpose();
    } else {
        post.mu_n = prior.mu0;
        post.psi_n = prior.psi0;
    }
    return post;
}

}  // namespace

NiwPrior NiwPrior::standard(Index d, double scale, double kappa0, double nu0) {
    NiwPrior p;
    p.mu0 = Vector::Zero(d);
    p.kappa0 = kappa0;
    p.nu0 = nu0 > 0.0 ? nu0 : double(d) + 1.0;
    p.psi0 = scale * Matrix::Identity(d, d);
    p.validate();
    return p;
}

void NiwPrior::validate() const {
    const Index d = mu0.size();
    if (kappa0 <= 0.0) throw Error("NiwPrior: kappa0 must be > 0");
    if (!(nu0 > double(d) - 1.0)) {
        throw Error("NiwPrior: nu0 must exceed d - 1 = " + std::to_string(d - 1));
    }
    if (psi0.rows() != d || psi0.cols() != d) {
        throw DimensionMismatch("NiwPrior: psi0 must be d x d");
    }
    Eigen::LLT<Matrix> llt(psi0);
    if (llt.info() != Eigen::Success) {
        throw SingularScale("NiwPrior: psi0 is not positive definite");
    }
}

void DpmmConfig::validate() const {
    if (!(alpha > 0.0)) throw Error("DpmmConfig: alpha must be > 0");
    if (k_max < 1) throw Error("DpmmConfig: k_max must be >= 1");
    if (n_sweeps < 1) throw Error("DpmmConfig: n_sweeps must be >= 1");
    if (burn_in < 0 || burn_in >= n_sweeps) {
        throw Error("DpmmConfig: burn_in must be in [0, n_sweeps)");
    }
    if (n_chains < 1) throw Error("DpmmConfig: n_chains must be >= 1");
}

double crp_prior_finite(Index m_minus, double alpha, int K, Index n) {
    if (m_minus < 0 || m_minus > n - 1 || K < 1 || n < 1) {
        throw BadCounts("crp_prior_finite: need 0 <= m <= n-1 and K >= 1");
    }
    return (double(m_minus) + alpha / double(K)) / (double(n) - 1.0 + alpha);
}

Vector crp_prior_infinite(const std::vector<Index>& counts, double alpha, Index n) {
    Index total = 0;
    for (Index c : counts) {
        if (c < 0) throw BadCounts("crp_prior_infinite: negative count");
        total += c;
    }
    if (total != n - 1) {
        throw BadCounts("crp_prior_infinite: counts sum to " + std::to_string(total) +
                        ", expected n - 1 = " + std::to_string(n - 1));
    }
    const double denom = double(n) - 1.0 + alpha;
    Vector out(counts.size() + 1);
    for (std::size_t k = 0; k < counts.size(); ++k) out[k] = double(counts[k]) / denom;
    out[counts.size()] = alpha / denom;
    return out;
}

double niw_posterior_predictive(const NiwPrior& prior, const ClusterStats& stats,
                                const Eigen::Ref<const Vector>& x) {
    const Index d = prior.dim();
    if (x.size() != d) {
        throw DimensionMismatch("niw_posterior_predictive: x has dimension " +
                                std::to_string(x.size()) + ", prior has " + std::to_string(d));
    }
    const NiwPosterior post = niw_update(prior, stats);

    // Multivariate Student-t with dof = nu_n - d + 1 and scale
    // psi_n (kappa_n + 1) / (kappa_n dof).
    const double dof = post.nu_n - double(d) + 1.0;
    const Matrix sigma = post.psi_n * (post.kappa_n + 1.0) / (post.kappa_n * dof);

    Eigen::LLT<Matrix> llt(0.5 * (sigma + sigma.transpose()));
    if (llt.info() != Eigen::Success) {
        throw SingularScale("niw_posterior_predictive: predictive scale not PD");
    }
    double logdet = 0.0;
    for (Index i = 0; i < d; ++i) logdet += std::log(llt.matrixL()(i, i));
    logdet *= 2.0;

    const Vector delta = x - post.mu_n;
    const double maha = delta.dot(llt.solve(delta));

    return std::lgamma(0.5 * (dof + double(d))) - std::lgamma(0.5 * dof) -
           0.5 * double(d) * std::log(dof * M_PI) - 0.5 * logdet -
           0.5 * (dof + double(d)) * std::log1p(maha / dof);
}

double niw_marginal_log_likelihood(const NiwPrior& prior, const ClusterStats& stats) {
    const Index d = prior.dim();
    const double m = stats.count;
    if (m == 0.0) return 0.0;
    const NiwPosterior post = niw_update(prior, stats);

    return -0.5 * m * double(d) * std::log(M_PI) +
           multivariate_lgamma(0.5 * post.nu_n, d) -
           multivariate_lgamma(0.5 * prior.nu0, d) +
           0.5 * prior.nu0 * logdet_spd(prior.psi0, "niw_marginal") -
           0.5 * post.nu_n * logdet_spd(post.psi_n, "niw_marginal") +
           0.5 * double(d) * (std::log(prior.kappa0) - std::log(post.kappa_n));
}

double dpmm_log_joint(const DpmmState& state, const NiwPrior& prior, double alpha) {
    const Index n = state.n_points();
    // Exchangeable partition prior: alpha^K Gamma(alpha)/Gamma(alpha+n)
    // times the product of (m_k - 1)! over blocks.
    double lp = double(state.active_clusters()) * std::log(alpha) +
                std::lgamma(alpha) - std::lgamma(alpha + double(n));
    for (const ClusterStats& c : state.clusters) {
        lp += std::lgamma(c.count);
        lp += niw_marginal_log_likelihood(prior, c);
    }
    return lp;
}

void gibbs_sweep(DpmmState& state, const Matrix& X, const NiwPrior& prior,
                 const DpmmConfig& config, Rng& rng) {
    const Index n = X.rows();
    const double denom_log = std::log(double(n) - 1.0 + config.alpha);

    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index(0));
    rng.shuffle(order);

    std::vector<double> logp;
    for (Index idx : order) {
        const Vector x = X.row(idx).transpose();
        const int old_k = state.assignments[idx];
        state.clusters[old_k].remove(x);

        if (state.clusters[old_k].count < 0.5) {
            // Retire the now-empty cluster and compact labels above it.
            state.clusters.erase(state.clusters.begin() + old_k);
            for (int& a : state.assignments) {
                if (a > old_k) --a;
            }
            state.assignments[idx] = -1;
        }

        const int k_active = state.active_clusters();
        const bool allow_new = k_active < config.k_max;
        logp.assign(k_active + (allow_new ? 1 : 0), 0.0);
        for (int k = 0; k < k_active; ++k) {
            logp[k] = std::log(state.clusters[k].count) - denom_log +
                      niw_posterior_predictive(prior, state.clusters[k], x);
        }
        if (allow_new) {
            logp[k_active] = std::log(config.alpha) - denom_log +
                             niw_posterior_predictive(prior, ClusterStats(prior.dim()), x);
        }

        const double lse = log_sum_exp(logp);
        const double u = rng.uniform();
        double acc = 0.0;
        int chosen = static_cast<int>(logp.size()) - 1;
        for (std::size_t k = 0; k < logp.size(); ++k) {
            acc += std::exp(logp[k] - lse);
            if (u < acc) {
                chosen = static_cast<int>(k);
                break;
            }
        }

        if (chosen == k_active) {
            state.clusters.emplace_back(prior.dim());
        }
        state.assignments[idx] = chosen;
        state.clusters[chosen].add(x);
    }
}

DpmmFit fit_dpmm(const Matrix& X, const NiwPrior& prior, const DpmmConfig& config) {
    config.validate();
    prior.validate();
    const Index n = X.rows();
    if (n < 2) throw TooFewRows("fit_dpmm: needs >= 2 rows");
    if (X.cols() != prior.dim()) {
        throw DimensionMismatch("fit_dpmm: X columns and prior dimension differ");
    }

    DpmmState best;
    best.log_joint = -std::numeric_limits<double>::infinity();

    for (int chain = 0; chain < config.n_chains; ++chain) {
        DpmmState state;
        state.assignments.assign(n, 0);
        state.clusters.assign(1, ClusterStats(prior.dim()));
        for (Index i = 0; i < n; ++i) state.clusters[0].add(X.row(i).transpose());

        Rng rng(config.n_chains == 1 ? config.seed : derive_seed(config.seed, chain));
        for (int sweep = 1; sweep <= config.n_sweeps; ++sweep) {
            gibbs_sweep(state, X, prior, config, rng);
            if (sweep > config.burn_in) {
                state.log_joint = dpmm_log_joint(state, prior, config.alpha);
                if (state.log_joint > best.log_joint) best = state;
            }
        }
    }

    DpmmFit fit;
    fit.state = std::move(best);

    // Leave-one-out conditional responsibilities on the MAP state, other
    // assignments held fixed.
    fit.train_responsibilities.reserve(n);
    DpmmState& s = fit.state;
    const int K = s.active_clusters();
    for (Index i = 0; i < n; ++i) {
        const Vector x = X.row(i).transpose();
        const int own = s.assignments[i];
        s.clusters[own].remove(x);

        std::vector<double> logp(K, -std::numeric_limits<double>::infinity());
        for (int k = 0; k < K; ++k) {
            if (s.clusters[k].count < 0.5) continue;  // emptied singleton: zero CRP mass
            logp[k] = std::log(s.clusters[k].count) +
                      niw_posterior_predictive(prior, s.clusters[k], x);
        }
        s.clusters[own].add(x);

        Responsibilities r;
        r.probs = Vector::Zero(K);
        const double lse = log_sum_exp(logp);
        if (std::isfinite(lse)) {
            for (int k = 0; k < K; ++k) r.probs[k] = std::exp(logp[k] - lse);
        } else {
            r.probs[own] = 1.0;  // lone point in a lone cluster
        }
        Index arg = 0;
        r.probs.maxCoeff(&arg);
        r.dominant = static_cast<int>(arg);
        fit.train_responsibilities.push_back(std::move(r));
    }
    return fit;
}

Responsibilities responsibilities(const DpmmState& state, const NiwPrior& prior,
                                  double alpha, const Eigen::Ref<const Vector>& x_new) {
    const int K = state.active_clusters();
    if (K == 0) throw EmptyResponsibilities("responsibilities: no active clusters");
    if (x_new.size() != prior.dim()) {
        throw DimensionMismatch("responsibilities: dimension mismatch");
    }

    // CRP mass times posterior predictive per active cluster; the
    // new-cluster term alpha/(n + alpha) is dropped and the rest
    // renormalized, folding its mass proportionally into the fitted
    // clusters (no expert exists for an unborn cluster).
    const double denom_log = std::log(double(state.n_points()) + alpha);
    std::vector<double> logp(K);
    for (int k = 0; k < K; ++k) {
        logp[k] = std::log(state.clusters[k].count) - denom_log +
                  niw_posterior_predictive(prior, state.clusters[k], x_new);
    }
    const double lse = log_sum_exp(logp);

    Responsibilities r;
    r.probs = Vector(K);
    for (int k = 0; k < K; ++k) r.probs[k] = std::exp(logp[k] - lse);
    Index arg = 0;
    r.probs.maxCoeff(&arg);
    r.dominant = static_cast<int>(arg);
    return r;
}

std::vector<ClusterStats> recompute_stats(const std::vector<int>& assignments,
                                          const Matrix& X, int n_clusters) {
    std::vector<ClusterStats> stats(n_clusters, ClusterStats(X.cols()));
    for (Index i = 0; i < X.rows(); ++i) {
        stats[assignments[i]].add(X.row(i).transpose());
    }
    return stats;
}

}  // namespace sodip
