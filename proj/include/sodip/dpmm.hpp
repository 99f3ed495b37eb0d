#pragma once

#include "sodip/common.hpp"

namespace sodip {

// ---------------------------------------------------------------------------
// Dirichlet process mixture with Normal-Inverse-Wishart conjugate priors,
// fitted by collapsed Gibbs sampling over cluster labels.
// ---------------------------------------------------------------------------

struct NiwPrior {
    Vector mu0;           // prior mean, d-dim
    double kappa0 = 1.0;  // mean strength
    double nu0 = 0.0;     // degrees of freedom, must exceed d - 1
    Matrix psi0;          // d x d SPD scale matrix

    // Standard construction: mu0 = 0, psi0 = scale * I, nu0 = d + 1.
    static NiwPrior standard(Index d, double scale = 1.0, double kappa0 = 1.0,
                             double nu0 = 0.0);

    Index dim() const { return mu0.size(); }
    void validate() const;
};

struct DpmmConfig {
    double alpha = 0.1;   // Dirichlet concentration
    int k_max = 8;        // truncation: maximum active clusters
    int n_sweeps = 500;
    int burn_in = 250;
    int n_chains = 1;     // independent seeded chains; best log-joint wins
    std::uint64_t seed = 0;

    void validate() const;
};

// Per-cluster sufficient statistics: count, sum vector, raw scatter
// (sum of x x^T over members).
struct ClusterStats {
    double count = 0.0;
    Vector sum;
    Matrix scatter;

    explicit ClusterStats(Index d)
        : sum(Vector::Zero(d)), scatter(Matrix::Zero(d, d)) {}
    ClusterStats() = default;

    void add(const Eigen::Ref<const Vector>& x) {
        count += 1.0;
        sum += x;
        scatter.noalias() += x * x.transpose();
    }
    void remove(const Eigen::Ref<const Vector>& x) {
        count -= 1.0;
        sum -= x;
        scatter.noalias() -= x * x.transpose();
    }
};

struct DpmmState {
    std::vector<int> assignments;      // cluster id per row, ids compact in [0, K)
    std::vector<ClusterStats> clusters;
    double log_joint = -std::numeric_limits<double>::infinity();

    int active_clusters() const { return static_cast<int>(clusters.size()); }
    Index n_points() const { return static_cast<Index>(assignments.size()); }
};

struct Responsibilities {
    Vector probs;  // over active clusters, sums to 1
    int dominant = -1;
};

// Finite-mixture conditional with the Dirichlet weights marginalized out:
// (m + alpha/K) / (n - 1 + alpha).
double crp_prior_finite(Index m_minus, double alpha, int K, Index n);

// Infinite limit (Chinese Restaurant Process): existing cluster k gets
// m_k / (n - 1 + alpha), a new cluster gets alpha / (n - 1 + alpha).
// The returned vector has one entry per count plus a final new-cluster entry.
Vector crp_prior_infinite(const std::vector<Index>& counts, double alpha, Index n);

// Log multivariate Student-t posterior predictive of the NIW model given
// cluster sufficient statistics; empty stats give the prior predictive.
double niw_posterior_predictive(const NiwPrior& prior, const ClusterStats& stats,
                                const Eigen::Ref<const Vector>& x);

// Log marginal likelihood of a whole block of points under the NIW model.
double niw_marginal_log_likelihood(const NiwPrior& prior, const ClusterStats& stats);

// Log joint of a state: CRP partition prior times per-cluster marginals.
double dpmm_log_joint(const DpmmState& state, const NiwPrior& prior, double alpha);

// One collapsed Gibbs sweep over all points in a seeded order. Empty
// clusters are retired and labels compacted.
void gibbs_sweep(DpmmState& state, const Matrix& X, const NiwPrior& prior,
                 const DpmmConfig& config, Rng& rng);

struct DpmmFit {
    DpmmState state;  // MAP over post-burn-in sweeps
    std::vector<Responsibilities> train_responsibilities;
};

DpmmFit fit_dpmm(const Matrix& X, const NiwPrior& prior, const DpmmConfig& config);

// Posterior membership probabilities for a new point. New-cluster mass is
// folded proportionally into the existing clusters so downstream experts
// always receive a distribution over fitted clusters.
Responsibilities responsibilities(const DpmmState& state, const NiwPrior& prior,
                                  double alpha, const Eigen::Ref<const Vector>& x_new);

// Recompute all sufficient statistics from scratch (consistency checks).
std::vector<ClusterStats> recompute_stats(const std::vector<int>& assignments,
                                          const Matrix& X, int n_clusters);

}  // namespace sodip
