#pragma once

#include "sodip/common.hpp"

namespace sodip {

// ---------------------------------------------------------------------------
// Exact Gaussian process regression with closed-form predictive mean and
// variance, plus the responsibility-weighted mixture of per-cluster experts.
// ---------------------------------------------------------------------------

enum class KernelFamily {
    SquaredExponential,
    Matern32,
    Matern52,
    RbfArd,  // squared exponential with one lengthscale per input dimension
};

KernelFamily kernel_family_from_string(const std::string& name);
std::string kernel_family_name(KernelFamily family);

struct Kernel {
    KernelFamily family = KernelFamily::Matern52;
    double signal_variance = 1.0;
    Vector lengthscales;  // one per input dim (ARD) or a single shared entry

    void validate() const;
};

// k(x, x') on the scaled distance r = ||(x - x') / l||.
double kernel_eval(const Kernel& k, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& xp);

Matrix kernel_gram(const Kernel& k, const Matrix& X);

struct GprModel {
    Matrix X;            // training inputs
    Vector y;            // training targets (in whatever scale the caller fixed)
    Kernel kernel;
    double sigma2 = 1e-8;  // observation noise variance, floored at 1e-8
    double jitter = 0.0;   // extra diagonal added to make the Cholesky succeed

    Eigen::LLT<Matrix> chol;  // of K + (sigma2 + jitter) I
    Vector alpha;             // (K + sigma2 I)^{-1} y

    Index dim() const { return X.cols(); }
};

struct GprPrediction {
    double mean = 0.0;
    double var = 0.0;  // epistemic: k(x*,x*) - k*^T (K + s2 I)^-1 k*, clamped >= 0
};

GprModel gpr_fit(const Matrix& X, const Vector& y, const Kernel& kernel, double sigma2);
GprPrediction gpr_predict(const GprModel& model, const Eigen::Ref<const Vector>& x);

double gpr_log_marginal_likelihood(const Matrix& X, const Vector& y,
                                   const Kernel& kernel, double sigma2);

struct HyperparamResult {
    Kernel kernel;
    double sigma2 = 0.0;
    double log_marginal = 0.0;
};

struct OptimizeOptions {
    int n_starts = 8;
    int evals_per_start = 200;
    std::uint64_t seed = 0;
    bool ard = true;
};

// Maximizes the log marginal likelihood over log(signal variance),
// log(noise variance) and log lengthscales by multi-start coordinate
// ascent. Falls back to the median-distance heuristic on pathological
// likelihoods.
HyperparamResult optimize_hyperparams(const Matrix& X, const Vector& y,
                                      KernelFamily family,
                                      const OptimizeOptions& options = {});

// Median-heuristic initial kernel: per-dimension median absolute difference.
Kernel median_heuristic_kernel(const Matrix& X, KernelFamily family, bool ard);

// ---------------------------------------------------------------------------
// Cluster experts: one GP per qualifying DPMM cluster, targets standardized
// per cluster. Sub-threshold clusters are merged into the nearest qualifying
// cluster by Mahalanobis distance between centroids.
// ---------------------------------------------------------------------------

struct ClusterExpert {
    GprModel model;
    double y_mean = 0.0;  // target normalization for this cluster
    double y_std = 1.0;
};

struct ClusterExperts {
    std::vector<ClusterExpert> experts;
    // DPMM cluster id -> expert index (merged clusters share an expert).
    std::vector<int> expert_of_cluster;
};

struct ExpertsFitOptions {
    KernelFamily family = KernelFamily::Matern52;
    Index min_cluster_size = 5;
    OptimizeOptions optimize;
};

ClusterExperts experts_fit(const Matrix& X, const Vector& y,
                           const std::vector<int>& cluster_of_row, int n_clusters,
                           const ExpertsFitOptions& options);

struct MixturePrediction {
    double mean = 0.0;
    double var = 0.0;  // predictive (includes expert noise), law of total variance
    // Per expert: responsibility, de-normalized mean, de-normalized
    // predictive variance.
    std::vector<std::tuple<double, double, double>> per_expert;
};

// resp is a distribution over DPMM clusters (length = expert_of_cluster size).
MixturePrediction experts_predict(const ClusterExperts& experts, const Vector& resp,
                                  const Eigen::Ref<const Vector>& x);

}  // namespace sodip
