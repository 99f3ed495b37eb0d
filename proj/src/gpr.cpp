#include "sodip/gpr.hpp"

#include <algorithm>
#include <numeric>

namespace sodip {

KernelFamily kernel_family_from_string(const std::string& name) {
    if (name == "se" || name == "squared-exponential") return KernelFamily::SquaredExponential;
    if (name == "matern32" || name == "matern-3/2") return KernelFamily::Matern32;
    if (name == "matern52" || name == "matern-5/2") return KernelFamily::Matern52;
    if (name == "rbf-ard" || name == "rbf_ard") return KernelFamily::RbfArd;
    throw Error("unknown kernel family '" + name + "'");
}

std::string kernel_family_name(KernelFamily family) {
    switch (family) {
        case KernelFamily::SquaredExponential: return "se";
        case KernelFamily::Matern32: return "matern32";
        case KernelFamily::Matern52: return "matern52";
        case KernelFamily::RbfArd: return "rbf-ard";
    }
    return "?";
}

void Kernel::validate() const {
    if (!(signal_variance > 0.0)) throw Error("Kernel: signal_variance must be > 0");
    if (lengthscales.size() < 1) throw Error("Kernel: needs at least one lengthscale");
    for (Index i = 0; i < lengthscales.size(); ++i) {
        if (!(lengthscales[i] > 0.0)) throw Error("Kernel: lengthscales must be > 0");
    }
}

namespace {

double scaled_distance(const Kernel& k, const Eigen::Ref<const Vector>& x,
                       const Eigen::Ref<const Vector>& xp) {
    if (x.size() != xp.size()) {
        throw DimensionMismatch("kernel_eval: input dimensions differ");
    }
    if (k.lengthscales.size() != 1 && k.lengthscales.size() != x.size()) {
        throw DimensionMismatch("kernel_eval: lengthscale count does not match inputs");
    }
    double r2 = 0.0;
    for (Index j = 0; j < x.size(); ++j) {
        const double l = k.lengthscales.size() == 1 ? k.lengthscales[0] : k.lengthscales[j];
        const double d = (x[j] - xp[j]) / l;
        r2 += d * d;
    }
    return std::sqrt(r2);
}

double radial_form(KernelFamily family, double r) {
    switch (family) {
        case KernelFamily::SquaredExponential:
        case KernelFamily::RbfArd:
            return std::exp(-0.5 * r * r);
        case KernelFamily::Matern32: {
            const double a = std::sqrt(3.0) * r;
            return (1.0 + a) * std::exp(-a);
        }
        case KernelFamily::Matern52: {
            const double a = std::sqrt(5.0) * r;
            return (1.0 + a + a * a / 3.0) * std::exp(-a);
        }
    }
    return 0.0;
}

constexpr double kSigma2Floor = 1e-8;

}  // namespace

double kernel_eval(const Kernel& k, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& xp) {
    return k.signal_variance * radial_form(k.family, scaled_distance(k, x, xp));
}

Matrix kernel_gram(const Kernel& k, const Matrix& X) {
    const Index n = X.rows();
    Matrix K(n, n);
    for (Index i = 0; i < n; ++i) {
        K(i, i) = k.signal_variance;
        for (Index j = i + 1; j < n; ++j) {
            K(i, j) = kernel_eval(k, X.row(i).transpose(), X.row(j).transpose());
            K(j, i) = K(i, j);
        }
    }
    return K;
}

GprModel gpr_fit(const Matrix& X, const Vector& y, const Kernel& kernel, double sigma2) {
    if (X.rows() < 1 || X.rows() != y.size()) {
        throw DimensionMismatch("gpr_fit: X rows and y length differ or empty");
    }
    kernel.validate();

    GprModel m;
    m.X = X;
    m.y = y;
    m.kernel = kernel;
    m.sigma2 = std::max(sigma2, kSigma2Floor);

    const Matrix K = kernel_gram(kernel, X);
    double jitter = 0.0;
    for (;;) {
        Matrix Kn = K;
        Kn.diagonal().array() += m.sigma2 + jitter;
        m.chol.compute(Kn);
        if (m.chol.info() == Eigen::Success) break;
        jitter = jitter == 0.0 ? 1e-10 : jitter * 2.0;
        if (jitter > 1e-4) {
            throw NotPositiveDefinite("gpr_fit: Gram matrix not PD even at jitter 1e-4");
        }
    }
    m.jitter = jitter;
    m.alpha = m.chol.solve(y);
    return m;
}

GprPrediction gpr_predict(const GprModel& model, const Eigen::Ref<const Vector>& x) {
    if (x.size() != model.dim()) {
        throw DimensionMismatch("gpr_predict: expected dimension " +
                                std::to_string(model.dim()));
    }
    const Index n = model.X.rows();
    Vector kstar(n);
    for (Index i = 0; i < n; ++i) {
        kstar[i] = kernel_eval(model.kernel, x, model.X.row(i).transpose());
    }
    GprPrediction out;
    out.mean = kstar.dot(model.alpha);
    const Vector v = model.chol.solve(kstar);
    out.var = std::max(0.0, model.kernel.signal_variance - kstar.dot(v));
    return out;
}

double gpr_log_marginal_likelihood(const Matrix& X, const Vector& y,
                                   const Kernel& kernel, double sigma2) {
    const Index n = X.rows();
    Matrix K = kernel_gram(kernel, X);
    K.diagonal().array() += std::max(sigma2, kSigma2Floor);
    Eigen::LLT<Matrix> llt(K);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    double logdet = 0.0;
    for (Index i = 0; i < n; ++i) logdet += std::log(llt.matrixL()(i, i));
    const Vector alpha = llt.solve(y);
    return -0.5 * y.dot(alpha) - logdet - 0.5 * double(n) * std::log(2.0 * M_PI);
}

Kernel median_heuristic_kernel(const Matrix& X, KernelFamily family, bool ard) {
    const Index n = X.rows();
    const Index d = X.cols();
    Kernel k;
    k.family = family;
    k.signal_variance = 1.0;
    k.lengthscales = Vector::Ones(ard ? d : 1);

    // Median absolute pairwise difference per dimension, capped at ~200 rows
    // of pairs for large inputs.
    const Index stride = std::max<Index>(1, n / 200);
    for (Index j = 0; j < (ard ? d : 1); ++j) {
        std::vector<double> diffs;
        for (Index i = 0; i < n; i += stride) {
            for (Index l = i + stride; l < n; l += stride) {
                double dd = 0.0;
                if (ard) {
                    dd = std::abs(X(i, j) - X(l, j));
                } else {
                    dd = (X.row(i) - X.row(l)).norm();
                }
                if (dd > 0.0) diffs.push_back(dd);
            }
        }
        double med = 1.0;
        if (!diffs.empty()) {
            std::nth_element(diffs.begin(), diffs.begin() + diffs.size() / 2, diffs.end());
            med = diffs[diffs.size() / 2];
        }
        k.lengthscales[j] = med > 0.0 ? med : 1.0;
    }
    return k;
}

HyperparamResult optimize_hyperparams(const Matrix& X, const Vector& y,
                                      KernelFamily family,
                                      const OptimizeOptions& options) {
    if (X.rows() < 5) {
        throw TooFewRows("optimize_hyperparams: needs >= 5 rows, got " +
                         std::to_string(X.rows()));
    }
    const bool ard = options.ard;
    const Index n_ls = ard ? X.cols() : 1;
    const double y_var = std::max((y.array() - y.mean()).square().mean(), 1e-12);

    const Kernel med = median_heuristic_kernel(X, family, ard);

    // theta = [log sf2, log sn2, log l_1 .. log l_m], clamped to [-18, 18].
    const Index n_par = 2 + n_ls;
    auto unpack = [&](const Vector& theta, Kernel& k, double& s2) {
        k.family = family;
        k.signal_variance = std::exp(theta[0]);
        s2 = std::max(std::exp(theta[1]), kSigma2Floor);
        k.lengthscales = theta.segment(2, n_ls).array().exp();
    };
    auto objective = [&](const Vector& theta) {
        Kernel k;
        double s2;
        unpack(theta, k, s2);
        return gpr_log_marginal_likelihood(X, y, k, s2);
    };

    Vector theta0(n_par);
    theta0[0] = std::log(y_var);
    theta0[1] = std::log(0.1 * y_var);
    for (Index j = 0; j < n_ls; ++j) theta0[2 + j] = std::log(med.lengthscales[j]);

    Vector best_theta = theta0;
    double best_ll = -std::numeric_limits<double>::infinity();

    Rng rng(options.seed);
    for (int start = 0; start < options.n_starts; ++start) {
        Vector theta = theta0;
        if (start == 1) {
            // Short-lengthscale, low-noise hypothesis: catches oscillatory
            // structure the median heuristic smooths over.
            for (Index j = 0; j < n_ls; ++j) theta[2 + j] -= std::log(5.0);
            theta[1] = std::log(0.01 * y_var);
        } else if (start > 1) {
            for (Index j = 0; j < n_par; ++j) theta[j] += rng.normal() * 1.0;
        }
        double current = objective(theta);
        int evals = 1;
        double step = 0.8;
        while (evals < options.evals_per_start && step > 1e-3) {
            bool improved = false;
            for (Index j = 0; j < n_par && evals < options.evals_per_start; ++j) {
                for (double dir : {+1.0, -1.0}) {
                    if (evals >= options.evals_per_start) break;
                    Vector cand = theta;
                    cand[j] = std::clamp(cand[j] + dir * step, -18.0, 18.0);
                    const double ll = objective(cand);
                    ++evals;
                    if (ll > current) {
                        current = ll;
                        theta = cand;
                        improved = true;
                        break;  // keep walking this coordinate next cycle
                    }
                }
            }
            if (!improved) step *= 0.5;
        }
        if (current > best_ll) {
            best_ll = current;
            best_theta = theta;
        }
    }

    HyperparamResult result;
    if (!std::isfinite(best_ll)) {
        // Pathological likelihood everywhere: fall back to the heuristic.
        result.kernel = med;
        result.kernel.signal_variance = y_var;
        result.sigma2 = std::max(0.1 * y_var, kSigma2Floor);
        result.log_marginal = gpr_log_marginal_likelihood(X, y, result.kernel, result.sigma2);
        return result;
    }
    unpack(best_theta, result.kernel, result.sigma2);
    result.log_marginal = best_ll;
    return result;
}

ClusterExperts experts_fit(const Matrix& X, const Vector& y,
                           const std::vector<int>& cluster_of_row, int n_clusters,
                           const ExpertsFitOptions& options) {
    const Index n = X.rows();
    if (static_cast<Index>(cluster_of_row.size()) != n || y.size() != n) {
        throw DimensionMismatch("experts_fit: row/label/target counts differ");
    }

    std::vector<std::vector<Index>> rows_of(n_clusters);
    for (Index i = 0; i < n; ++i) rows_of[cluster_of_row[i]].push_back(i);

    std::vector<int> qualifying;
    for (int c = 0; c < n_clusters; ++c) {
        if (static_cast<Index>(rows_of[c].size()) >= options.min_cluster_size) {
            qualifying.push_back(c);
        }
    }
    if (qualifying.empty()) {
        throw NoQualifyingCluster("experts_fit: no cluster reaches min size " +
                                  std::to_string(options.min_cluster_size));
    }

    auto centroid = [&](const std::vector<Index>& rows) {
        Vector c = Vector::Zero(X.cols());
        for (Index i : rows) c += X.row(i).transpose();
        return Vector(c / double(rows.size()));
    };

    // Mahalanobis distance from a small cluster's centroid to each
    // qualifying cluster's centroid, under that cluster's own covariance.
    auto nearest_qualifying = [&](const Vector& c_small) {
        int best = qualifying.front();
        double best_d = std::numeric_limits<double>::infinity();
        for (int q : qualifying) {
            const std::vector<Index>& rows = rows_of[q];
            const Vector cq = centroid(rows);
            Matrix cov = Matrix::Zero(X.cols(), X.cols());
            for (Index i : rows) {
                const Vector d = X.row(i).transpose() - cq;
                cov.noalias() += d * d.transpose();
            }
            cov /= double(rows.size());
            cov.diagonal().array() += 1e-6;
            const Vector delta = c_small - cq;
            const double d2 = delta.dot(Eigen::LLT<Matrix>(cov).solve(delta));
            if (d2 < best_d) {
                best_d = d2;
                best = q;
            }
        }
        return best;
    };

    ClusterExperts out;
    out.expert_of_cluster.assign(n_clusters, -1);

    std::vector<std::vector<Index>> expert_rows;
    for (std::size_t e = 0; e < qualifying.size(); ++e) {
        out.expert_of_cluster[qualifying[e]] = static_cast<int>(e);
        expert_rows.push_back(rows_of[qualifying[e]]);
    }
    for (int c = 0; c < n_clusters; ++c) {
        if (out.expert_of_cluster[c] >= 0 || rows_of[c].empty()) continue;
        const int q = nearest_qualifying(centroid(rows_of[c]));
        const int e = out.expert_of_cluster[q];
        out.expert_of_cluster[c] = e;
        expert_rows[e].insert(expert_rows[e].end(), rows_of[c].begin(), rows_of[c].end());
    }
    for (int c = 0; c < n_clusters; ++c) {
        if (out.expert_of_cluster[c] < 0) out.expert_of_cluster[c] = 0;  // empty cluster
    }

    for (std::size_t e = 0; e < expert_rows.size(); ++e) {
        std::vector<Index>& rows = expert_rows[e];
        std::sort(rows.begin(), rows.end());
        Matrix Xc(rows.size(), X.cols());
        Vector yc(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            Xc.row(i) = X.row(rows[i]);
            yc[i] = y[rows[i]];
        }

        ClusterExpert expert;
        expert.y_mean = yc.mean();
        const double sd = std::sqrt((yc.array() - expert.y_mean).square().mean());
        expert.y_std = sd > 1e-12 ? sd : 1.0;
        Vector yn = (yc.array() - expert.y_mean) / expert.y_std;

        if (Xc.rows() >= 5) {
            OptimizeOptions opt = options.optimize;
            opt.seed = derive_seed(options.optimize.seed, e);
            const HyperparamResult h = optimize_hyperparams(Xc, yn, options.family, opt);
            expert.model = gpr_fit(Xc, yn, h.kernel, h.sigma2);
        } else {
            Kernel k = median_heuristic_kernel(Xc, options.family, options.optimize.ard);
            expert.model = gpr_fit(Xc, yn, k, 0.1);
        }
        out.experts.push_back(std::move(expert));
    }
    return out;
}

MixturePrediction experts_predict(const ClusterExperts& experts, const Vector& resp,
                                  const Eigen::Ref<const Vector>& x) {
    if (experts.experts.empty()) {
        throw EmptyResponsibilities("experts_predict: no experts");
    }
    if (resp.size() != static_cast<Index>(experts.expert_of_cluster.size())) {
        throw EmptyResponsibilities("experts_predict: responsibility length " +
                                    std::to_string(resp.size()) + " does not match " +
                                    std::to_string(experts.expert_of_cluster.size()) +
                                    " clusters");
    }

    Vector w = Vector::Zero(static_cast<Index>(experts.experts.size()));
    for (Index c = 0; c < resp.size(); ++c) {
        w[experts.expert_of_cluster[c]] += resp[c];
    }
    const double total = w.sum();
    if (!(total > 0.0)) {
        throw EmptyResponsibilities("experts_predict: responsibilities sum to 0");
    }
    w /= total;

    MixturePrediction out;
    double second_moment = 0.0;
    for (Index e = 0; e < w.size(); ++e) {
        const ClusterExpert& ex = experts.experts[e];
        const GprPrediction p = gpr_predict(ex.model, x);
        const double mean = p.mean * ex.y_std + ex.y_mean;
        const double var = (p.var + ex.model.sigma2) * ex.y_std * ex.y_std;
        out.per_expert.emplace_back(w[e], mean, var);
        out.mean += w[e] * mean;
        second_moment += w[e] * (var + mean * mean);
    }
    out.var = std::max(0.0, second_moment - out.mean * out.mean);
    return out;
}

}  // namespace sodip
