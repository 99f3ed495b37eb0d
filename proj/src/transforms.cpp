#include "sodip/transforms.hpp"

#include <algorithm>
#include <set>

namespace sodip {

namespace {
constexpr double kLambdaEps = 1e-12;
}

double yj_forward(double lambda, double x) {
    if (!std::isfinite(x)) {
        throw NonFinite("yj_forward: input is not finite");
    }
    if (x >= 0.0) {
        if (std::abs(lambda) < kLambdaEps) return std::log1p(x);
        return std::expm1(lambda * std::log1p(x)) / lambda;
    }
    const double two_ml = 2.0 - lambda;
    if (std::abs(two_ml) < kLambdaEps) return -std::log1p(-x);
    return -std::expm1(two_ml * std::log1p(-x)) / two_ml;
}

double yj_inverse(double lambda, double z) {
    if (!std::isfinite(z)) {
        throw NonFinite("yj_inverse: input is not finite");
    }
    if (z >= 0.0) {
        if (std::abs(lambda) < kLambdaEps) return std::expm1(z);
        const double t = lambda * z + 1.0;
        if (t <= 0.0) {
            throw OutOfImage("yj_inverse: z=" + std::to_string(z) +
                             " outside the image for lambda=" + std::to_string(lambda));
        }
        return std::expm1(std::log(t) / lambda);
    }
    const double two_ml = 2.0 - lambda;
    if (std::abs(two_ml) < kLambdaEps) return -std::expm1(-z);
    const double t = 1.0 - two_ml * z;
    if (t <= 0.0) {
        throw OutOfImage("yj_inverse: z=" + std::to_string(z) +
                         " outside the image for lambda=" + std::to_string(lambda));
    }
    return -std::expm1(std::log(t) / two_ml);
}

Vector yj_forward(double lambda, const Vector& x) {
    Vector out(x.size());
    for (Index i = 0; i < x.size(); ++i) out[i] = yj_forward(lambda, x[i]);
    return out;
}

double yj_log_likelihood(double lambda, const Vector& values) {
    const Index n = values.size();
    Vector z(n);
    double log_jacobian = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double x = values[i];
        z[i] = yj_forward(lambda, x);
        // d/dx of the transform: (x+1)^(l-1) for x>=0, (1-x)^(1-l) for x<0.
        log_jacobian += x >= 0.0 ? (lambda - 1.0) * std::log1p(x)
                                 : (1.0 - lambda) * std::log1p(-x);
    }
    const double mean = z.mean();
    double var = (z.array() - mean).square().sum() / static_cast<double>(n);
    var = std::max(var, 1e-300);
    return -0.5 * static_cast<double>(n) * (std::log(2.0 * M_PI) + std::log(var) + 1.0) +
           log_jacobian;
}

double yj_fit_mle(const Vector& values) {
    std::set<double> distinct(values.data(), values.data() + values.size());
    if (distinct.size() < 3) {
        throw DegenerateSample("yj_fit_mle: needs >= 3 distinct values, got " +
                               std::to_string(distinct.size()));
    }

    constexpr double lo = -5.0, hi = 5.0;
    constexpr int grid_points = 101;
    int best = 0;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (int g = 0; g < grid_points; ++g) {
        const double lambda = lo + (hi - lo) * g / (grid_points - 1);
        const double ll = yj_log_likelihood(lambda, values);
        if (ll > best_ll) {
            best_ll = ll;
            best = g;
        }
    }

    const double step = (hi - lo) / (grid_points - 1);
    double a = std::max(lo, lo + step * (best - 1));
    double b = std::min(hi, lo + step * (best + 1));

    // Golden-section refinement of the bracket.
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = yj_log_likelihood(c, values);
    double fd = yj_log_likelihood(d, values);
    for (int it = 0; it < 80 && (b - a) > 1e-8; ++it) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = yj_log_likelihood(c, values);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = yj_log_likelihood(d, values);
        }
    }
    return 0.5 * (a + b);
}

CompositeWeight composite_weight(double mw_base, double mw_monomer,
                                 double mw_solvent, double mw_additive) {
    if (!(mw_monomer > 0.0)) {
        throw MissingMonomer("composite_weight: monomer molecular weight must be > 0, got " +
                             std::to_string(mw_monomer));
    }
    CompositeWeight cw;
    cw.mw_base = std::max(mw_base, 0.0);
    cw.mw_monomer = mw_monomer;
    cw.mw_solvent = std::max(mw_solvent, 0.0);
    cw.mw_additive = std::max(mw_additive, 0.0);
    const double total = cw.mw_base + cw.mw_monomer + cw.mw_solvent + cw.mw_additive;
    cw.w = std::min(mw_monomer / total, 1.0);
    return cw;
}

Standardizer Standardizer::fit(const Matrix& X) {
    if (X.rows() < 2) {
        throw TooFewRows("Standardizer::fit: needs >= 2 rows, got " +
                         std::to_string(X.rows()));
    }
    Standardizer s;
    s.mean_ = X.colwise().mean();
    s.std_ = Vector(X.cols());
    for (Index j = 0; j < X.cols(); ++j) {
        s.std_[j] = std::sqrt((X.col(j).array() - s.mean_[j]).square().sum() /
                              static_cast<double>(X.rows()));
    }
    return s;
}

Matrix Standardizer::apply(const Matrix& X) const {
    if (X.cols() != mean_.size()) {
        throw DimensionMismatch("Standardizer::apply: expected " +
                                std::to_string(mean_.size()) + " columns, got " +
                                std::to_string(X.cols()));
    }
    Matrix out(X.rows(), X.cols());
    for (Index j = 0; j < X.cols(); ++j) {
        if (std_[j] > 0.0) {
            out.col(j) = (X.col(j).array() - mean_[j]) / std_[j];
        } else {
            out.col(j).setZero();
        }
    }
    return out;
}

Vector Standardizer::apply_row(const Vector& x) const {
    if (x.size() != mean_.size()) {
        throw DimensionMismatch("Standardizer::apply_row: expected " +
                                std::to_string(mean_.size()) + " entries, got " +
                                std::to_string(x.size()));
    }
    Vector out(x.size());
    for (Index j = 0; j < x.size(); ++j) {
        out[j] = std_[j] > 0.0 ? (x[j] - mean_[j]) / std_[j] : 0.0;
    }
    return out;
}

Standardizer Standardizer::from_moments(Vector mean, Vector stddev) {
    Standardizer s;
    s.mean_ = std::move(mean);
    s.std_ = std::move(stddev);
    return s;
}

PcaModel PcaModel::fit(const Matrix& X, Index cap) {
    if (cap < 1) {
        throw DimensionMismatch("PcaModel::fit: cap must be >= 1");
    }
    const Index n = X.rows();
    const Index d = X.cols();
    PcaModel m;
    m.center_ = X.colwise().mean();
    Matrix centered = X.rowwise() - m.center_.transpose();
    Matrix cov = centered.transpose() * centered / std::max<double>(1.0, double(n - 1));

    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    const Index r = std::min({cap, d, n});

    // SelfAdjointEigenSolver sorts ascending; take the top r in reverse.
    m.components_ = Matrix(r, d);
    m.eigenvalues_ = Vector(r);
    for (Index k = 0; k < r; ++k) {
        const Index src = d - 1 - k;
        Vector comp = solver.eigenvectors().col(src);
        Index imax = 0;
        comp.cwiseAbs().maxCoeff(&imax);
        if (comp[imax] < 0.0) comp = -comp;
        m.components_.row(k) = comp.transpose();
        m.eigenvalues_[k] = std::max(solver.eigenvalues()[src], 0.0);
    }
    return m;
}

Matrix PcaModel::apply(const Matrix& X) const {
    if (X.cols() != center_.size()) {
        throw DimensionMismatch("PcaModel::apply: expected " +
                                std::to_string(center_.size()) + " columns, got " +
                                std::to_string(X.cols()));
    }
    return (X.rowwise() - center_.transpose()) * components_.transpose();
}

Vector PcaModel::apply_row(const Vector& x) const {
    if (x.size() != center_.size()) {
        throw DimensionMismatch("PcaModel::apply_row: dimension mismatch");
    }
    return components_ * (x - center_);
}

Matrix PcaModel::reconstruct(const Matrix& scores) const {
    return (scores * components_).rowwise() + center_.transpose();
}

PcaModel PcaModel::from_parts(Matrix components, Vector center, Vector eigenvalues) {
    PcaModel m;
    m.components_ = std::move(components);
    m.center_ = std::move(center);
    m.eigenvalues_ = std::move(eigenvalues);
    return m;
}

}  // namespace sodip
