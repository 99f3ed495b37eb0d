#pragma once

#include "sodip/common.hpp"

namespace sodip {

// ---------------------------------------------------------------------------
// Yeo-Johnson power transform.
//
// Four-branch form, strictly increasing in x for every lambda:
//   x >= 0:  ((x+1)^l - 1)/l          (l != 0),   log(x+1)    (l == 0)
//   x <  0:  -((-x+1)^(2-l) - 1)/(2-l) (l != 2),  -log(1-x)   (l == 2)
// Branch selection treats |l| < 1e-12 (resp. |l-2| < 1e-12) as the log case.
// ---------------------------------------------------------------------------

double yj_forward(double lambda, double x);
double yj_inverse(double lambda, double z);

Vector yj_forward(double lambda, const Vector& x);

// Gaussian profile log-likelihood of the transformed data, including the
// log-Jacobian term. Exposed so tests can scan it independently.
double yj_log_likelihood(double lambda, const Vector& values);

// MLE of lambda over [-5, 5]: 101-point grid scan, then golden-section
// refinement around the best bracket. Requires >= 3 distinct values.
double yj_fit_mle(const Vector& values);

// ---------------------------------------------------------------------------
// Composite molecular-weight coefficient: the monomer's share of the total
// system molecular weight. Missing components enter as 0 g/mol.
// ---------------------------------------------------------------------------

struct CompositeWeight {
    double w = 1.0;
    double mw_base = 0.0;
    double mw_monomer = 0.0;
    double mw_solvent = 0.0;
    double mw_additive = 0.0;
};

CompositeWeight composite_weight(double mw_base, double mw_monomer,
                                 double mw_solvent, double mw_additive);

// ---------------------------------------------------------------------------
// Column-wise standardization fitted on training rows only. Constant columns
// map to 0 on apply.
// ---------------------------------------------------------------------------

class Standardizer {
public:
    Standardizer() = default;

    static Standardizer fit(const Matrix& X);

    Matrix apply(const Matrix& X) const;
    Vector apply_row(const Vector& x) const;

    const Vector& mean() const { return mean_; }
    const Vector& stddev() const { return std_; }

    // For serialization.
    static Standardizer from_moments(Vector mean, Vector stddev);

private:
    Vector mean_;
    Vector std_;
};

// ---------------------------------------------------------------------------
// PCA via eigendecomposition of the sample covariance. Components are rows
// of `components`, sorted by descending eigenvalue, each flipped so its
// largest-magnitude entry is positive.
// ---------------------------------------------------------------------------

class PcaModel {
public:
    PcaModel() = default;

    // Keeps r = min(cap, n_features, n_rows) components.
    static PcaModel fit(const Matrix& X, Index cap);

    Matrix apply(const Matrix& X) const;
    Vector apply_row(const Vector& x) const;

    // Back-projection into the original feature space (centered data
    // reconstruction plus the stored center).
    Matrix reconstruct(const Matrix& scores) const;

    Index retained() const { return components_.rows(); }
    const Matrix& components() const { return components_; }
    const Vector& center() const { return center_; }
    const Vector& eigenvalues() const { return eigenvalues_; }

    static PcaModel from_parts(Matrix components, Vector center, Vector eigenvalues);

private:
    Matrix components_;   // r x d, orthonormal rows
    Vector center_;
    Vector eigenvalues_;  // descending, length r
};

}  // namespace sodip
