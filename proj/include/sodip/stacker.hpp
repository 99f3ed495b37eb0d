#pragma once

#include "sodip/common.hpp"

namespace sodip {

// ---------------------------------------------------------------------------
// Gradient-boosted regression trees under squared error. Hessians are
// constant 1 for this objective, so min_child_weight thresholds leaf row
// counts and split gain is plain variance reduction.
// ---------------------------------------------------------------------------

struct GbtConfig {
    int n_trees = 300;
    double learning_rate = 0.05;
    int max_depth = 6;
    double subsample = 1.0;   // row fraction per tree
    double colsample = 1.0;   // feature fraction per tree
    double min_child_weight = 1.0;
    double gamma = 0.0;       // minimum split gain
    std::uint64_t seed = 0;

    void validate() const;
};

struct TreeNode {
    int feature = -1;         // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;       // leaf value (unscaled residual mean)
};

struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict_row(const Eigen::Ref<const Vector>& x) const;
};

struct GbtModel {
    double base_score = 0.0;
    double learning_rate = 0.0;
    Index n_features = 0;
    std::vector<RegressionTree> trees;
};

GbtModel gbt_fit(const Matrix& X, const Vector& y, const GbtConfig& config);
Vector gbt_predict(const GbtModel& model, const Matrix& X);
double gbt_predict_row(const GbtModel& model, const Eigen::Ref<const Vector>& x);

// ---------------------------------------------------------------------------
// Leak-free stacked generalization: k-fold out-of-fold first-stage
// predictions, a Yeo-Johnson lambda fitted per fold on the fold model's own
// training rows, and the meta-variable Z assembled so that no row's Z
// depends on its own target through any fitted component.
// ---------------------------------------------------------------------------

struct MetaFeatureSet {
    Vector oof_predictions;            // first-stage prediction per row
    std::vector<int> fold_assignment;  // fold id per row
    Vector fold_lambdas;               // fitted lambda per fold
    Vector z;                          // z[i] = yj(lambda_fold(i), w[i]*oof[i])
};

// Seed used for the model trained on fold f's complement. Exposed so the
// no-leak check can retrain a fold model bit-exactly.
std::uint64_t fold_seed(std::uint64_t base_seed, int fold);

std::vector<int> make_folds(Index n, int k, std::uint64_t seed);

MetaFeatureSet oof_meta(const Matrix& X, const Vector& y, const GbtConfig& config,
                        int k, std::uint64_t seed, const Vector& weights);

}  // namespace sodip
