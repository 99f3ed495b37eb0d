#include "sodip/stacker.hpp"

#include "sodip/transforms.hpp"

#include <algorithm>
#include <numeric>

namespace sodip {

void GbtConfig::validate() const {
    if (n_trees < 1) throw Error("GbtConfig: n_trees must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0))
        throw Error("GbtConfig: learning_rate must be in (0, 1]");
    if (max_depth < 1 || max_depth > 16)
        throw Error("GbtConfig: max_depth must be in [1, 16]");
    if (!(subsample > 0.0 && subsample <= 1.0))
        throw Error("GbtConfig: subsample must be in (0, 1]");
    if (!(colsample > 0.0 && colsample <= 1.0))
        throw Error("GbtConfig: colsample must be in (0, 1]");
    if (min_child_weight < 0.0) throw Error("GbtConfig: min_child_weight must be >= 0");
    if (gamma < 0.0) throw Error("GbtConfig: gamma must be >= 0");
}

double RegressionTree::predict_row(const Eigen::Ref<const Vector>& x) const {
    int node = 0;
    while (nodes[node].feature >= 0) {
        node = x[nodes[node].feature] < nodes[node].threshold ? nodes[node].left
                                                              : nodes[node].right;
    }
    return nodes[node].value;
}

namespace {

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double gain = -1.0;
};

// Best variance-reduction split over the given rows and features. Gains tie
// toward the first (feature, position) found, which keeps tree construction
// deterministic.
SplitChoice best_split(const Matrix& X, const Vector& residual,
                       const std::vector<Index>& rows, const std::vector<int>& features,
                       double min_child_weight, double gamma) {
    SplitChoice best;
    const double min_gain = std::max(gamma, 1e-12);

    const std::size_t m = rows.size();
    std::vector<std::pair<double, double>> vals(m);  // (feature value, residual)

    double total_sum = 0.0, total_sq = 0.0;
    for (Index r : rows) {
        total_sum += residual[r];
        total_sq += residual[r] * residual[r];
    }
    const double parent_sse = total_sq - total_sum * total_sum / double(m);

    for (int f : features) {
        for (std::size_t i = 0; i < m; ++i) {
            vals[i] = {X(rows[i], f), residual[rows[i]]};
        }
        std::sort(vals.begin(), vals.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });

        double left_sum = 0.0, left_sq = 0.0;
        for (std::size_t i = 0; i + 1 < m; ++i) {
            left_sum += vals[i].second;
            left_sq += vals[i].second * vals[i].second;
            if (vals[i].first == vals[i + 1].first) continue;  // no cut between ties
            const double nl = double(i + 1);
            const double nr = double(m) - nl;
            if (nl < min_child_weight || nr < min_child_weight) continue;
            const double right_sum = total_sum - left_sum;
            const double right_sq = total_sq - left_sq;
            const double sse = (left_sq - left_sum * left_sum / nl) +
                               (right_sq - right_sum * right_sum / nr);
            const double gain = parent_sse - sse;
            if (gain >= min_gain && gain > best.gain) {
                best.gain = gain;
                best.feature = f;
                best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
            }
        }
    }
    return best;
}

int grow_node(RegressionTree& tree, const Matrix& X, const Vector& residual,
              std::vector<Index>& rows, const std::vector<int>& features, int depth,
              const GbtConfig& cfg) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    double sum = 0.0;
    for (Index r : rows) sum += residual[r];
    tree.nodes[id].value = sum / double(rows.size());

    if (depth >= cfg.max_depth || rows.size() < 2) return id;

    const SplitChoice choice =
        best_split(X, residual, rows, features, cfg.min_child_weight, cfg.gamma);
    if (choice.feature < 0) return id;

    std::vector<Index> left_rows, right_rows;
    left_rows.reserve(rows.size());
    right_rows.reserve(rows.size());
    for (Index r : rows) {
        (X(r, choice.feature) < choice.threshold ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    tree.nodes[id].feature = choice.feature;
    tree.nodes[id].threshold = choice.threshold;
    tree.nodes[id].left = grow_node(tree, X, residual, left_rows, features, depth + 1, cfg);
    tree.nodes[id].right = grow_node(tree, X, residual, right_rows, features, depth + 1, cfg);
    return id;
}

}  // namespace

GbtModel gbt_fit(const Matrix& X, const Vector& y, const GbtConfig& config) {
    config.validate();
    if (X.rows() < 10) {
        throw TooFewRows("gbt_fit: needs >= 10 rows, got " + std::to_string(X.rows()));
    }
    if (X.rows() != y.size()) {
        throw DimensionMismatch("gbt_fit: X rows and y length differ");
    }
    if (!y.allFinite()) throw NonFinite("gbt_fit: targets must be finite");

    const Index n = X.rows();
    const int n_features = static_cast<int>(X.cols());

    GbtModel model;
    model.base_score = y.mean();
    model.learning_rate = config.learning_rate;
    model.n_features = X.cols();
    model.trees.reserve(config.n_trees);

    Vector prediction = Vector::Constant(n, model.base_score);
    Vector residual = y - prediction;

    Rng rng(config.seed);
    std::vector<Index> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), Index(0));
    std::vector<int> all_features(n_features);
    std::iota(all_features.begin(), all_features.end(), 0);

    const Index rows_per_tree =
        std::max<Index>(2, static_cast<Index>(std::llround(config.subsample * double(n))));
    const int feats_per_tree =
        std::max(1, static_cast<int>(std::llround(config.colsample * double(n_features))));

    for (int t = 0; t < config.n_trees; ++t) {
        std::vector<Index> rows = all_rows;
        if (rows_per_tree < n) {
            rng.shuffle(rows);
            rows.resize(rows_per_tree);
            std::sort(rows.begin(), rows.end());
        }
        std::vector<int> features = all_features;
        if (feats_per_tree < n_features) {
            rng.shuffle(features);
            features.resize(feats_per_tree);
            std::sort(features.begin(), features.end());
        }

        RegressionTree tree;
        grow_node(tree, X, residual, rows, features, 0, config);

        // Residuals update over all rows, not just the subsample.
        for (Index i = 0; i < n; ++i) {
            const double delta = config.learning_rate * tree.predict_row(X.row(i));
            prediction[i] += delta;
            residual[i] -= delta;
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

double gbt_predict_row(const GbtModel& model, const Eigen::Ref<const Vector>& x) {
    if (x.size() != model.n_features) {
        throw DimensionMismatch("gbt_predict: expected " + std::to_string(model.n_features) +
                                " features, got " + std::to_string(x.size()));
    }
    double out = model.base_score;
    for (const RegressionTree& tree : model.trees) {
        out += model.learning_rate * tree.predict_row(x);
    }
    return out;
}

Vector gbt_predict(const GbtModel& model, const Matrix& X) {
    if (X.cols() != model.n_features) {
        throw DimensionMismatch("gbt_predict: expected " + std::to_string(model.n_features) +
                                " features, got " + std::to_string(X.cols()));
    }
    Vector out(X.rows());
    for (Index i = 0; i < X.rows(); ++i) out[i] = gbt_predict_row(model, X.row(i));
    return out;
}

std::uint64_t fold_seed(std::uint64_t base_seed, int fold) {
    return derive_seed(base_seed, static_cast<std::uint64_t>(fold) + 101);
}

std::vector<int> make_folds(Index n, int k, std::uint64_t seed) {
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index(0));
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<int> fold(n);
    for (Index pos = 0; pos < n; ++pos) {
        fold[order[pos]] = static_cast<int>(pos % k);
    }
    return fold;
}

MetaFeatureSet oof_meta(const Matrix& X, const Vector& y, const GbtConfig& config,
                        int k, std::uint64_t seed, const Vector& weights) {
    const Index n = X.rows();
    if (k < 2 || Index(k) > n) {
        throw BadFoldCount("oof_meta: need 2 <= k <= rows (k=" + std::to_string(k) +
                           ", rows=" + std::to_string(n) + ")");
    }
    if (weights.size() != n || y.size() != n) {
        throw DimensionMismatch("oof_meta: X, y, weights lengths differ");
    }

    MetaFeatureSet meta;
    meta.fold_assignment = make_folds(n, k, seed);
    meta.oof_predictions = Vector::Zero(n);
    meta.fold_lambdas = Vector::Zero(k);
    meta.z = Vector::Zero(n);

    for (int f = 0; f < k; ++f) {
        std::vector<Index> hold, rest;
        for (Index i = 0; i < n; ++i) {
            (meta.fold_assignment[i] == f ? hold : rest).push_back(i);
        }

        Matrix Xr(rest.size(), X.cols());
        Vector yr(rest.size());
        for (std::size_t j = 0; j < rest.size(); ++j) {
            Xr.row(j) = X.row(rest[j]);
            yr[j] = y[rest[j]];
        }

        GbtConfig fold_cfg = config;
        fold_cfg.seed = fold_seed(seed, f);
        const GbtModel model = gbt_fit(Xr, yr, fold_cfg);

        // Lambda is learned on this fold model's own training rows; the
        // held-out rows never influence it.
        Vector train_wg(rest.size());
        for (std::size_t j = 0; j < rest.size(); ++j) {
            train_wg[j] = weights[rest[j]] * gbt_predict_row(model, Xr.row(j));
        }
        double lambda;
        try {
            lambda = yj_fit_mle(train_wg);
        } catch (const DegenerateSample&) {
            lambda = 1.0;  // identity transform for degenerate folds
        }
        meta.fold_lambdas[f] = lambda;

        for (Index i : hold) {
            const double pred = gbt_predict_row(model, X.row(i));
            meta.oof_predictions[i] = pred;
            meta.z[i] = yj_forward(lambda, weights[i] * pred);
        }
    }
    return meta;
}

}  // namespace sodip
