#include "sodip/pipeline.hpp"

#include "sodip/eval.hpp"
#include "synthetic.hpp"

#include <doctest.h>

#include <thread>

using namespace sodip;

namespace {

PipelineConfig fast_config(std::uint64_t seed) {
    PipelineConfig cfg;
    cfg.encoder_dim = 16;
    cfg.gbt.n_trees = 80;
    cfg.gbt.learning_rate = 0.1;
    cfg.gbt.max_depth = 4;
    cfg.dpmm_sweeps = 120;
    cfg.dpmm_burn_in = 60;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("single-regime linear data fits cleanly") {
    const Dataset data = testgen::linear_dataset(220, 1);
    const SplitPlan plan = split(data, 0.75, 0.0, 2);
    const Dataset train = subset(data, plan.train_idx);
    const Dataset test = subset(data, plan.test_idx);

    const FittedPipeline p = fit_pipeline(train, fast_config(3));
    CHECK(p.dpmm.active_clusters() >= 1);
    CHECK(p.dpmm.active_clusters() <= 3);

    Vector yhat(test.size());
    for (Index i = 0; i < test.size(); ++i) {
        const Prediction pred = predict(p, test.records[i]);
        yhat[i] = pred.mean;
        CHECK(pred.pi_lower < pred.pi_upper);
        CHECK(pred.pi_lower <= pred.mean);
        CHECK(pred.mean <= pred.pi_upper);
        CHECK(pred.responsibilities.sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
    const Metrics m = metrics(test.target_vector(), yhat);
    CHECK(m.r2_defined);
    CHECK(m.r2 > 0.8);
}

TEST_CASE("k_max 1 degenerates to a single global expert") {
    const Dataset data = testgen::linear_dataset(120, 5);
    PipelineConfig cfg = fast_config(7);
    cfg.dpmm_k_max = 1;
    cfg.dpmm_sweeps = 40;
    cfg.dpmm_burn_in = 20;
    const FittedPipeline p = fit_pipeline(data, cfg);

    REQUIRE(p.dpmm.active_clusters() == 1);
    REQUIRE(p.experts.experts.size() == 1);

    const ClusterExpert& expert = p.experts.experts[0];
    for (Index i = 0; i < 20; ++i) {
        const RigRecord& rec = data.records[i];
        const Prediction pred = predict(p, rec);
        CHECK(pred.responsibilities.size() == 1);
        CHECK(pred.responsibilities[0] == doctest::Approx(1.0).epsilon(1e-12));

        const Vector v = p.five_vector(rec);
        const GprPrediction g = gpr_predict(expert.model, v);
        const double mu = g.mean * expert.y_std + expert.y_mean;
        const double var = (g.var + expert.model.sigma2) * expert.y_std * expert.y_std;
        CHECK(std::abs(pred.mean - mu) < 1e-10);
        CHECK(std::abs(pred.var - var) < 1e-10);
    }
}

TEST_CASE("prediction composes the responsibility-weighted experts") {
    std::vector<int> regime_of;
    const Dataset data =
        testgen::regime_dataset({testgen::three_regimes()[0], testgen::three_regimes()[1]},
                                60, 9, &regime_of);
    PipelineConfig cfg = fast_config(11);
    const FittedPipeline p = fit_pipeline(data, cfg);

    for (Index i = 0; i < 10; ++i) {
        const RigRecord& rec = data.records[i];
        const Prediction pred = predict(p, rec);

        const Vector v = p.five_vector(rec);
        const Responsibilities r =
            responsibilities(p.dpmm, p.prior, p.config.dpmm_alpha, v);
        double mu = 0.0;
        for (Index c = 0; c < r.probs.size(); ++c) {
            const ClusterExpert& e = p.experts.experts[p.experts.expert_of_cluster[c]];
            const GprPrediction g = gpr_predict(e.model, v);
            mu += r.probs[c] * (g.mean * e.y_std + e.y_mean);
        }
        CHECK(pred.mean == doctest::Approx(mu).epsilon(1e-10));
    }
}

TEST_CASE("fit is deterministic and the archive round-trips bit-exactly") {
    const Dataset data = testgen::linear_dataset(110, 13);
    const PipelineConfig cfg = fast_config(17);

    const FittedPipeline a = fit_pipeline(data, cfg);
    const FittedPipeline b = fit_pipeline(data, cfg);
    const std::string bytes_a = save_archive(a);
    const std::string bytes_b = save_archive(b);
    REQUIRE(bytes_a == bytes_b);

    const FittedPipeline loaded = load_archive(bytes_a);
    CHECK(save_archive(loaded) == bytes_a);

    const Dataset probe = testgen::linear_dataset(100, 14);
    for (const RigRecord& rec : probe.records) {
        const Prediction pa = predict(a, rec);
        const Prediction pl = predict(loaded, rec);
        REQUIRE(pa.mean == pl.mean);
        REQUIRE(pa.var == pl.var);
        REQUIRE(pa.pi_lower == pl.pi_lower);
        REQUIRE(pa.dominant_cluster == pl.dominant_cluster);
    }
}

TEST_CASE("corrupt and mismatched archives are rejected") {
    const Dataset data = testgen::linear_dataset(90, 19);
    const FittedPipeline p = fit_pipeline(data, fast_config(23));
    const std::string bytes = save_archive(p);

    CHECK_THROWS_AS(load_archive(bytes.substr(0, bytes.size() / 2)), CorruptArchive);
    CHECK_THROWS_AS(load_archive(bytes.substr(0, 4)), CorruptArchive);

    std::string flipped = bytes;
    flipped[flipped.size() - 9] ^= 0x40;  // payload byte inside the last section
    CHECK_THROWS_AS(load_archive(flipped), CorruptArchive);

    std::string newer = bytes;
    newer[6] = 2;  // bump the major version field
    CHECK_THROWS_AS(load_archive(newer), VersionMismatch);
}

TEST_CASE("predict validates the record against the schema") {
    const Dataset data = testgen::linear_dataset(90, 29);
    const FittedPipeline p = fit_pipeline(data, fast_config(31));
    RigRecord bad = data.records[0];
    bad.numerics[kDose] = -5.0;
    CHECK_THROWS_AS(predict(p, bad), SchemaViolation);
}

TEST_CASE("predict is safe to call from multiple threads") {
    const Dataset data = testgen::linear_dataset(100, 41);
    const FittedPipeline p = fit_pipeline(data, fast_config(43));

    std::vector<double> serial(data.size());
    for (Index i = 0; i < data.size(); ++i) serial[i] = predict(p, data.records[i]).mean;

    std::vector<double> parallel(data.size(), 0.0);
    std::vector<std::thread> workers;
    for (int w = 0; w < 4; ++w) {
        workers.emplace_back([&, w] {
            for (Index i = w; i < data.size(); i += 4) {
                parallel[i] = predict(p, data.records[i]).mean;
            }
        });
    }
    for (std::thread& t : workers) t.join();
    for (Index i = 0; i < data.size(); ++i) REQUIRE(parallel[i] == serial[i]);
}

TEST_CASE("fit_pipeline enforces the desk-scale floor") {
    const Dataset tiny = testgen::linear_dataset(30, 37);
    CHECK_THROWS_AS(fit_pipeline(tiny, fast_config(1)), TooFewRecords);
}

TEST_SUITE_END();
