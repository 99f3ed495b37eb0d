#pragma once

#include "sodip/bayesopt.hpp"
#include "sodip/dataset.hpp"
#include "sodip/dpmm.hpp"
#include "sodip/gpr.hpp"
#include "sodip/stacker.hpp"
#include "sodip/transforms.hpp"

namespace sodip {

// ---------------------------------------------------------------------------
// End-to-end orchestration: encode -> stack -> transform -> cluster -> fit
// per-cluster experts -> predict with intervals. A FittedPipeline is frozen
// after fit; predict is a pure function of (pipeline, record).
// ---------------------------------------------------------------------------

struct PipelineConfig {
    Index encoder_dim = 64;
    std::uint64_t encoder_seed = 1;

    GbtConfig gbt;
    int tune_budget = 0;  // > 0: Bayesian-optimize the first stage first
    int folds = 5;

    bool yeo_johnson = true;
    Index pca_cap = 500;

    double dpmm_alpha = 0.1;
    int dpmm_k_max = 8;
    int dpmm_sweeps = 500;
    int dpmm_burn_in = -1;  // < 0 means n_sweeps / 2
    int dpmm_chains = 1;
    double niw_kappa0 = 1.0;
    double niw_nu0 = 0.0;   // <= 0 means d + 1
    double niw_scale = 1.0;

    KernelFamily kernel = KernelFamily::Matern52;
    Index min_cluster_size = 5;
    double pi_level = 0.95;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Prediction {
    double mean = 0.0;
    double var = 0.0;
    double pi_lower = 0.0;
    double pi_upper = 0.0;
    Vector responsibilities;  // over active DPMM clusters
    int dominant_cluster = -1;
};

struct FittedPipeline {
    PipelineConfig config;
    DescriptorSchema schema;

    // Stage 1: encoding and first-stage features.
    Standardizer feature_standardizer;  // over [hash block | continuous block]
    PcaModel pca;
    GbtModel first_stage;

    // Stage 2: meta-variable.
    double lambda_deploy = 1.0;
    Vector fold_lambdas;  // audit trail from the CV loop

    // Stage 3-5: clustering and experts on the 5-vector
    // [Z, dose, temp, time, monomer_conc].
    Standardizer fivevec_standardizer;
    NiwPrior prior;
    DpmmState dpmm;
    ClusterExperts experts;

    // Provenance.
    std::uint64_t dataset_hash = 0;
    std::uint64_t n_train_records = 0;

    // Raw (un-standardized) first-stage feature row for a record.
    Vector raw_feature_row(const RigRecord& record) const;
    // Standardized 5-vector for a record, via the deployed first stage.
    Vector five_vector(const RigRecord& record) const;
};

FittedPipeline fit_pipeline(const Dataset& dataset, const PipelineConfig& config);

Prediction predict(const FittedPipeline& pipeline, const RigRecord& record);

// ---------------------------------------------------------------------------
// Model archive: a single self-describing container with a version field and
// per-section checksums. Doubles are stored as IEEE-754 bit patterns except
// the boosted-tree tables, which travel as decimal text at full round-trip
// precision.
// ---------------------------------------------------------------------------

constexpr std::uint16_t kArchiveVersionMajor = 1;
constexpr std::uint16_t kArchiveVersionMinor = 0;

std::string save_archive(const FittedPipeline& pipeline);
FittedPipeline load_archive(const std::string& bytes);

void save_archive_file(const FittedPipeline& pipeline, const std::string& path);
FittedPipeline load_archive_file(const std::string& path);

// Atomic file write used for every artifact the tools emit.
void atomic_write_file(const std::string& path, const std::string& contents);

}  // namespace sodip
