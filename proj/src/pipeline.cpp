#include "sodip/pipeline.hpp"

#include "sodip/serialize.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace sodip {

namespace {

constexpr int kContinuousSlots[] = {kDose, kTemp, kTime, kMonomerConc,
                                    kSolventConc, kAdditiveConc};
constexpr int kNumContinuous = 6;

// Rethrow preserving the concrete error type, with a stage label prefixed.
[[noreturn]] void rethrow_with_stage(const char* stage) {
    auto tag = [&](const char* what) { return std::string(stage) + ": " + what; };
    try {
        throw;
    } catch (const MissingMonomer& e) { throw MissingMonomer(tag(e.what()));
    } catch (const DegenerateSample& e) { throw DegenerateSample(tag(e.what()));
    } catch (const TooFewRows& e) { throw TooFewRows(tag(e.what()));
    } catch (const NotPositiveDefinite& e) { throw NotPositiveDefinite(tag(e.what()));
    } catch (const NoQualifyingCluster& e) { throw NoQualifyingCluster(tag(e.what()));
    } catch (const DimensionMismatch& e) { throw DimensionMismatch(tag(e.what()));
    } catch (const BadFoldCount& e) { throw BadFoldCount(tag(e.what()));
    } catch (const SingularScale& e) { throw SingularScale(tag(e.what()));
    } catch (const Error& e) { throw Error(tag(e.what()));
    }
}

template <typename F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (...) {
        rethrow_with_stage(stage);
    }
}

Matrix raw_feature_matrix(const Dataset& dataset, const HashingEncoder& encoder) {
    const Index n = dataset.size();
    Matrix F(n, encoder.dimension() + kNumContinuous);
    for (Index i = 0; i < n; ++i) {
        const RigRecord& rec = dataset.records[i];
        F.block(i, 0, 1, encoder.dimension()) = encoder.encode(rec).transpose();
        for (int c = 0; c < kNumContinuous; ++c) {
            F(i, encoder.dimension() + c) = rec.numerics[kContinuousSlots[c]];
        }
    }
    return F;
}

Vector record_weights(const Dataset& dataset) {
    Vector w(dataset.size());
    for (Index i = 0; i < dataset.size(); ++i) {
        const RigRecord& rec = dataset.records[i];
        w[i] = composite_weight(rec.numerics[kMwBase], rec.numerics[kMwMonomer],
                                rec.numerics[kMwSolvent], rec.numerics[kMwAdditive])
                   .w;
    }
    return w;
}

Matrix five_vector_matrix(const Dataset& dataset, const Vector& z) {
    Matrix V(dataset.size(), 5);
    for (Index i = 0; i < dataset.size(); ++i) {
        const RigRecord& rec = dataset.records[i];
        V(i, 0) = z[i];
        V(i, 1) = rec.numerics[kDose];
        V(i, 2) = rec.numerics[kTemp];
        V(i, 3) = rec.numerics[kTime];
        V(i, 4) = rec.numerics[kMonomerConc];
    }
    return V;
}

}  // namespace

void PipelineConfig::validate() const {
    if (encoder_dim < 8) throw Error("PipelineConfig: encoder_dim must be >= 8");
    gbt.validate();
    if (folds < 2) throw Error("PipelineConfig: folds must be >= 2");
    if (pca_cap < 1) throw Error("PipelineConfig: pca_cap must be >= 1");
    if (!(dpmm_alpha > 0.0)) throw Error("PipelineConfig: dpmm_alpha must be > 0");
    if (dpmm_k_max < 1) throw Error("PipelineConfig: dpmm_k_max must be >= 1");
    if (dpmm_sweeps < 1) throw Error("PipelineConfig: dpmm_sweeps must be >= 1");
    if (dpmm_chains < 1) throw Error("PipelineConfig: dpmm_chains must be >= 1");
    if (min_cluster_size < 2) throw Error("PipelineConfig: min_cluster_size must be >= 2");
    if (!(pi_level > 0.0 && pi_level < 1.0)) {
        throw Error("PipelineConfig: pi_level must be in (0, 1)");
    }
}

FittedPipeline fit_pipeline(const Dataset& dataset, const PipelineConfig& config) {
    config.validate();
    if (dataset.size() < 50) {
        throw TooFewRecords("fit_pipeline: needs >= 50 records, got " +
                            std::to_string(dataset.size()));
    }

    FittedPipeline p;
    p.config = config;
    p.schema = dataset.schema;
    p.dataset_hash = dataset.content_hash();
    p.n_train_records = static_cast<std::uint64_t>(dataset.size());

    const Vector y = dataset.target_vector();
    const HashingEncoder encoder(config.encoder_dim, config.encoder_seed);

    // Stage 1: hash-encode the text key, concatenate the continuous
    // descriptors, standardize, PCA-reduce.
    const Matrix F = run_stage("encode", [&] { return raw_feature_matrix(dataset, encoder); });
    p.feature_standardizer = run_stage("scale", [&] { return Standardizer::fit(F); });
    const Matrix Fs = p.feature_standardizer.apply(F);
    p.pca = run_stage("pca", [&] { return PcaModel::fit(Fs, config.pca_cap); });
    const Matrix X = p.pca.apply(Fs);

    const Vector w = run_stage("weights", [&] { return record_weights(dataset); });

    // Optional first-stage tuning on an internal 80/20 split.
    GbtConfig gbt_cfg = config.gbt;
    gbt_cfg.seed = derive_seed(config.seed, 11);
    if (config.tune_budget > 0) {
        run_stage("tune", [&] {
            const std::vector<int> fold5 = make_folds(X.rows(), 5, derive_seed(config.seed, 12));
            std::vector<Index> tr, va;
            for (Index i = 0; i < X.rows(); ++i) {
                (fold5[i] == 0 ? va : tr).push_back(i);
            }
            Matrix Xt(tr.size(), X.cols()), Xv(va.size(), X.cols());
            Vector yt(tr.size()), yv(va.size());
            for (std::size_t i = 0; i < tr.size(); ++i) { Xt.row(i) = X.row(tr[i]); yt[i] = y[tr[i]]; }
            for (std::size_t i = 0; i < va.size(); ++i) { Xv.row(i) = X.row(va[i]); yv[i] = y[va[i]]; }
            const TuneResult tuned =
                tune_first_stage(Xt, yt, Xv, yv, default_gbt_space(), config.tune_budget,
                                 derive_seed(config.seed, 13), gbt_cfg);
            gbt_cfg = tuned.config;
            return 0;
        });
    }

    // Stage 2: leak-free out-of-fold meta-variable, then the deployed first
    // stage refit on all training rows.
    const MetaFeatureSet meta = run_stage("stack", [&] {
        return oof_meta(X, y, gbt_cfg, config.folds, derive_seed(config.seed, 21), w);
    });
    p.first_stage = run_stage("first-stage refit", [&] {
        GbtConfig final_cfg = gbt_cfg;
        final_cfg.seed = fold_seed(derive_seed(config.seed, 21), config.folds);
        return gbt_fit(X, y, final_cfg);
    });

    Vector z = meta.z;
    if (config.yeo_johnson) {
        p.fold_lambdas = meta.fold_lambdas;
        p.lambda_deploy = run_stage("lambda refit", [&] {
            const Vector wg = w.cwiseProduct(gbt_predict(p.first_stage, X));
            try {
                return yj_fit_mle(wg);
            } catch (const DegenerateSample&) {
                return 1.0;
            }
        });
    } else {
        p.fold_lambdas = Vector::Ones(config.folds);
        p.lambda_deploy = 1.0;
        z = w.cwiseProduct(meta.oof_predictions);
    }

    // Stage 3: standardized 5-vector [Z, dose, temp, time, monomer_conc].
    const Matrix V = five_vector_matrix(dataset, z);
    p.fivevec_standardizer = run_stage("5-vector scale", [&] { return Standardizer::fit(V); });
    const Matrix Vs = p.fivevec_standardizer.apply(V);

    // Stage 4: DPMM clustering.
    p.prior = NiwPrior::standard(5, config.niw_scale, config.niw_kappa0, config.niw_nu0);
    DpmmConfig dcfg;
    dcfg.alpha = config.dpmm_alpha;
    dcfg.k_max = config.dpmm_k_max;
    dcfg.n_sweeps = config.dpmm_sweeps;
    dcfg.burn_in = config.dpmm_burn_in >= 0 ? config.dpmm_burn_in : config.dpmm_sweeps / 2;
    dcfg.n_chains = config.dpmm_chains;
    dcfg.seed = derive_seed(config.seed, 41);
    const DpmmFit dfit = run_stage("dpmm", [&] { return fit_dpmm(Vs, p.prior, dcfg); });
    p.dpmm = dfit.state;

    // Stage 5: per-cluster GP experts on the same 5-vector against raw G_y
    // (each expert standardizes its own targets).
    ExpertsFitOptions eopt;
    eopt.family = config.kernel;
    eopt.min_cluster_size = config.min_cluster_size;
    eopt.optimize.seed = derive_seed(config.seed, 51);
    p.experts = run_stage("experts", [&] {
        return experts_fit(Vs, y, p.dpmm.assignments, p.dpmm.active_clusters(), eopt);
    });

    return p;
}

Vector FittedPipeline::raw_feature_row(const RigRecord& record) const {
    const HashingEncoder encoder(config.encoder_dim, config.encoder_seed);
    Vector f(config.encoder_dim + kNumContinuous);
    f.head(config.encoder_dim) = encoder.encode(record);
    for (int c = 0; c < kNumContinuous; ++c) {
        f[config.encoder_dim + c] = record.numerics[kContinuousSlots[c]];
    }
    return f;
}

Vector FittedPipeline::five_vector(const RigRecord& record) const {
    const Vector x = pca.apply_row(feature_standardizer.apply_row(raw_feature_row(record)));
    const double ghat = gbt_predict_row(first_stage, x);
    const double w = composite_weight(record.numerics[kMwBase], record.numerics[kMwMonomer],
                                      record.numerics[kMwSolvent], record.numerics[kMwAdditive])
                         .w;
    Vector v(5);
    v[0] = config.yeo_johnson ? yj_forward(lambda_deploy, w * ghat) : w * ghat;
    v[1] = record.numerics[kDose];
    v[2] = record.numerics[kTemp];
    v[3] = record.numerics[kTime];
    v[4] = record.numerics[kMonomerConc];
    return fivevec_standardizer.apply_row(v);
}

Prediction predict(const FittedPipeline& pipeline, const RigRecord& record) {
    try {
        validate_record(record, pipeline.schema, -1, false);
    } catch (const Error& e) {
        throw SchemaViolation(std::string("predict: ") + e.what());
    }

    const Vector v = pipeline.five_vector(record);
    const Responsibilities resp =
        responsibilities(pipeline.dpmm, pipeline.prior, pipeline.config.dpmm_alpha, v);
    const MixturePrediction mix = experts_predict(pipeline.experts, resp.probs, v);

    Prediction out;
    out.mean = mix.mean;
    out.var = mix.var;
    const double half = normal_two_sided_z(pipeline.config.pi_level) * std::sqrt(mix.var);
    out.pi_lower = mix.mean - half;
    out.pi_upper = mix.mean + half;
    out.responsibilities = resp.probs;
    out.dominant_cluster = resp.dominant;
    return out;
}

// ---------------------------------------------------------------------------
// Archive.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[6] = {'S', 'O', 'D', 'I', 'P', '\0'};

std::string gbt_to_text(const GbtModel& m) {
    std::ostringstream out;
    out << "gbt " << m.trees.size() << ' ' << format_number(m.base_score, 17) << ' '
        << format_number(m.learning_rate, 17) << ' ' << m.n_features << '\n';
    for (const RegressionTree& tree : m.trees) {
        out << "tree " << tree.nodes.size() << '\n';
        for (const TreeNode& n : tree.nodes) {
            out << n.feature << ' ' << format_number(n.threshold, 17) << ' ' << n.left << ' '
                << n.right << ' ' << format_number(n.value, 17) << '\n';
        }
    }
    return out.str();
}

GbtModel gbt_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string word;
    GbtModel m;
    std::size_t n_trees = 0;
    if (!(in >> word >> n_trees >> m.base_score >> m.learning_rate >> m.n_features) ||
        word != "gbt") {
        throw CorruptArchive("gbt section: bad header");
    }
    m.trees.resize(n_trees);
    for (RegressionTree& tree : m.trees) {
        std::size_t n_nodes = 0;
        if (!(in >> word >> n_nodes) || word != "tree") {
            throw CorruptArchive("gbt section: bad tree header");
        }
        tree.nodes.resize(n_nodes);
        for (TreeNode& n : tree.nodes) {
            if (!(in >> n.feature >> n.threshold >> n.left >> n.right >> n.value)) {
                throw CorruptArchive("gbt section: truncated node table");
            }
        }
    }
    return m;
}

void put_section(ByteWriter& out, const std::string& name, const std::string& payload) {
    out.str(name);
    out.u64(payload.size());
    out.raw(payload);
    out.u64(fnv1a64(payload));
}

std::string standardizer_bytes(const Standardizer& s) {
    ByteWriter w;
    w.vec(s.mean());
    w.vec(s.stddev());
    return w.bytes();
}

Standardizer standardizer_from(ByteReader& r) {
    Vector mean = r.vec();
    Vector stddev = r.vec();
    return Standardizer::from_moments(std::move(mean), std::move(stddev));
}

}  // namespace

std::string save_archive(const FittedPipeline& p) {
    ByteWriter head;
    head.raw(std::string(kMagic, sizeof(kMagic)));
    head.u32(kArchiveVersionMajor);
    head.u32(kArchiveVersionMinor);

    ByteWriter body;

    {
        ByteWriter w;
        const PipelineConfig& c = p.config;
        w.u64(static_cast<std::uint64_t>(c.encoder_dim));
        w.u64(c.encoder_seed);
        w.i32(c.gbt.n_trees);
        w.f64(c.gbt.learning_rate);
        w.i32(c.gbt.max_depth);
        w.f64(c.gbt.subsample);
        w.f64(c.gbt.colsample);
        w.f64(c.gbt.min_child_weight);
        w.f64(c.gbt.gamma);
        w.u64(c.gbt.seed);
        w.i32(c.tune_budget);
        w.i32(c.folds);
        w.boolean(c.yeo_johnson);
        w.u64(static_cast<std::uint64_t>(c.pca_cap));
        w.f64(c.dpmm_alpha);
        w.i32(c.dpmm_k_max);
        w.i32(c.dpmm_sweeps);
        w.i32(c.dpmm_burn_in);
        w.i32(c.dpmm_chains);
        w.f64(c.niw_kappa0);
        w.f64(c.niw_nu0);
        w.f64(c.niw_scale);
        w.str(kernel_family_name(c.kernel));
        w.u64(static_cast<std::uint64_t>(c.min_cluster_size));
        w.f64(c.pi_level);
        w.u64(c.seed);
        put_section(body, "config", w.bytes());
    }
    {
        ByteWriter w;
        const DescriptorSchema& s = p.schema;
        for (const std::string& name : s.categorical_names) w.str(name);
        for (const NumericField& f : s.numeric_fields) {
            w.str(f.name);
            w.str(f.unit);
            w.f64(f.lower);
            w.f64(f.upper);
            w.boolean(f.none_is_zero);
        }
        w.str(s.target_name);
        w.f64(s.target_lower);
        w.f64(s.target_upper);
        put_section(body, "schema", w.bytes());
    }
    put_section(body, "feature_scaler", standardizer_bytes(p.feature_standardizer));
    {
        ByteWriter w;
        w.mat(p.pca.components());
        w.vec(p.pca.center());
        w.vec(p.pca.eigenvalues());
        put_section(body, "pca", w.bytes());
    }
    put_section(body, "first_stage", gbt_to_text(p.first_stage));
    {
        ByteWriter w;
        w.f64(p.lambda_deploy);
        w.vec(p.fold_lambdas);
        // Assumption flag: how the composite molecular-weight coefficient
        // entering z = yj(lambda, w * ghat) is formed.
        w.str("w = mw_monomer / (mw_base + mw_monomer + mw_solvent + mw_additive)");
        put_section(body, "lambda", w.bytes());
    }
    put_section(body, "fivevec_scaler", standardizer_bytes(p.fivevec_standardizer));
    {
        ByteWriter w;
        w.vec(p.prior.mu0);
        w.f64(p.prior.kappa0);
        w.f64(p.prior.nu0);
        w.mat(p.prior.psi0);
        w.u64(p.dpmm.assignments.size());
        for (int a : p.dpmm.assignments) w.i32(a);
        w.u32(static_cast<std::uint32_t>(p.dpmm.clusters.size()));
        for (const ClusterStats& c : p.dpmm.clusters) {
            w.f64(c.count);
            w.vec(c.sum);
            w.mat(c.scatter);
        }
        w.f64(p.dpmm.log_joint);
        put_section(body, "dpmm", w.bytes());
    }
    {
        ByteWriter w;
        w.u32(static_cast<std::uint32_t>(p.experts.experts.size()));
        for (const ClusterExpert& e : p.experts.experts) {
            w.mat(e.model.X);
            w.vec(e.model.y);
            w.str(kernel_family_name(e.model.kernel.family));
            w.f64(e.model.kernel.signal_variance);
            w.vec(e.model.kernel.lengthscales);
            w.f64(e.model.sigma2);
            w.f64(e.y_mean);
            w.f64(e.y_std);
        }
        w.u32(static_cast<std::uint32_t>(p.experts.expert_of_cluster.size()));
        for (int e : p.experts.expert_of_cluster) w.i32(e);
        put_section(body, "experts", w.bytes());
    }
    {
        ByteWriter w;
        w.u64(p.dataset_hash);
        w.u64(p.n_train_records);
        put_section(body, "provenance", w.bytes());
    }

    ByteWriter out;
    out.raw(head.bytes());
    out.u32(10);  // section count
    out.raw(body.bytes());
    return out.bytes();
}

FittedPipeline load_archive(const std::string& bytes) {
    ByteReader r(bytes);
    if (bytes.size() < sizeof(kMagic)) throw CorruptArchive("archive too small");
    for (char c : kMagic) {
        if (static_cast<char>(r.u8()) != c) throw CorruptArchive("bad magic");
    }
    const std::uint32_t major = r.u32();
    r.u32();  // minor: forward compatible
    if (major != kArchiveVersionMajor) {
        throw VersionMismatch("archive version " + std::to_string(major) +
                              ", this build reads version " +
                              std::to_string(kArchiveVersionMajor));
    }
    const std::uint32_t n_sections = r.u32();

    FittedPipeline p;
    std::uint32_t seen = 0;
    for (std::uint32_t s = 0; s < n_sections; ++s) {
        const std::string name = r.str();
        const std::uint64_t len = r.u64();
        if (len > r.remaining()) throw CorruptArchive("section '" + name + "' truncated");
        std::string payload(len, '\0');
        for (std::uint64_t i = 0; i < len; ++i) payload[i] = static_cast<char>(r.u8());
        const std::uint64_t checksum = r.u64();
        if (checksum != fnv1a64(payload)) {
            throw CorruptArchive("section '" + name + "' checksum mismatch");
        }
        ++seen;

        ByteReader pr(payload);
        if (name == "config") {
            PipelineConfig& c = p.config;
            c.encoder_dim = static_cast<Index>(pr.u64());
            c.encoder_seed = pr.u64();
            c.gbt.n_trees = pr.i32();
            c.gbt.learning_rate = pr.f64();
            c.gbt.max_depth = pr.i32();
            c.gbt.subsample = pr.f64();
            c.gbt.colsample = pr.f64();
            c.gbt.min_child_weight = pr.f64();
            c.gbt.gamma = pr.f64();
            c.gbt.seed = pr.u64();
            c.tune_budget = pr.i32();
            c.folds = pr.i32();
            c.yeo_johnson = pr.boolean();
            c.pca_cap = static_cast<Index>(pr.u64());
            c.dpmm_alpha = pr.f64();
            c.dpmm_k_max = pr.i32();
            c.dpmm_sweeps = pr.i32();
            c.dpmm_burn_in = pr.i32();
            c.dpmm_chains = pr.i32();
            c.niw_kappa0 = pr.f64();
            c.niw_nu0 = pr.f64();
            c.niw_scale = pr.f64();
            c.kernel = kernel_family_from_string(pr.str());
            c.min_cluster_size = static_cast<Index>(pr.u64());
            c.pi_level = pr.f64();
            c.seed = pr.u64();
        } else if (name == "schema") {
            DescriptorSchema& sc = p.schema;
            for (std::string& n : sc.categorical_names) n = pr.str();
            for (NumericField& f : sc.numeric_fields) {
                f.name = pr.str();
                f.unit = pr.str();
                f.lower = pr.f64();
                f.upper = pr.f64();
                f.none_is_zero = pr.boolean();
            }
            sc.target_name = pr.str();
            sc.target_lower = pr.f64();
            sc.target_upper = pr.f64();
        } else if (name == "feature_scaler") {
            p.feature_standardizer = standardizer_from(pr);
        } else if (name == "pca") {
            Matrix comp = pr.mat();
            Vector center = pr.vec();
            Vector ev = pr.vec();
            p.pca = PcaModel::from_parts(std::move(comp), std::move(center), std::move(ev));
        } else if (name == "first_stage") {
            p.first_stage = gbt_from_text(payload);
        } else if (name == "lambda") {
            p.lambda_deploy = pr.f64();
            p.fold_lambdas = pr.vec();
            pr.str();  // weight-policy flag, informational
        } else if (name == "fivevec_scaler") {
            p.fivevec_standardizer = standardizer_from(pr);
        } else if (name == "dpmm") {
            p.prior.mu0 = pr.vec();
            p.prior.kappa0 = pr.f64();
            p.prior.nu0 = pr.f64();
            p.prior.psi0 = pr.mat();
            const std::uint64_t n = pr.u64();
            p.dpmm.assignments.resize(n);
            for (std::uint64_t i = 0; i < n; ++i) p.dpmm.assignments[i] = pr.i32();
            const std::uint32_t k = pr.u32();
            p.dpmm.clusters.clear();
            for (std::uint32_t i = 0; i < k; ++i) {
                ClusterStats c;
                c.count = pr.f64();
                c.sum = pr.vec();
                c.scatter = pr.mat();
                p.dpmm.clusters.push_back(std::move(c));
            }
            p.dpmm.log_joint = pr.f64();
        } else if (name == "experts") {
            const std::uint32_t ne = pr.u32();
            p.experts.experts.clear();
            for (std::uint32_t i = 0; i < ne; ++i) {
                Matrix X = pr.mat();
                Vector y = pr.vec();
                Kernel k;
                k.family = kernel_family_from_string(pr.str());
                k.signal_variance = pr.f64();
                k.lengthscales = pr.vec();
                const double sigma2 = pr.f64();
                ClusterExpert e;
                e.model = gpr_fit(X, y, k, sigma2);
                e.y_mean = pr.f64();
                e.y_std = pr.f64();
                p.experts.experts.push_back(std::move(e));
            }
            const std::uint32_t nc = pr.u32();
            p.experts.expert_of_cluster.resize(nc);
            for (std::uint32_t i = 0; i < nc; ++i) p.experts.expert_of_cluster[i] = pr.i32();
        } else if (name == "provenance") {
            p.dataset_hash = pr.u64();
            p.n_train_records = pr.u64();
        } else {
            throw CorruptArchive("unknown section '" + name + "'");
        }
    }
    if (seen != 10) {
        throw CorruptArchive("archive has " + std::to_string(seen) +
                             " sections, expected 10");
    }
    if (!r.done()) throw CorruptArchive("trailing bytes after the last section");
    return p;
}

void atomic_write_file(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open '" + tmp + "' for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw Error("write failed for '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

void save_archive_file(const FittedPipeline& pipeline, const std::string& path) {
    atomic_write_file(path, save_archive(pipeline));
}

FittedPipeline load_archive_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_archive(ss.str());
}

}  // namespace sodip
