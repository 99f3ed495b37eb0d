// Batch command-line front end: fit, predict, evaluate, cluster-report,
// surface, tune, effects. Exit code 0 on success, 1 on usage errors, 2 on
// data errors. All file writes are atomic (temp file + rename).

#include "sodip/eval.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace sodip;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Flat key-value configuration: one `key = value` per line, '#' comments.
PipelineConfig parse_config_text(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos) {
                throw Error("config line " + std::to_string(line_no) +
                            ": expected 'key = value'");
            }
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto num = [&] { return std::stod(value); };
        auto integer = [&] { return static_cast<int>(std::stoll(value)); };
        auto u64 = [&] { return static_cast<std::uint64_t>(std::stoull(value)); };
        auto flag = [&] { return value == "true" || value == "1" || value == "yes"; };

        if (key == "seed") cfg.seed = u64();
        else if (key == "encoder.dimension") cfg.encoder_dim = integer();
        else if (key == "encoder.seed") cfg.encoder_seed = u64();
        else if (key == "stacker.folds") cfg.folds = integer();
        else if (key == "stacker.n_trees") cfg.gbt.n_trees = integer();
        else if (key == "stacker.learning_rate") cfg.gbt.learning_rate = num();
        else if (key == "stacker.max_depth") cfg.gbt.max_depth = integer();
        else if (key == "stacker.subsample") cfg.gbt.subsample = num();
        else if (key == "stacker.colsample") cfg.gbt.colsample = num();
        else if (key == "stacker.min_child_weight") cfg.gbt.min_child_weight = num();
        else if (key == "stacker.gamma") cfg.gbt.gamma = num();
        else if (key == "stacker.tune_budget") cfg.tune_budget = integer();
        else if (key == "transform.yeo_johnson") cfg.yeo_johnson = flag();
        else if (key == "pca.cap") cfg.pca_cap = integer();
        else if (key == "dpmm.alpha") cfg.dpmm_alpha = num();
        else if (key == "dpmm.k_max") cfg.dpmm_k_max = integer();
        else if (key == "dpmm.sweeps") cfg.dpmm_sweeps = integer();
        else if (key == "dpmm.burn_in") cfg.dpmm_burn_in = integer();
        else if (key == "dpmm.chains") cfg.dpmm_chains = integer();
        else if (key == "dpmm.kappa0") cfg.niw_kappa0 = num();
        else if (key == "dpmm.nu0") cfg.niw_nu0 = num();
        else if (key == "dpmm.scale") cfg.niw_scale = num();
        else if (key == "gpr.kernel") cfg.kernel = kernel_family_from_string(value);
        else if (key == "gpr.min_cluster_size") cfg.min_cluster_size = integer();
        else if (key == "pi.level") cfg.pi_level = num();
        else throw Error("config line " + std::to_string(line_no) + ": unknown key '" +
                         key + "'");
    }
    return cfg;
}

std::string config_to_text(const PipelineConfig& cfg) {
    std::ostringstream out;
    out << "seed = " << cfg.seed << '\n'
        << "encoder.dimension = " << cfg.encoder_dim << '\n'
        << "encoder.seed = " << cfg.encoder_seed << '\n'
        << "stacker.folds = " << cfg.folds << '\n'
        << "stacker.n_trees = " << cfg.gbt.n_trees << '\n'
        << "stacker.learning_rate = " << format_number(cfg.gbt.learning_rate, 17) << '\n'
        << "stacker.max_depth = " << cfg.gbt.max_depth << '\n'
        << "stacker.subsample = " << format_number(cfg.gbt.subsample, 17) << '\n'
        << "stacker.colsample = " << format_number(cfg.gbt.colsample, 17) << '\n'
        << "stacker.min_child_weight = " << format_number(cfg.gbt.min_child_weight, 17) << '\n'
        << "stacker.gamma = " << format_number(cfg.gbt.gamma, 17) << '\n'
        << "stacker.tune_budget = " << cfg.tune_budget << '\n'
        << "transform.yeo_johnson = " << (cfg.yeo_johnson ? "true" : "false") << '\n'
        << "pca.cap = " << cfg.pca_cap << '\n'
        << "dpmm.alpha = " << format_number(cfg.dpmm_alpha, 17) << '\n'
        << "dpmm.k_max = " << cfg.dpmm_k_max << '\n'
        << "dpmm.sweeps = " << cfg.dpmm_sweeps << '\n'
        << "dpmm.burn_in = " << cfg.dpmm_burn_in << '\n'
        << "dpmm.chains = " << cfg.dpmm_chains << '\n'
        << "dpmm.kappa0 = " << format_number(cfg.niw_kappa0, 17) << '\n'
        << "dpmm.nu0 = " << format_number(cfg.niw_nu0, 17) << '\n'
        << "dpmm.scale = " << format_number(cfg.niw_scale, 17) << '\n'
        << "gpr.kernel = " << kernel_family_name(cfg.kernel) << '\n'
        << "gpr.min_cluster_size = " << cfg.min_cluster_size << '\n'
        << "pi.level = " << format_number(cfg.pi_level, 17) << '\n';
    return out.str();
}

// Short aliases accepted wherever a numeric descriptor is named.
std::string resolve_numeric_name(const DescriptorSchema& schema, const std::string& name) {
    static const std::vector<std::pair<std::string, std::string>> aliases = {
        {"dose", "dose_kGy"},           {"temp", "temp_C"},
        {"time", "time_h"},             {"monomer_conc", "monomer_conc_vol"},
        {"solvent_conc", "solvent_conc_vol"}, {"additive_conc", "additive_conc_vol"},
        {"size", "base_size_um"},
    };
    for (const auto& [alias, full] : aliases) {
        if (name == alias) return full;
    }
    if (schema.numeric_index(name) >= 0) return name;
    throw UnknownDescriptor("unknown numeric descriptor '" + name + "'");
}

struct KeyValue {
    std::string key;
    std::string value;
};

KeyValue split_assignment(const std::string& text, const char* flag) {
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos) {
        throw Error(std::string(flag) + ": expected name=value, got '" + text + "'");
    }
    return {text.substr(0, eq), text.substr(eq + 1)};
}

std::string prediction_csv(const Dataset& records, const FittedPipeline& pipeline) {
    const DescriptorSchema& s = pipeline.schema;
    std::string out;
    for (int k = 0; k < kNumCategorical; ++k) {
        out += s.categorical_names[k];
        out += ',';
    }
    for (int k = 0; k < kNumNumeric; ++k) {
        out += s.numeric_fields[k].name;
        out += ',';
    }
    out += "mean_gy,var_gy,pi_lo,pi_hi,cluster\n";
    for (const RigRecord& rec : records.records) {
        const Prediction pred = predict(pipeline, rec);
        for (int k = 0; k < kNumCategorical; ++k) {
            out += rec.categoricals[k];
            out += ',';
        }
        for (int k = 0; k < kNumNumeric; ++k) {
            out += format_number(rec.numerics[k]);
            out += ',';
        }
        out += format_number(pred.mean);
        out += ',';
        out += format_number(pred.var);
        out += ',';
        out += format_number(pred.pi_lower);
        out += ',';
        out += format_number(pred.pi_upper);
        out += ',';
        out += std::to_string(pred.dominant_cluster);
        out += '\n';
    }
    return out;
}

// Bit-exact prediction probe over the first (up to) 100 training-style
// records, written beside a fitted archive for reload verification.
std::string probe_csv(const Dataset& records, const FittedPipeline& pipeline) {
    std::string out = "index,mean_bits,var_bits,mean_gy,var_gy\n";
    const Index n = std::min<Index>(records.size(), 100);
    for (Index i = 0; i < n; ++i) {
        const Prediction pred = predict(pipeline, records.records[i]);
        std::uint64_t mb, vb;
        std::memcpy(&mb, &pred.mean, sizeof(mb));
        std::memcpy(&vb, &pred.var, sizeof(vb));
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%lld,%016llx,%016llx,%s,%s\n",
                      static_cast<long long>(i), static_cast<unsigned long long>(mb),
                      static_cast<unsigned long long>(vb),
                      format_number(pred.mean, 17).c_str(),
                      format_number(pred.var, 17).c_str());
        out += buf;
    }
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"SoDip prediction stack: stacked first-stage regression, DPMM "
                 "clustering, per-cluster GP experts"};
    app.require_subcommand(1);
    const DescriptorSchema schema = DescriptorSchema::rig_default();

    // fit
    auto* fit = app.add_subcommand("fit", "Fit a pipeline on a CSV dataset");
    std::string fit_data, fit_config, fit_out = "model.sodip";
    std::uint64_t fit_seed = 0;
    fit->add_option("data", fit_data, "training CSV")->required();
    fit->add_option("--config", fit_config, "flat key-value config file");
    fit->add_option("--out", fit_out, "output archive path");
    fit->add_option("--seed", fit_seed, "override config seed");

    // predict
    auto* pred = app.add_subcommand("predict", "Predict records with a fitted model");
    std::string pred_model, pred_data, pred_out = "preds.csv";
    pred->add_option("model", pred_model, "fitted .sodip archive")->required();
    pred->add_option("records", pred_data, "records CSV (target optional)")->required();
    pred->add_option("--out", pred_out, "output CSV");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Metrics and calibration on labelled data");
    std::string eval_model, eval_data, eval_report = "metrics.csv", eval_cal = "cal.csv";
    eval->add_option("model", eval_model)->required();
    eval->add_option("data", eval_data)->required();
    eval->add_option("--report", eval_report, "metrics CSV path");
    eval->add_option("--calibration", eval_cal, "calibration CSV path");

    // cluster-report
    auto* crep = app.add_subcommand("cluster-report", "Per-cluster performance table");
    std::string crep_model, crep_data, crep_out;
    crep->add_option("model", crep_model)->required();
    crep->add_option("data", crep_data)->required();
    crep->add_option("--out", crep_out, "write CSV here instead of stdout");

    // surface
    auto* surf = app.add_subcommand("surface", "Response-surface export");
    std::string surf_model, surf_out = "surface.csv", surf_mode = "lhc";
    std::vector<std::string> surf_vary, surf_fix;
    Index surf_n = 2000;
    std::uint64_t surf_seed = 0;
    surf->add_option("model", surf_model)->required();
    surf->add_option("--vary", surf_vary, "varied dims, e.g. dose=25:100")->required();
    surf->add_option("--fix", surf_fix, "fixed descriptors, e.g. temp=60 solvent=methanol");
    surf->add_option("--n", surf_n, "lhc: total points; lattice: points per dim");
    surf->add_option("--mode", surf_mode)->check(CLI::IsMember({"lhc", "lattice"}));
    surf->add_option("--seed", surf_seed);
    surf->add_option("--out", surf_out);

    // tune
    auto* tune = app.add_subcommand("tune", "Bayesian-optimize first-stage hyperparameters");
    std::string tune_data, tune_out;
    int tune_budget = 50;
    std::uint64_t tune_seed = 0;
    tune->add_option("data", tune_data)->required();
    tune->add_option("--budget", tune_budget);
    tune->add_option("--seed", tune_seed);
    tune->add_option("--out", tune_out, "write tuned config file here");

    // effects
    auto* eff = app.add_subcommand("effects", "Descriptor-effect aggregation");
    std::string eff_data, eff_descriptor = "solvent", eff_out;
    eff->add_option("data", eff_data)->required();
    eff->add_option("--descriptor", eff_descriptor, "categorical descriptor name");
    eff->add_option("--out", eff_out, "write CSV here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints a one-line reason naming the flag
        return 1;
    }

    if (*fit) {
        PipelineConfig cfg;
        if (!fit_config.empty()) cfg = parse_config_text(read_file(fit_config));
        if (fit->count("--seed") > 0) cfg.seed = fit_seed;
        const Dataset data = parse_dataset(read_file(fit_data), schema);
        const FittedPipeline pipeline = fit_pipeline(data, cfg);
        save_archive_file(pipeline, fit_out);
        atomic_write_file(fit_out + ".probe.csv", probe_csv(data, pipeline));
        std::cout << "fitted " << data.size() << " records into " << fit_out << " ("
                  << pipeline.dpmm.active_clusters() << " clusters, "
                  << pipeline.experts.experts.size() << " experts)\n";
    } else if (*pred) {
        const FittedPipeline pipeline = load_archive_file(pred_model);
        const Dataset records = parse_records(read_file(pred_data), pipeline.schema);
        atomic_write_file(pred_out, prediction_csv(records, pipeline));
        std::cout << "wrote " << records.size() << " predictions to " << pred_out << '\n';
    } else if (*eval) {
        const FittedPipeline pipeline = load_archive_file(eval_model);
        const Dataset data = parse_dataset(read_file(eval_data), pipeline.schema);
        Vector mu(data.size()), var(data.size());
        std::vector<int> tags(data.size());
        for (Index i = 0; i < data.size(); ++i) {
            const Prediction p = predict(pipeline, data.records[i]);
            mu[i] = p.mean;
            var[i] = p.var;
            tags[i] = p.dominant_cluster;
        }
        const Metrics m = metrics(data.target_vector(), mu);
        std::string report = "mae,rmse,r2,n\n";
        report += format_number(m.mae) + "," + format_number(m.rmse) + "," +
                  (m.r2_defined ? format_number(m.r2) : "NA") + "," + std::to_string(m.n) +
                  "\n";
        atomic_write_file(eval_report, report);

        const CalibrationReport cal =
            interval_coverage(data.target_vector(), mu, var, pipeline.config.pi_level, tags);
        std::string cal_csv = "level,coverage,mean_halfwidth\n";
        cal_csv += format_number(cal.level) + "," + format_number(cal.coverage) + "," +
                   format_number(cal.mean_halfwidth) + "\n";
        cal_csv += "cluster,coverage,n\n";
        for (const auto& [cid, cov] : cal.per_cluster) {
            cal_csv += std::to_string(cid) + "," + format_number(cov.first) + "," +
                       std::to_string(cov.second) + "\n";
        }
        atomic_write_file(eval_cal, cal_csv);
        std::cout << "mae=" << m.mae << " rmse=" << m.rmse << " r2="
                  << (m.r2_defined ? format_number(m.r2) : "NA")
                  << " coverage=" << cal.coverage << '\n';
    } else if (*crep) {
        const FittedPipeline pipeline = load_archive_file(crep_model);
        const Dataset data = parse_dataset(read_file(crep_data), pipeline.schema);
        const ClusterReport report = cluster_report(pipeline, data);
        std::string csv = "cluster,n,r2,rmse,response_min,response_max,stability";
        for (int b = 0; b < 20; ++b) csv += ",hist" + std::to_string(b);
        csv += "\n";
        for (const ClusterReportRow& row : report.rows) {
            csv += std::to_string(row.cluster_id) + "," + std::to_string(row.n) + "," +
                   (row.metrics.r2_defined ? format_number(row.metrics.r2) : "NA") + "," +
                   format_number(row.metrics.rmse) + "," + format_number(row.response_min) +
                   "," + format_number(row.response_max) + "," + row.stability;
            for (Index c : row.histogram) csv += "," + std::to_string(c);
            csv += "\n";
        }
        if (crep_out.empty()) std::cout << csv;
        else {
            atomic_write_file(crep_out, csv);
            std::cout << "wrote cluster report to " << crep_out << '\n';
        }
    } else if (*surf) {
        const FittedPipeline pipeline = load_archive_file(surf_model);
        SurfaceSpec spec;
        spec.mode = surf_mode == "lhc" ? SurfaceMode::Lhc : SurfaceMode::Lattice;
        spec.n = surf_n;
        spec.seed = surf_seed;
        for (const std::string& v : surf_vary) {
            const KeyValue kv = split_assignment(v, "--vary");
            const std::size_t colon = kv.value.find(':');
            if (colon == std::string::npos) {
                throw Error("--vary " + kv.key + ": expected lo:hi range");
            }
            spec.varied_names.push_back(resolve_numeric_name(pipeline.schema, kv.key));
            spec.varied_ranges.emplace_back(std::stod(kv.value.substr(0, colon)),
                                            std::stod(kv.value.substr(colon + 1)));
        }
        for (const std::string& f : surf_fix) {
            const KeyValue kv = split_assignment(f, "--fix");
            const int cat = pipeline.schema.categorical_index(kv.key);
            if (cat >= 0) {
                spec.base.categoricals[cat] = kv.value == "None" ? "" : kv.value;
            } else {
                const std::string name = resolve_numeric_name(pipeline.schema, kv.key);
                spec.base.numerics[pipeline.schema.numeric_index(name)] = std::stod(kv.value);
            }
        }
        const SurfaceGrid grid = surface_grid(pipeline, spec);
        atomic_write_file(surf_out, surface_to_csv(grid, pipeline.schema, spec.base));
        std::cout << "wrote " << grid.rows.size() << " surface rows to " << surf_out << '\n';
    } else if (*tune) {
        const Dataset data = parse_dataset(read_file(tune_data), schema);
        PipelineConfig cfg;
        cfg.seed = tune_seed;
        // Same feature path as fit_pipeline, then an 80/20 tuning split.
        cfg.tune_budget = 0;
        const SplitPlan plan = split(data, 0.8, 0.0, derive_seed(tune_seed, 5));
        const Dataset train = subset(data, plan.train_idx);
        const Dataset val = subset(data, plan.test_idx);

        const HashingEncoder encoder(cfg.encoder_dim, cfg.encoder_seed);
        auto raw_features = [&](const Dataset& d) {
            Matrix F(d.size(), cfg.encoder_dim + 6);
            for (Index i = 0; i < d.size(); ++i) {
                const RigRecord& rec = d.records[i];
                F.block(i, 0, 1, cfg.encoder_dim) = encoder.encode(rec).transpose();
                F(i, cfg.encoder_dim + 0) = rec.numerics[kDose];
                F(i, cfg.encoder_dim + 1) = rec.numerics[kTemp];
                F(i, cfg.encoder_dim + 2) = rec.numerics[kTime];
                F(i, cfg.encoder_dim + 3) = rec.numerics[kMonomerConc];
                F(i, cfg.encoder_dim + 4) = rec.numerics[kSolventConc];
                F(i, cfg.encoder_dim + 5) = rec.numerics[kAdditiveConc];
            }
            return F;
        };
        const Matrix Ftr = raw_features(train);
        const Standardizer fs = Standardizer::fit(Ftr);
        const PcaModel pca = PcaModel::fit(fs.apply(Ftr), cfg.pca_cap);
        const Matrix Xt = pca.apply(fs.apply(Ftr));
        const Matrix Xv = pca.apply(fs.apply(raw_features(val)));

        const TuneResult tuned =
            tune_first_stage(Xt, train.target_vector(), Xv, val.target_vector(),
                             default_gbt_space(), tune_budget, tune_seed, cfg.gbt);
        cfg.gbt = tuned.config;
        const std::string text = config_to_text(cfg);
        std::cout << "best validation RMSE " << tuned.val_rmse << " after " << tune_budget
                  << " trials\n"
                  << text;
        if (!tune_out.empty()) {
            atomic_write_file(tune_out, text);
            std::cout << "wrote tuned config to " << tune_out << '\n';
        }
    } else if (*eff) {
        const Dataset data = parse_dataset(read_file(eff_data), schema);
        const DescriptorEffectReport report = descriptor_effect_report(data, eff_descriptor);
        std::string csv = "descriptor_value,film,count,mean_gy,max_gy\n";
        for (const EffectCell& cell : report.cells) {
            csv += (cell.descriptor_value.empty() ? "None" : cell.descriptor_value) + "," +
                   (cell.film.empty() ? "None" : cell.film) + "," +
                   std::to_string(cell.count) + "," + format_number(cell.mean_gy) + "," +
                   format_number(cell.max_gy) + "\n";
        }
        csv += "marginal,value,count\n";
        for (const auto& [value, count] : report.value_marginals) {
            csv += report.descriptor + "," + (value.empty() ? "None" : value) + "," +
                   std::to_string(count) + "\n";
        }
        for (const auto& [film, count] : report.film_marginals) {
            csv += "film," + (film.empty() ? "None" : film) + "," + std::to_string(count) +
                   "\n";
        }
        if (eff_out.empty()) std::cout << csv;
        else {
            atomic_write_file(eff_out, csv);
            std::cout << "wrote effects report to " << eff_out << '\n';
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const sodip::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
