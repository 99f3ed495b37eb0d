#include "sodip/eval.hpp"

#include <algorithm>
#include <sstream>

namespace sodip {

Metrics metrics(const Vector& y, const Vector& yhat) {
    if (y.size() != yhat.size()) {
        throw LengthMismatch("metrics: y has " + std::to_string(y.size()) +
                             " entries, yhat has " + std::to_string(yhat.size()));
    }
    if (y.size() < 2) throw LengthMismatch("metrics: needs >= 2 points");

    Metrics m;
    m.n = y.size();
    const Vector err = y - yhat;
    m.mae = err.cwiseAbs().mean();
    m.rmse = std::sqrt(err.array().square().mean());

    const double sst = (y.array() - y.mean()).square().sum();
    if (sst > 0.0) {
        m.r2 = 1.0 - err.array().square().sum() / sst;
        m.r2_defined = true;
    }
    return m;
}

CalibrationReport interval_coverage(const Vector& y, const Vector& mu, const Vector& var,
                                    double level, const std::vector<int>& cluster_tags) {
    if (y.size() != mu.size() || y.size() != var.size()) {
        throw LengthMismatch("interval_coverage: y, mu, var lengths differ");
    }
    if (!(level > 0.0 && level < 1.0)) {
        throw Error("interval_coverage: level must be in (0, 1)");
    }
    if (!cluster_tags.empty() && static_cast<Index>(cluster_tags.size()) != y.size()) {
        throw LengthMismatch("interval_coverage: cluster tags length mismatch");
    }

    const double z = normal_two_sided_z(level);
    CalibrationReport rep;
    rep.level = level;

    std::map<int, std::pair<Index, Index>> hits_of;  // cluster -> (hits, n)
    Index hits = 0;
    double half_sum = 0.0;
    for (Index i = 0; i < y.size(); ++i) {
        const double half = z * std::sqrt(std::max(var[i], 0.0));
        half_sum += half;
        const bool hit = y[i] >= mu[i] - half && y[i] <= mu[i] + half;
        hits += hit ? 1 : 0;
        if (!cluster_tags.empty()) {
            auto& [h, n] = hits_of[cluster_tags[i]];
            h += hit ? 1 : 0;
            n += 1;
        }
    }
    rep.coverage = double(hits) / double(y.size());
    rep.mean_halfwidth = half_sum / double(y.size());
    for (const auto& [cid, hn] : hits_of) {
        rep.per_cluster[cid] = {double(hn.first) / double(hn.second), hn.second};
    }
    return rep;
}

ClusterReport cluster_report(const FittedPipeline& pipeline, const Dataset& eval_set) {
    if (eval_set.size() < 1) throw TooFewRecords("cluster_report: empty evaluation set");

    std::map<int, std::vector<Index>> rows_of;
    std::vector<double> means(eval_set.size());
    for (Index i = 0; i < eval_set.size(); ++i) {
        const Prediction pred = predict(pipeline, eval_set.records[i]);
        means[i] = pred.mean;
        rows_of[pred.dominant_cluster].push_back(i);
    }
    const Vector y = eval_set.target_vector();

    ClusterReport report;
    for (const auto& [cid, rows] : rows_of) {
        ClusterReportRow row;
        row.cluster_id = cid;
        row.n = static_cast<Index>(rows.size());

        Vector yc(rows.size()), pc(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            yc[i] = y[rows[i]];
            pc[i] = means[rows[i]];
        }
        row.response_min = yc.minCoeff();
        row.response_max = yc.maxCoeff();

        const double span = row.response_max - row.response_min;
        for (Index i = 0; i < yc.size(); ++i) {
            int bin = span > 0.0
                          ? static_cast<int>(std::floor((yc[i] - row.response_min) / span * 20.0))
                          : 0;
            bin = std::clamp(bin, 0, 19);
            ++row.histogram[bin];
        }

        if (rows.size() >= 2) {
            row.metrics = metrics(yc, pc);
        } else {
            row.metrics.n = 1;
            row.metrics.mae = row.metrics.rmse = std::abs(yc[0] - pc[0]);
        }

        // Stability tags mirror the qualitative reproducibility labels used
        // for these reports: r2 >= 0.9 stable, r2 < 0.4 unstable, else partial.
        if (row.metrics.r2_defined && row.metrics.r2 >= 0.9) row.stability = "stable";
        else if (row.metrics.r2_defined && row.metrics.r2 < 0.4) row.stability = "unstable";
        else row.stability = "partial";

        report.rows.push_back(std::move(row));
    }
    return report;
}

SurfaceGrid surface_grid(const FittedPipeline& pipeline, const SurfaceSpec& spec) {
    const DescriptorSchema& schema = pipeline.schema;
    const std::size_t n_varied = spec.varied_names.size();
    if (n_varied < 1 || n_varied > 4) {
        throw Error("surface_grid: need 1 to 4 varied dimensions");
    }
    if (spec.varied_ranges.size() != n_varied) {
        throw Error("surface_grid: one range per varied dimension required");
    }
    if (spec.n < 1) throw Error("surface_grid: n must be >= 1");

    std::vector<int> slots;
    for (std::size_t j = 0; j < n_varied; ++j) {
        const int slot = schema.numeric_index(spec.varied_names[j]);
        if (slot < 0) {
            throw UnknownDescriptor("surface_grid: unknown numeric descriptor '" +
                                    spec.varied_names[j] + "'");
        }
        const NumericField& field = schema.numeric_fields[slot];
        const auto [lo, hi] = spec.varied_ranges[j];
        if (!(lo < hi)) throw Error("surface_grid: range for '" + field.name +
                                    "' needs lo < hi");
        if (lo < field.lower || hi > field.upper) {
            throw RangeViolation("surface_grid: range for '" + field.name + "' exceeds [" +
                                 format_number(field.lower) + ", " +
                                 format_number(field.upper) + "]");
        }
        slots.push_back(slot);
    }

    // Varied-dimension coordinates per output row.
    std::vector<Vector> points;
    if (spec.mode == SurfaceMode::Lhc) {
        SearchSpace space;
        for (std::size_t j = 0; j < n_varied; ++j) {
            space.dims.push_back(SearchDim{spec.varied_names[j], DimKind::Continuous,
                                           spec.varied_ranges[j].first,
                                           spec.varied_ranges[j].second});
        }
        points = lhc_sample(space, spec.n, spec.seed);
    } else {
        std::vector<Index> counter(n_varied, 0);
        const Index per_dim = spec.n;
        for (;;) {
            Vector v(n_varied);
            for (std::size_t j = 0; j < n_varied; ++j) {
                const auto [lo, hi] = spec.varied_ranges[j];
                v[j] = per_dim == 1 ? lo
                                    : lo + (hi - lo) * double(counter[j]) / double(per_dim - 1);
            }
            points.push_back(v);
            std::size_t j = 0;
            while (j < n_varied && ++counter[j] == per_dim) counter[j++] = 0;
            if (j == n_varied) break;
        }
    }

    SurfaceGrid grid;
    grid.varied_names = spec.varied_names;
    grid.varied_ranges = spec.varied_ranges;
    grid.rows.reserve(points.size());
    for (const Vector& v : points) {
        RigRecord rec = spec.base;
        for (std::size_t j = 0; j < n_varied; ++j) rec.numerics[slots[j]] = v[j];
        const Prediction pred = predict(pipeline, rec);
        SurfaceRow row;
        row.point = v;
        row.mean = pred.mean;
        row.var = pred.var;
        row.pi_lower = pred.pi_lower;
        row.pi_upper = pred.pi_upper;
        row.dominant_cluster = pred.dominant_cluster;
        grid.rows.push_back(std::move(row));
    }
    return grid;
}

std::string surface_to_csv(const SurfaceGrid& grid, const DescriptorSchema& schema,
                           const RigRecord& base) {
    std::vector<int> slots;
    for (const std::string& name : grid.varied_names) {
        slots.push_back(schema.numeric_index(name));
    }

    std::string out;
    for (int k = 0; k < kNumCategorical; ++k) {
        out += schema.categorical_names[k];
        out += ',';
    }
    for (int k = 0; k < kNumNumeric; ++k) {
        out += schema.numeric_fields[k].name;
        out += ',';
    }
    out += "mean_gy,var_gy,pi_lo,pi_hi,cluster\n";

    for (const SurfaceRow& row : grid.rows) {
        RigRecord rec = base;
        for (std::size_t j = 0; j < slots.size(); ++j) rec.numerics[slots[j]] = row.point[j];
        for (int k = 0; k < kNumCategorical; ++k) {
            out += rec.categoricals[k];
            out += ',';
        }
        for (int k = 0; k < kNumNumeric; ++k) {
            out += format_number(rec.numerics[k]);
            out += ',';
        }
        out += format_number(row.mean);
        out += ',';
        out += format_number(row.var);
        out += ',';
        out += format_number(row.pi_lower);
        out += ',';
        out += format_number(row.pi_upper);
        out += ',';
        out += std::to_string(row.dominant_cluster);
        out += '\n';
    }
    return out;
}

DescriptorEffectReport descriptor_effect_report(const Dataset& dataset,
                                                const std::string& descriptor) {
    const int slot = dataset.schema.categorical_index(descriptor);
    if (slot < 0) {
        throw UnknownDescriptor("descriptor_effect_report: '" + descriptor +
                                "' is not a categorical descriptor");
    }

    DescriptorEffectReport report;
    report.descriptor = dataset.schema.categorical_names[slot];

    std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
    for (const RigRecord& rec : dataset.records) {
        const std::string& value = rec.categoricals[slot];
        const std::string& film = rec.categoricals[kFilm];
        groups[{value, film}].push_back(rec.target);
        ++report.value_marginals[value];
        ++report.film_marginals[film];
    }

    for (const auto& [key, targets] : groups) {
        EffectCell cell;
        cell.descriptor_value = key.first;
        cell.film = key.second;
        cell.count = static_cast<Index>(targets.size());
        cell.mean_gy = 0.0;
        cell.max_gy = targets.front();
        for (double t : targets) {
            cell.mean_gy += t;
            cell.max_gy = std::max(cell.max_gy, t);
        }
        cell.mean_gy /= double(targets.size());
        report.cells.push_back(std::move(cell));
    }
    return report;
}

}  // namespace sodip
