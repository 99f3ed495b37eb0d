#include "sodip/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <sstream>
#include <unordered_map>

namespace sodip {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool is_none_cell(const std::string& cell) {
    const std::string t = lower(trim(cell));
    return t.empty() || t == "none";
}

// One CSV line into cells; supports double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string csv_escape(const std::string& cell) {
    if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

double parse_double(const std::string& cell, Index row, const std::string& col) {
    const std::string t = trim(cell);
    double value = 0.0;
    const char* begin = t.data();
    const char* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || t.empty()) {
        throw BadNumeric("row " + std::to_string(row) + ", column '" + col +
                         "': cannot parse '" + cell + "' as a number");
    }
    return value;
}

Dataset parse_impl(const std::string& csv_text, const DescriptorSchema& schema,
                   bool require_target) {
    schema.validate();
    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) {
        throw MissingColumn("empty input: no header row");
    }

    const std::vector<std::string> header = split_csv_line(line);
    std::unordered_map<std::string, int> col_of;
    for (std::size_t j = 0; j < header.size(); ++j) {
        col_of[lower(trim(header[j]))] = static_cast<int>(j);
    }

    auto locate = [&](const std::string& name) -> int {
        auto it = col_of.find(lower(name));
        if (it == col_of.end()) {
            throw MissingColumn("missing column '" + name + "'");
        }
        return it->second;
    };

    std::array<int, kNumCategorical> cat_col{};
    std::array<int, kNumNumeric> num_col{};
    for (int k = 0; k < kNumCategorical; ++k) cat_col[k] = locate(schema.categorical_names[k]);
    for (int k = 0; k < kNumNumeric; ++k) num_col[k] = locate(schema.numeric_fields[k].name);
    int target_col = -1;
    if (require_target) {
        target_col = locate(schema.target_name);
    } else {
        auto it = col_of.find(lower(schema.target_name));
        if (it != col_of.end()) target_col = it->second;
    }

    Dataset ds;
    ds.schema = schema;

    Index row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        auto cell_at = [&](int j, const std::string& col) -> const std::string& {
            if (j >= static_cast<int>(cells.size())) {
                throw BadNumeric("row " + std::to_string(row) + ", column '" + col +
                                 "': row has too few cells");
            }
            return cells[j];
        };

        RigRecord rec;
        for (int k = 0; k < kNumCategorical; ++k) {
            const std::string& cell = cell_at(cat_col[k], schema.categorical_names[k]);
            rec.categoricals[k] = is_none_cell(cell) ? "" : trim(cell);
        }
        for (int k = 0; k < kNumNumeric; ++k) {
            const NumericField& field = schema.numeric_fields[k];
            const std::string& cell = cell_at(num_col[k], field.name);
            if (field.none_is_zero && is_none_cell(cell)) {
                rec.numerics[k] = 0.0;
            } else {
                rec.numerics[k] = parse_double(cell, row, field.name);
            }
        }
        if (target_col >= 0) {
            const std::string& cell = cell_at(target_col, schema.target_name);
            if (!require_target && is_none_cell(cell)) {
                rec.target = std::numeric_limits<double>::quiet_NaN();
            } else {
                rec.target = parse_double(cell, row, schema.target_name);
            }
        } else {
            rec.target = std::numeric_limits<double>::quiet_NaN();
        }
        validate_record(rec, schema, row, !std::isnan(rec.target));
        ds.records.push_back(std::move(rec));
    }

    if (require_target && ds.records.empty()) {
        throw TooFewRecords("dataset has no data rows");
    }
    return ds;
}

}  // namespace

DescriptorSchema DescriptorSchema::rig_default() {
    DescriptorSchema s;
    s.categorical_names = {"film",     "monomer",       "base_polymer",
                           "morphology", "supplier",    "grafting_type",
                           "irradiation_type", "solvent", "additive"};
    const double inf = std::numeric_limits<double>::infinity();
    s.numeric_fields = {
        NumericField{"base_size_um", "um", 0.0, inf, false},
        NumericField{"mw_base", "g/mol", 0.0, inf, false},
        NumericField{"mw_monomer", "g/mol", 0.0, inf, false},
        NumericField{"mw_solvent", "g/mol", 0.0, inf, true},
        NumericField{"mw_additive", "g/mol", 0.0, inf, true},
        NumericField{"dose_kGy", "kGy", 0.0, inf, false},
        NumericField{"temp_C", "C", 0.0, inf, false},
        NumericField{"time_h", "h", 0.0, inf, false},
        NumericField{"monomer_conc_vol", "vol%", 0.0, inf, false},
        NumericField{"solvent_conc_vol", "vol%", 0.0, inf, true},
        NumericField{"additive_conc_vol", "vol%", 0.0, inf, true},
    };
    s.target_name = "grafting_yield_pct";
    s.target_lower = 0.0;
    s.target_upper = 1000.0;
    return s;
}

void DescriptorSchema::validate() const {
    std::unordered_map<std::string, int> seen;
    auto claim = [&](const std::string& name) {
        if (name.empty()) throw SchemaViolation("schema: empty descriptor name");
        if (++seen[lower(name)] > 1) {
            throw SchemaViolation("schema: duplicate name '" + name + "'");
        }
    };
    for (const std::string& name : categorical_names) claim(name);
    for (const NumericField& field : numeric_fields) {
        claim(field.name);
        if (field.lower < 0.0 || !(field.lower < field.upper)) {
            throw SchemaViolation("schema: bad range for '" + field.name + "'");
        }
    }
    claim(target_name);
    if (target_lower < 0.0 || !(target_lower < target_upper)) {
        throw SchemaViolation("schema: bad target range");
    }
}

int DescriptorSchema::categorical_index(const std::string& name) const {
    for (int k = 0; k < kNumCategorical; ++k) {
        if (lower(categorical_names[k]) == lower(name)) return k;
    }
    return -1;
}

int DescriptorSchema::numeric_index(const std::string& name) const {
    for (int k = 0; k < kNumNumeric; ++k) {
        if (lower(numeric_fields[k].name) == lower(name)) return k;
    }
    return -1;
}

void validate_record(const RigRecord& record, const DescriptorSchema& schema,
                     Index row, bool check_target) {
    auto where = [&](const std::string& col) {
        return "row " + std::to_string(row) + ", column '" + col + "'";
    };
    for (int k = 0; k < kNumNumeric; ++k) {
        const NumericField& field = schema.numeric_fields[k];
        const double v = record.numerics[k];
        if (!std::isfinite(v)) {
            throw BadNumeric(where(field.name) + ": value is not finite");
        }
        if (v < field.lower || v > field.upper) {
            throw RangeViolation(where(field.name) + ": value " + format_number(v) +
                                 " outside [" + format_number(field.lower) + ", " +
                                 format_number(field.upper) + "] " + field.unit);
        }
    }
    if (check_target) {
        if (!std::isfinite(record.target)) {
            throw BadNumeric(where(schema.target_name) + ": value is not finite");
        }
        if (record.target < schema.target_lower || record.target > schema.target_upper) {
            throw RangeViolation(where(schema.target_name) + ": value " +
                                 format_number(record.target) + " outside [" +
                                 format_number(schema.target_lower) + ", " +
                                 format_number(schema.target_upper) + "]");
        }
    }
}

Dataset parse_dataset(const std::string& csv_text, const DescriptorSchema& schema) {
    return parse_impl(csv_text, schema, true);
}

Dataset parse_records(const std::string& csv_text, const DescriptorSchema& schema) {
    return parse_impl(csv_text, schema, false);
}

std::string format_number(double value, int significant_digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", significant_digits, value);
    return buf;
}

std::string write_csv(const Dataset& dataset) {
    const DescriptorSchema& s = dataset.schema;
    std::string out;
    for (int k = 0; k < kNumCategorical; ++k) {
        out += s.categorical_names[k];
        out += ',';
    }
    for (int k = 0; k < kNumNumeric; ++k) {
        out += s.numeric_fields[k].name;
        out += ',';
    }
    out += s.target_name;
    out += '\n';

    for (const RigRecord& rec : dataset.records) {
        for (int k = 0; k < kNumCategorical; ++k) {
            out += csv_escape(rec.categoricals[k]);
            out += ',';
        }
        for (int k = 0; k < kNumNumeric; ++k) {
            out += format_number(rec.numerics[k]);
            out += ',';
        }
        out += std::isnan(rec.target) ? "" : format_number(rec.target);
        out += '\n';
    }
    return out;
}

Matrix Dataset::numeric_matrix() const {
    Matrix X(size(), kNumNumeric);
    for (Index i = 0; i < size(); ++i) {
        for (int k = 0; k < kNumNumeric; ++k) X(i, k) = records[i].numerics[k];
    }
    return X;
}

Vector Dataset::target_vector() const {
    Vector y(size());
    for (Index i = 0; i < size(); ++i) y[i] = records[i].target;
    return y;
}

std::uint64_t Dataset::content_hash() const {
    const char sep = '|';
    std::uint64_t h = fnv1a64(provenance);
    for (const RigRecord& rec : records) {
        for (const std::string& c : rec.categoricals) {
            h = fnv1a64(c, h);
            h = fnv1a64(&sep, 1, h);
        }
        for (double v : rec.numerics) h = fnv1a64(&v, sizeof(v), h);
        h = fnv1a64(&rec.target, sizeof(rec.target), h);
    }
    return h;
}

std::string build_text_key(const RigRecord& record) {
    // Field order mirrors the serialized form used in the source literature:
    // film, monomer, base, morphology, supplier, size, method, source,
    // solvent, solvent volume fraction, additive, additive volume fraction.
    std::vector<std::string> fields;
    fields.reserve(12);
    auto cat = [&](int slot) {
        const std::string& v = record.categoricals[slot];
        fields.push_back(v.empty() ? "None" : v);
    };
    cat(kFilm);
    cat(kMonomer);
    cat(kBasePolymer);
    cat(kMorphology);
    cat(kSupplier);
    fields.push_back(format_number(record.numerics[kSize]));
    cat(kMethod);
    cat(kSource);
    cat(kSolvent);
    fields.push_back(format_number(record.numerics[kSolventConc]));
    cat(kAdditive);
    fields.push_back(format_number(record.numerics[kAdditiveConc]));

    // Separator is "_ " except before the final field, which is joined with
    // a bare "_" in the canonical serialization.
    std::string key;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) key += (i + 1 == fields.size()) ? "_" : "_ ";
        key += fields[i];
    }
    return key;
}

Vector hashing_encode(const std::string& key, Index dimension, std::uint64_t seed) {
    if (dimension < 8) {
        throw DimensionMismatch("hashing_encode: dimension must be >= 8, got " +
                                std::to_string(dimension));
    }
    Vector v = Vector::Zero(dimension);

    // Tokens are the '_'-separated fields of the key, whitespace-trimmed.
    std::size_t start = 0;
    int token_index = 0;
    bool any = false;
    while (start <= key.size()) {
        std::size_t end = key.find('_', start);
        if (end == std::string::npos) end = key.size();
        const std::string token = trim(key.substr(start, end - start));
        if (!token.empty()) {
            // Mix in the token position so reordered fields hash differently.
            std::uint64_t h = fnv1a64(token, seed ^ 0xcbf29ce484222325ULL);
            h = fnv1a64(&token_index, sizeof(token_index), h);
            const Index bucket = static_cast<Index>(h % static_cast<std::uint64_t>(dimension));
            const double sign = ((h >> 32) & 1ULL) ? 1.0 : -1.0;
            v[bucket] += sign;
            any = true;
        }
        ++token_index;
        if (end == key.size()) break;
        start = end + 1;
    }

    if (any) {
        const double norm = v.norm();
        if (norm > 0.0) v /= norm;
    }
    return v;
}

HashingEncoder::HashingEncoder(Index dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
    if (dimension < 8) {
        throw DimensionMismatch("HashingEncoder: dimension must be >= 8");
    }
}

Vector HashingEncoder::encode(const RigRecord& record) const {
    return hashing_encode(build_text_key(record), dimension_, seed_);
}

SplitPlan split(const Dataset& dataset, double train_frac, double val_frac,
                std::uint64_t seed) {
    if (!(train_frac > 0.0) || val_frac < 0.0 || train_frac + val_frac >= 1.0) {
        throw TooFewRecords("split: need train_frac > 0, val_frac >= 0, sum < 1");
    }
    const Index n = dataset.size();
    const double test_frac = 1.0 - train_frac - val_frac;

    const Index n_test = static_cast<Index>(std::floor(double(n) * test_frac + 1e-9));
    Index n_train = static_cast<Index>(std::floor(double(n) * train_frac + 1e-9));
    Index n_val = static_cast<Index>(std::floor(double(n) * val_frac + 1e-9));
    // Left-over records (at most two, from the floors) go to whichever of
    // train/val sits furthest below its requested share.
    Index leftover = n - n_test - n_train - n_val;
    while (leftover > 0) {
        const double train_gap = double(n) * train_frac - double(n_train);
        const double val_gap = double(n) * val_frac - double(n_val);
        if (train_gap >= val_gap) ++n_train;
        else ++n_val;
        --leftover;
    }

    if (n_test <= 0 || n_train <= 0 || (val_frac > 0.0 && n_val <= 0)) {
        throw TooFewRecords("split: a requested split would be empty (n=" +
                            std::to_string(n) + ")");
    }

    std::vector<Index> order(n);
    for (Index i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    SplitPlan plan;
    plan.seed = seed;
    plan.test_idx.assign(order.begin(), order.begin() + n_test);
    plan.train_idx.assign(order.begin() + n_test, order.begin() + n_test + n_train);
    plan.val_idx.assign(order.begin() + n_test + n_train, order.end());
    std::sort(plan.test_idx.begin(), plan.test_idx.end());
    std::sort(plan.train_idx.begin(), plan.train_idx.end());
    std::sort(plan.val_idx.begin(), plan.val_idx.end());
    return plan;
}

Dataset subset(const Dataset& dataset, const std::vector<Index>& idx) {
    Dataset out;
    out.schema = dataset.schema;
    out.provenance = dataset.provenance;
    out.records.reserve(idx.size());
    for (Index i : idx) out.records.push_back(dataset.records[i]);
    return out;
}

}  // namespace sodip
