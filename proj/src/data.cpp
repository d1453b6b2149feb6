#include "ihas/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ihas/errors.hpp"

namespace ihas {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

static FieldKind parse_kind(const std::string& s) {
    if (s == "categorical") return FieldKind::categorical;
    if (s == "numerical") return FieldKind::numerical;
    throw ConfigError("schema: unknown field kind '" + s + "'");
}

DatasetSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open schema file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("schema parse error in " + path + ": " + e.what());
    }

    DatasetSchema schema;
    schema.label_column = j.at("label").get<std::string>();
    for (const auto& f : j.at("fields")) {
        FieldSchema fs;
        fs.name = f.at("name").get<std::string>();
        fs.kind = parse_kind(f.at("kind").get<std::string>());
        if (f.contains("bin_edges")) {
            fs.bin_edges = f.at("bin_edges").get<std::vector<double>>();
            if (!std::is_sorted(fs.bin_edges.begin(), fs.bin_edges.end()))
                throw ConfigError("schema: bin_edges for field '" + fs.name + "' must be sorted");
        }
        schema.fields.push_back(std::move(fs));
    }
    if (schema.fields.empty()) throw ConfigError("schema: no fields declared");
    return schema;
}

void save_schema(const DatasetSchema& schema, const std::string& path) {
    json j;
    j["label"] = schema.label_column;
    j["fields"] = json::array();
    for (const auto& f : schema.fields) {
        json jf;
        jf["name"] = f.name;
        jf["kind"] = f.kind == FieldKind::categorical ? "categorical" : "numerical";
        if (!f.bin_edges.empty()) jf["bin_edges"] = f.bin_edges;
        j["fields"].push_back(jf);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write schema file: " + path);
    out << j.dump(2) << "\n";
}

std::uint64_t schema_hash(const DatasetSchema& schema) {
    std::uint64_t h = fnv1a(schema.label_column);
    for (const auto& f : schema.fields) {
        h = fnv1a(f.name, h);
        h = fnv1a(f.kind == FieldKind::categorical ? "c" : "n", h);
        for (double e : f.bin_edges) h = fnv1a(std::to_string(e), h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

static std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell.push_back(c);
            }
        } else if (c == '"' && cell.empty()) {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cell));
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    out.push_back(std::move(cell));
    return out;
}

RawTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open data file: " + path);

    RawTable table;
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty data file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    table.columns = split_csv_line(line);

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != table.columns.size())
            throw DataError("row " + std::to_string(table.rows.size() + 2) + " in " + path +
                            " has " + std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(table.columns.size()));
        table.rows.push_back(std::move(cells));
    }
    return table;
}

static std::size_t find_column(const RawTable& table, const std::string& name) {
    for (std::size_t i = 0; i < table.columns.size(); ++i)
        if (table.columns[i] == name) return i;
    throw EncodingError("missing column '" + name + "' in data header");
}

std::vector<std::size_t> resolve_field_columns(const RawTable& table, const DatasetSchema& schema) {
    std::vector<std::size_t> cols;
    cols.reserve(schema.fields.size());
    for (const auto& f : schema.fields) cols.push_back(find_column(table, f.name));
    return cols;
}

std::size_t resolve_label_column(const RawTable& table, const DatasetSchema& schema) {
    return find_column(table, schema.label_column);
}

// ---------------------------------------------------------------------------
// Numerical binning
// ---------------------------------------------------------------------------

long long bin_numeric(double x, const FieldSchema& field) {
    if (field.kind != FieldKind::numerical)
        throw EncodingError("bin_numeric called on categorical field '" + field.name + "'");
    if (std::isnan(x)) throw EncodingError("NaN value in numerical field '" + field.name + "'");

    double t = x;
    if (x > 2.0) {
        const double lx = std::log(x);
        t = std::floor(lx * lx);
    }

    if (field.bin_edges.empty()) {
        // Each distinct integer is its own bin.
        return static_cast<long long>(std::floor(t));
    }

    // Custom-width edges: value in [edge_i, edge_{i+1}) -> i, clamped at both ends.
    const auto& e = field.bin_edges;
    auto it = std::upper_bound(e.begin(), e.end(), t);
    if (it == e.begin()) return 0;
    long long idx = static_cast<long long>(it - e.begin()) - 1;
    const long long last = static_cast<long long>(e.size()) - 1;
    return std::min(idx, last);
}

std::string numeric_token(const std::string& cell, const FieldSchema& field) {
    if (cell.empty()) return ""; // empty cells stay their own token
    double x = 0.0;
    try {
        x = std::stod(cell);
    } catch (const std::exception&) {
        throw EncodingError("non-numeric value '" + cell + "' in numerical field '" + field.name + "'");
    }
    return std::to_string(bin_numeric(x, field));
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary build_vocab(const RawTable& table,
                       DatasetSchema& schema,
                       std::size_t min_freq,
                       const std::vector<std::size_t>* row_subset) {
    const std::size_t n_rows = row_subset ? row_subset->size() : table.rows.size();
    if (n_rows == 0) throw DataError("build_vocab: empty dataset");

    const auto cols = resolve_field_columns(table, schema);
    const std::size_t n_fields = schema.fields.size();

    // token -> (count, first appearance) per field
    std::vector<std::unordered_map<std::string, std::pair<std::size_t, std::size_t>>> freq(n_fields);
    std::size_t order = 0;
    for (std::size_t r = 0; r < n_rows; ++r) {
        const auto& row = table.rows[row_subset ? (*row_subset)[r] : r];
        for (std::size_t f = 0; f < n_fields; ++f) {
            const std::string token = schema.fields[f].kind == FieldKind::numerical
                                          ? numeric_token(row[cols[f]], schema.fields[f])
                                          : row[cols[f]];
            auto [it, inserted] = freq[f].try_emplace(token, std::pair<std::size_t, std::size_t>{0, order++});
            it->second.first += 1;
        }
    }

    Vocabulary vocab;
    vocab.token_to_index.resize(n_fields);
    vocab.index_to_token.resize(n_fields);
    for (std::size_t f = 0; f < n_fields; ++f) {
        std::vector<std::pair<std::size_t, std::string>> frequent; // (first appearance, token)
        for (const auto& [token, cf] : freq[f])
            if (cf.first >= min_freq) frequent.emplace_back(cf.second, token);
        std::sort(frequent.begin(), frequent.end());

        for (std::uint32_t i = 0; i < frequent.size(); ++i) {
            vocab.token_to_index[f].emplace(frequent[i].second, i);
            vocab.index_to_token[f].push_back(frequent[i].second);
        }
        schema.fields[f].vocab_size = vocab.vocab_size(f);
    }
    return vocab;
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

static std::uint8_t parse_label(const std::string& cell) {
    if (cell == "0" || cell == "0.0") return 0;
    if (cell == "1" || cell == "1.0") return 1;
    try {
        const double v = std::stod(cell);
        if (v == 0.0) return 0;
        if (v == 1.0) return 1;
    } catch (const std::exception&) {
    }
    throw EncodingError("label value '" + cell + "' is not binary");
}

EncodedSample encode(const RawTable& table,
                     std::size_t row,
                     const DatasetSchema& schema,
                     const Vocabulary& vocab,
                     const std::vector<std::size_t>& field_columns,
                     std::size_t label_column) {
    const auto& cells = table.rows[row];
    EncodedSample s;
    s.field_indices.reserve(schema.fields.size());
    for (std::size_t f = 0; f < schema.fields.size(); ++f) {
        const std::string token = schema.fields[f].kind == FieldKind::numerical
                                      ? numeric_token(cells[field_columns[f]], schema.fields[f])
                                      : cells[field_columns[f]];
        s.field_indices.push_back(vocab.lookup(f, token));
    }
    s.label = parse_label(cells[label_column]);
    return s;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

SplitIndices split_indices(std::size_t n, std::uint64_t seed) {
    if (n < 10) throw DataError("split_dataset: need at least 10 samples, got " + std::to_string(n));

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    RngStream rng = derive_stream(seed, "dataset-split");
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.next_index(i + 1)]);

    const std::size_t n_train = static_cast<std::size_t>(static_cast<double>(n) * 0.8);
    const std::size_t n_val = static_cast<std::size_t>(static_cast<double>(n) * 0.1);

    SplitIndices out;
    out.train.assign(perm.begin(), perm.begin() + n_train);
    out.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    out.test.assign(perm.begin() + n_train + n_val, perm.end());
    return out;
}

DatasetSplit split_dataset(const std::vector<EncodedSample>& samples, std::uint64_t seed) {
    const auto idx = split_indices(samples.size(), seed);
    DatasetSplit split;
    auto take = [&](const std::vector<std::size_t>& ids, std::vector<EncodedSample>& dst) {
        dst.reserve(ids.size());
        for (auto i : ids) dst.push_back(samples[i]);
    };
    take(idx.train, split.train);
    take(idx.val, split.val);
    take(idx.test, split.test);
    return split;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

static std::size_t field_vocab(const SyntheticConfig& cfg, std::size_t field) {
    if (cfg.vocab_sizes.empty()) return 8;
    if (cfg.vocab_sizes.size() == 1) return cfg.vocab_sizes[0];
    return cfg.vocab_sizes.at(field);
}

// Group g draws field categories from [g*V/G, (g+1)*V/G) when supports are
// disjoint; the last group absorbs the remainder.
static std::pair<std::uint32_t, std::uint32_t> group_slice(const SyntheticConfig& cfg,
                                                           std::size_t group, std::size_t field) {
    const std::size_t v = field_vocab(cfg, field);
    if (!cfg.disjoint_support) return {0, static_cast<std::uint32_t>(v)};
    const std::size_t width = v / cfg.n_groups;
    const std::uint32_t lo = static_cast<std::uint32_t>(group * width);
    const std::uint32_t hi = group + 1 == cfg.n_groups ? static_cast<std::uint32_t>(v)
                                                       : static_cast<std::uint32_t>(lo + width);
    return {lo, hi};
}

static void validate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.n_groups == 0 || cfg.relevant_fields.size() != cfg.n_groups)
        throw ConfigError("synthetic: relevant_fields must list one set per group");
    for (std::size_t g = 0; g < cfg.n_groups; ++g) {
        if (cfg.relevant_fields[g].empty())
            throw ConfigError("synthetic: group " + std::to_string(g) + " has no relevant fields");
        for (auto f : cfg.relevant_fields[g])
            if (f >= cfg.n_fields)
                throw ConfigError("synthetic: relevant field index out of range");
    }
    for (std::size_t f = 0; f < cfg.n_fields; ++f) {
        if (field_vocab(cfg, f) < (cfg.disjoint_support ? cfg.n_groups : std::size_t{1}))
            throw ConfigError("synthetic: vocab of field " + std::to_string(f) + " too small");
    }
}

double synthetic_coefficient(const SyntheticConfig& cfg, std::size_t group,
                             std::size_t field, std::uint32_t category) {
    const auto [lo, hi] = group_slice(cfg, group, field);
    const std::size_t width = hi - lo;
    if (width <= 1 || category < lo || category >= hi) return 0.0;
    // Symmetric around zero within the group's reachable categories, so the
    // per-group positive rate is exactly 1/2 and irrelevant fields carry no
    // label information.
    const double local = static_cast<double>(category - lo);
    return cfg.coef_scale * (2.0 * local / static_cast<double>(width - 1) - 1.0);
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg, RngStream& rng) {
    validate_synthetic(cfg);

    SyntheticData data;
    data.categories.reserve(cfg.n_samples);
    data.labels.reserve(cfg.n_samples);
    data.truth.group_of_sample.reserve(cfg.n_samples);
    data.truth.relevant_fields = cfg.relevant_fields;
    data.truth.n_groups = cfg.n_groups;

    auto draw_category = [&](std::size_t g, std::size_t f) {
        const auto [lo, hi] = group_slice(cfg, g, f);
        const std::size_t width = hi - lo;
        if (cfg.popularity_skew <= 1.0 || width == 1)
            return lo + static_cast<std::uint32_t>(rng.next_index(width));
        std::vector<double> w(width);
        double total = 0.0;
        for (std::size_t l = 0; l < width; ++l) {
            const double centered = std::abs(2.0 * static_cast<double>(l) -
                                             static_cast<double>(width - 1)) /
                                    static_cast<double>(width - 1);
            w[l] = 1.0 + (cfg.popularity_skew - 1.0) * centered;
            total += w[l];
        }
        double r = rng.uniform() * total;
        for (std::size_t l = 0; l < width; ++l) {
            r -= w[l];
            if (r < 0.0) return lo + static_cast<std::uint32_t>(l);
        }
        return static_cast<std::uint32_t>(hi - 1);
    };

    std::vector<bool> relevant_for_any(cfg.n_fields, false);
    for (const auto& fields : cfg.relevant_fields)
        for (auto f : fields) relevant_for_any[f] = true;
    auto relevant_for = [&](std::size_t g, std::size_t f) {
        for (auto rf : cfg.relevant_fields[g])
            if (rf == f) return true;
        return false;
    };

    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
        const std::size_t g = rng.next_index(cfg.n_groups);
        std::vector<std::uint32_t> cats(cfg.n_fields);
        for (std::size_t f = 0; f < cfg.n_fields; ++f) {
            if (cfg.null_inapplicable_fields && relevant_for_any[f] && !relevant_for(g, f))
                cats[f] = static_cast<std::uint32_t>(field_vocab(cfg, f)); // placeholder slot
            else
                cats[f] = draw_category(g, f);
        }
        double score = 0.0;
        for (auto f : cfg.relevant_fields[g]) score += synthetic_coefficient(cfg, g, f, cats[f]);
        const double prob = 1.0 / (1.0 + std::exp(-score));
        data.labels.push_back(rng.bernoulli(prob) ? 1 : 0);
        data.categories.push_back(std::move(cats));
        data.truth.group_of_sample.push_back(static_cast<std::uint32_t>(g));
    }
    return data;
}

std::string write_synthetic_dataset(const SyntheticData& data, const SyntheticConfig& cfg,
                                    const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string csv_path = out_dir + "/data.csv";

    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write " + csv_path);
    for (std::size_t f = 0; f < cfg.n_fields; ++f) csv << "f" << f << ",";
    csv << "label\n";
    for (std::size_t i = 0; i < data.categories.size(); ++i) {
        for (auto c : data.categories[i]) csv << c << ",";
        csv << int(data.labels[i]) << "\n";
    }
    csv.close();

    DatasetSchema schema;
    schema.label_column = "label";
    for (std::size_t f = 0; f < cfg.n_fields; ++f)
        schema.fields.push_back({"f" + std::to_string(f), FieldKind::categorical, 0, {}});
    save_schema(schema, out_dir + "/schema.json");

    json truth;
    truth["n_groups"] = data.truth.n_groups;
    truth["relevant_fields"] = data.truth.relevant_fields;
    truth["group_of_sample"] = data.truth.group_of_sample;
    std::ofstream tf(out_dir + "/truth.json");
    if (!tf) throw IoError("cannot write truth sidecar");
    tf << truth.dump() << "\n";

    return csv_path;
}

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file for hashing: " + path);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    char buf[1 << 15];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
        if (!in) break;
    }
    return h;
}

} // namespace ihas
