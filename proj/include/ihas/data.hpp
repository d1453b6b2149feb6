#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ihas/rng.hpp"

namespace ihas {

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

enum class FieldKind { categorical, numerical };

struct FieldSchema {
    std::string name;
    FieldKind kind = FieldKind::categorical;
    std::size_t vocab_size = 0;     // filled by build_vocab; includes "others"
    std::vector<double> bin_edges;  // numerical fields only; empty = per-integer bins
};

struct DatasetSchema {
    std::string label_column;
    std::vector<FieldSchema> fields;
};

DatasetSchema load_schema(const std::string& path);
void save_schema(const DatasetSchema& schema, const std::string& path);

// Stable fingerprint of the schema structure (names/kinds/edges), used by
// checkpoints to reject mismatched data.
std::uint64_t schema_hash(const DatasetSchema& schema);

// ---------------------------------------------------------------------------
// Raw CSV tables
// ---------------------------------------------------------------------------

struct RawTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

RawTable read_csv(const std::string& path);

// Positions of schema fields / label within the table header; throws
// EncodingError naming the first missing column.
std::vector<std::size_t> resolve_field_columns(const RawTable& table, const DatasetSchema& schema);
std::size_t resolve_label_column(const RawTable& table, const DatasetSchema& schema);

// ---------------------------------------------------------------------------
// Vocabulary with rare-token grouping
// ---------------------------------------------------------------------------

struct Vocabulary {
    // Per field: frequent token -> dense index in [0, |n|-1). Index |n|-1 is
    // reserved for "others" (rare at build time, unseen at encode time).
    std::vector<std::unordered_map<std::string, std::uint32_t>> token_to_index;
    std::vector<std::vector<std::string>> index_to_token; // frequent tokens, index order

    std::size_t n_fields() const { return token_to_index.size(); }
    std::uint32_t others_index(std::size_t field) const {
        return static_cast<std::uint32_t>(index_to_token[field].size());
    }
    std::size_t vocab_size(std::size_t field) const { return index_to_token[field].size() + 1; }

    std::uint32_t lookup(std::size_t field, const std::string& token) const {
        const auto& m = token_to_index[field];
        auto it = m.find(token);
        return it == m.end() ? others_index(field) : it->second;
    }
};

// Counts token frequencies over the given rows (all rows when row_subset is
// null) and assigns dense indices to tokens with frequency >= min_freq, in
// first-appearance order. Fills schema.vocab_size per field.
Vocabulary build_vocab(const RawTable& table,
                       DatasetSchema& schema,
                       std::size_t min_freq = 10,
                       const std::vector<std::size_t>* row_subset = nullptr);

// Numerical preprocessing: x -> floor(ln(x)^2) when x > 2, then either a bin
// lookup against the field's edges (clamped) or the integer value itself.
long long bin_numeric(double x, const FieldSchema& field);

// The token string a numerical cell contributes to the vocabulary.
std::string numeric_token(const std::string& cell, const FieldSchema& field);

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

struct EncodedSample {
    std::vector<std::uint32_t> field_indices;
    std::uint8_t label = 0;

    bool operator==(const EncodedSample&) const = default;
};

EncodedSample encode(const RawTable& table,
                     std::size_t row,
                     const DatasetSchema& schema,
                     const Vocabulary& vocab,
                     const std::vector<std::size_t>& field_columns,
                     std::size_t label_column);

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

// Seeded permutation, then contiguous 80/10/10. Throws DataError below 10 rows.
SplitIndices split_indices(std::size_t n, std::uint64_t seed);

struct DatasetSplit {
    std::vector<EncodedSample> train, val, test;
};

DatasetSplit split_dataset(const std::vector<EncodedSample>& samples, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Planted-structure synthetic generator
// ---------------------------------------------------------------------------

struct SyntheticConfig {
    std::size_t n_samples = 10000;
    std::size_t n_fields = 10;
    std::vector<std::size_t> vocab_sizes;               // per field; broadcast if size 1
    std::size_t n_groups = 2;
    std::vector<std::vector<std::size_t>> relevant_fields; // per group
    double coef_scale = 2.0;
    // When true each group draws categories from its own slice of every
    // field's vocabulary, making group membership observable from features.
    bool disjoint_support = true;
    // Category popularity within a slice: tent profile peaked at the slice
    // ends, weight 1+(skew-1)*|2l-(L-1)|/(L-1). Symmetric under l -> L-1-l,
    // so it never leaks label information; 1 = uniform. Mimics the heavy
    // popularity skew of real CTR categories and gives groups distinct
    // embedding-space centroids.
    double popularity_skew = 1.0;
    // When true, a field that is relevant for some other group but not for
    // the sample's own group takes a reserved placeholder category (index =
    // vocab size, appended per field) instead of a random draw - the
    // "inapplicable field" pattern of heterogeneous CTR logs. Fields
    // relevant for nobody keep their random group-sliced draws.
    bool null_inapplicable_fields = false;
};

struct SyntheticGroundTruth {
    std::vector<std::uint32_t> group_of_sample;
    std::vector<std::vector<std::size_t>> relevant_fields;
    std::size_t n_groups = 0;
};

struct SyntheticData {
    std::vector<std::vector<std::uint32_t>> categories; // [sample][field]
    std::vector<std::uint8_t> labels;
    SyntheticGroundTruth truth;
};

// Labels follow Bernoulli(sigmoid(score)) where score sums per-category
// coefficients of the sample's group over that group's relevant fields only.
// Coefficients are symmetric around zero within each group's reachable
// categories, so the label carries no information about irrelevant fields.
SyntheticData generate_synthetic(const SyntheticConfig& cfg, RngStream& rng);

// Per-category coefficient used by the generator (exposed for oracle tests).
double synthetic_coefficient(const SyntheticConfig& cfg, std::size_t group,
                             std::size_t field, std::uint32_t category);

// Writes data.csv / schema.json / truth.json under out_dir; returns csv path.
std::string write_synthetic_dataset(const SyntheticData& data, const SyntheticConfig& cfg,
                                    const std::string& out_dir);

std::uint64_t file_hash(const std::string& path);

} // namespace ihas
