#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ihas/data.hpp"
#include "ihas/numeric.hpp"

namespace ihas {

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

// Per-field embedding tables, each shaped d_n x |n| (one column per category).
// d_n == 0 drops the field entirely.
struct EmbeddingTable {
    std::vector<std::size_t> dims;    // d_n per field
    std::vector<DenseMatrix> tables;  // dims[n] x vocab_size[n]

    std::size_t n_fields() const { return tables.size(); }
    std::size_t total_dim() const {
        std::size_t s = 0;
        for (auto d : dims) s += d;
        return s;
    }
};

// Two ReLU hidden layers plus a scalar sigmoid head. The paper's "(16, 8)"
// are the hidden widths; the head is separate.
struct MlpParams {
    DenseMatrix w1;
    std::vector<double> b1;
    DenseMatrix w2;
    std::vector<double> b2;
    DenseMatrix w3;
    std::vector<double> b3;
};

struct RecommenderModel {
    std::string tag; // "base" or "cluster-<i>"
    EmbeddingTable tables;
    MlpParams mlp;

    std::vector<AdamState> table_opt;
    AdamState w1_opt, b1_opt, w2_opt, b2_opt, w3_opt, b3_opt;

    std::size_t input_dim() const { return tables.total_dim(); }
    std::size_t parameter_count() const;
};

RecommenderModel make_recommender(const std::string& tag,
                                  const std::vector<std::size_t>& vocab_sizes,
                                  const std::vector<std::size_t>& dims,
                                  std::size_t hidden1, std::size_t hidden2,
                                  double lr, double weight_decay,
                                  RngStream& rng);

// ---------------------------------------------------------------------------
// Forward path
// ---------------------------------------------------------------------------

// Concatenated per-field embedding columns [e_1, ..., e_N]; length N*.
std::vector<double> embed_lookup(const EncodedSample& sample, const EmbeddingTable& tables);

using MaskBits = std::vector<std::uint8_t>;

std::vector<double> apply_mask(std::span<const double> embedding, std::span<const std::uint8_t> mask);

struct ForwardCache {
    std::vector<double> input; // masked embedding
    std::vector<double> a1, h1, a2, h2;
    double logit = 0.0;
    double prob = 0.0;
};

ForwardCache forward_cached(const RecommenderModel& model, std::vector<double> masked_embedding);

// Predicted click probability in (0,1).
double forward(const RecommenderModel& model, std::vector<double> masked_embedding);

double bce_loss(double predicted, std::uint8_t label);

// Gradient of BCE w.r.t. the masked embedding for a frozen model; used by the
// gate update, which must not touch {V, theta}.
std::vector<double> backward_to_input(const RecommenderModel& model, const ForwardCache& cache,
                                      double dlogit);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// Raw mean-BCE gradients for one batch; embedding gradients are kept sparse,
// keyed by touched category per field.
struct BatchGrads {
    double loss = 0.0;
    DenseMatrix gw1, gw2, gw3;
    std::vector<double> gb1, gb2, gb3;
    std::vector<std::map<std::uint32_t, std::vector<double>>> embedding;
};

BatchGrads compute_batch_gradients(const RecommenderModel& model,
                                   std::span<const EncodedSample> batch,
                                   std::span<const MaskBits> masks);

// One optimizer step on theta and the touched embedding columns from the mean
// BCE over the batch. masks may be empty (all gates open) or hold one bit
// vector per sample; gradients never flow into gate parameters here.
double train_step(RecommenderModel& model,
                  std::span<const EncodedSample> batch,
                  std::span<const MaskBits> masks);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

// Rank-sum AUC with average ranks for ties. Throws MetricError when the
// labels are single-class.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

double logloss(std::span<const double> scores, std::span<const std::uint8_t> labels);

} // namespace ihas
