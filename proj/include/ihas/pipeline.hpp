#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ihas/cluster.hpp"
#include "ihas/data.hpp"
#include "ihas/gates.hpp"
#include "ihas/recommender.hpp"

namespace ihas {

// ---------------------------------------------------------------------------
// Configuration (defaults follow the reference training setup: d=16,
// MLP (16,8), Adam 1e-3 / weight decay 1e-6, batch 2048, tau 0.1, one
// validation batch per 100 training batches, 5 pretrain epochs, k=2).
// ---------------------------------------------------------------------------

struct PipelineConfig {
    std::size_t embedding_dim = 16;
    std::size_t mlp_hidden1 = 16;
    std::size_t mlp_hidden2 = 8;
    std::size_t batch_size = 2048;
    double lr = 0.001;
    double weight_decay = 1e-6;
    double tau = 0.1;
    double lambda = 1e-3;
    double polarization_weight = -1.0; // <0: use lambda; 0: spreading term off
    std::size_t pretrain_epochs = 5;
    std::size_t val_every = 100;
    std::size_t k = 2;
    std::uint64_t seed = 17;
    std::size_t patience = 3;
    std::size_t max_search_epochs = 30;
    std::size_t max_retrain_epochs = 50;
    std::size_t min_freq = 10;
    std::size_t cluster_sample_cap = 200000;
    std::size_t kmeans_batch = 64;
    std::size_t kmeans_max_epochs = 100;
    double kmeans_tol = 1e-4;
    std::size_t histogram_bins = 100;
};

// defaults -> file values -> overrides, validated; unknown keys and
// out-of-range values raise ConfigError naming the key.
PipelineConfig parse_config(const std::string& file_path,
                            const std::map<std::string, std::string>& overrides);

std::string config_to_json(const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

enum class Stage { none = 0, pretrained = 1, searched = 2, clustered = 3, retrained = 4 };

const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);

// Per cluster: the averaged deterministic mask and the per-field selected
// dimension counts derived from it.
struct ClusterDimSpec {
    std::vector<double> mean_mask;           // length N*
    std::vector<std::size_t> dims_per_field; // d_n'
};

struct PipelineState {
    Stage stage = Stage::none;
    PipelineConfig config;
    DatasetSchema schema; // vocab sizes filled
    Vocabulary vocab;
    std::uint64_t schema_fingerprint = 0;

    RecommenderModel base;
    GateParams gates;
    KMeansModel kmeans;
    std::vector<ClusterDimSpec> cluster_specs;
    std::vector<RecommenderModel> cluster_models;

    std::vector<std::string> metrics_log;

    // Not serialized; receives one JSON record per evaluation event.
    std::function<void(const std::string&)> log_sink;

    std::size_t n_star() const { return schema.fields.size() * config.embedding_dim; }
};

PipelineState make_pipeline(PipelineConfig config, DatasetSchema schema, Vocabulary vocab);

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

struct IngestedData {
    DatasetSchema schema;
    Vocabulary vocab;
    DatasetSplit split;
    std::uint64_t data_hash = 0;
};

// CSV + schema -> seeded 80/10/10 raw split -> vocabulary on the training
// rows only -> encoded splits.
IngestedData ingest_csv(const std::string& data_path, const std::string& schema_path,
                        const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// Stages (Algorithm 1)
// ---------------------------------------------------------------------------

// Base model trained with every gate deterministically open.
void pretrain_stage(PipelineState& state, const std::vector<EncodedSample>& train);

// Bi-level searching: model updates on training batches through stochastic
// masks, gate updates on validation batches; early-stops on validation AUC.
// Runs the pretrain stage first if it has not happened yet.
void search_stage(PipelineState& state, const std::vector<EncodedSample>& train,
                  const std::vector<EncodedSample>& val);

// Mini-batch K-means over deterministically masked representations.
void cluster_stage(PipelineState& state, const std::vector<EncodedSample>& train);

// Majority dimensions per cluster: average deterministic masks over members,
// select dimensions with mean >= 0.5. Stores the result in the state.
std::vector<ClusterDimSpec> derive_cluster_dims(PipelineState& state,
                                                const std::vector<EncodedSample>& train);

// Fresh reduced-width model per cluster, trained on that cluster's samples
// with plain BCE (no gates, no masks).
void retrain_stage(PipelineState& state, const std::vector<EncodedSample>& train,
                   const std::vector<EncodedSample>& val);

// Deterministic routed inference: mask -> nearest centroid -> that cluster's
// model.
double predict(const PipelineState& state, const EncodedSample& sample);

// The masked representation a sample presents to clustering and routing.
std::vector<double> masked_representation(const PipelineState& state, const EncodedSample& sample);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct MetricsReport {
    std::size_t n_samples = 0;
    bool has_auc = false;
    double auc = 0.0;
    double logloss = 0.0;
    std::string warning;
    std::vector<std::string> field_names;
    std::vector<std::size_t> cluster_sizes;                // routed test counts
    std::vector<std::vector<std::size_t>> dims_per_cluster; // [cluster][field]

    std::string to_json() const;
    std::string to_text() const;
    std::string dims_csv() const;
};

MetricsReport evaluate(const PipelineState& state, const std::vector<EncodedSample>& test);

// ---------------------------------------------------------------------------
// Checkpoints ("IHAS-CKPT-v1": magic + JSON header + raw double blob)
// ---------------------------------------------------------------------------

void save_checkpoint(const PipelineState& state, const std::string& path);
PipelineState load_checkpoint(const std::string& path);

} // namespace ihas
