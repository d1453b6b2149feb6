#include "ihas/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "ihas/errors.hpp"

namespace ihas {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

void apply_config_value(PipelineConfig& cfg, const std::string& key, const json& v) {
    try {
        if (key == "d") cfg.embedding_dim = v.get<std::size_t>();
        else if (key == "mlp_hidden1") cfg.mlp_hidden1 = v.get<std::size_t>();
        else if (key == "mlp_hidden2") cfg.mlp_hidden2 = v.get<std::size_t>();
        else if (key == "batch_size") cfg.batch_size = v.get<std::size_t>();
        else if (key == "lr") cfg.lr = v.get<double>();
        else if (key == "weight_decay") cfg.weight_decay = v.get<double>();
        else if (key == "tau") cfg.tau = v.get<double>();
        else if (key == "lambda") cfg.lambda = v.get<double>();
        else if (key == "polarization_weight") cfg.polarization_weight = v.get<double>();
        else if (key == "pretrain_epochs") cfg.pretrain_epochs = v.get<std::size_t>();
        else if (key == "val_every") cfg.val_every = v.get<std::size_t>();
        else if (key == "k") cfg.k = v.get<std::size_t>();
        else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
        else if (key == "patience") cfg.patience = v.get<std::size_t>();
        else if (key == "max_search_epochs") cfg.max_search_epochs = v.get<std::size_t>();
        else if (key == "max_retrain_epochs") cfg.max_retrain_epochs = v.get<std::size_t>();
        else if (key == "min_freq") cfg.min_freq = v.get<std::size_t>();
        else if (key == "cluster_sample_cap") cfg.cluster_sample_cap = v.get<std::size_t>();
        else if (key == "kmeans_batch") cfg.kmeans_batch = v.get<std::size_t>();
        else if (key == "kmeans_max_epochs") cfg.kmeans_max_epochs = v.get<std::size_t>();
        else if (key == "kmeans_tol") cfg.kmeans_tol = v.get<double>();
        else if (key == "histogram_bins") cfg.histogram_bins = v.get<std::size_t>();
        else throw ConfigError("unknown config key '" + key + "'");
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has an invalid value");
    }
}

json parse_scalar(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return json(text); // plain strings (e.g. seeds passed as words) stay strings
    }
}

void validate_config(const PipelineConfig& cfg) {
    auto positive = [](double v, const char* key) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("config key '") + key + "' must be positive");
    };
    auto at_least = [](std::size_t v, std::size_t lo, const char* key) {
        if (v < lo)
            throw ConfigError(std::string("config key '") + key + "' must be >= " + std::to_string(lo));
    };
    at_least(cfg.embedding_dim, 1, "d");
    at_least(cfg.mlp_hidden1, 1, "mlp_hidden1");
    at_least(cfg.mlp_hidden2, 1, "mlp_hidden2");
    at_least(cfg.batch_size, 1, "batch_size");
    positive(cfg.lr, "lr");
    if (cfg.weight_decay < 0.0) throw ConfigError("config key 'weight_decay' must be >= 0");
    positive(cfg.tau, "tau");
    if (cfg.lambda < 0.0) throw ConfigError("config key 'lambda' must be >= 0");
    at_least(cfg.pretrain_epochs, 1, "pretrain_epochs");
    at_least(cfg.val_every, 1, "val_every");
    at_least(cfg.k, 2, "k");
    at_least(cfg.patience, 1, "patience");
    at_least(cfg.max_search_epochs, 1, "max_search_epochs");
    at_least(cfg.max_retrain_epochs, 1, "max_retrain_epochs");
    at_least(cfg.min_freq, 1, "min_freq");
    at_least(cfg.cluster_sample_cap, 1, "cluster_sample_cap");
    at_least(cfg.kmeans_batch, 1, "kmeans_batch");
    at_least(cfg.kmeans_max_epochs, 1, "kmeans_max_epochs");
    positive(cfg.kmeans_tol, "kmeans_tol");
    at_least(cfg.histogram_bins, 2, "histogram_bins");
}

} // namespace

PipelineConfig parse_config(const std::string& file_path,
                            const std::map<std::string, std::string>& overrides) {
    PipelineConfig cfg;

    if (!file_path.empty()) {
        std::ifstream in(file_path);
        if (!in) throw IoError("cannot open config file: " + file_path);
        std::stringstream buf;
        buf << in.rdbuf();
        const std::string text = buf.str();
        if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
            json j;
            try {
                j = json::parse(text);
            } catch (const json::exception& e) {
                throw ConfigError("config parse error in " + file_path + ": " + e.what());
            }
            if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
            for (const auto& [key, value] : j.items()) apply_config_value(cfg, key, value);
        }
    }

    for (const auto& [key, value] : overrides) apply_config_value(cfg, key, parse_scalar(value));

    validate_config(cfg);
    return cfg;
}

std::string config_to_json(const PipelineConfig& cfg) {
    json j;
    j["d"] = cfg.embedding_dim;
    j["mlp_hidden1"] = cfg.mlp_hidden1;
    j["mlp_hidden2"] = cfg.mlp_hidden2;
    j["batch_size"] = cfg.batch_size;
    j["lr"] = cfg.lr;
    j["weight_decay"] = cfg.weight_decay;
    j["tau"] = cfg.tau;
    j["lambda"] = cfg.lambda;
    j["polarization_weight"] = cfg.polarization_weight;
    j["pretrain_epochs"] = cfg.pretrain_epochs;
    j["val_every"] = cfg.val_every;
    j["k"] = cfg.k;
    j["seed"] = cfg.seed;
    j["patience"] = cfg.patience;
    j["max_search_epochs"] = cfg.max_search_epochs;
    j["max_retrain_epochs"] = cfg.max_retrain_epochs;
    j["min_freq"] = cfg.min_freq;
    j["cluster_sample_cap"] = cfg.cluster_sample_cap;
    j["kmeans_batch"] = cfg.kmeans_batch;
    j["kmeans_max_epochs"] = cfg.kmeans_max_epochs;
    j["kmeans_tol"] = cfg.kmeans_tol;
    j["histogram_bins"] = cfg.histogram_bins;
    return j.dump();
}

// ---------------------------------------------------------------------------
// State plumbing
// ---------------------------------------------------------------------------

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::none: return "none";
        case Stage::pretrained: return "pretrained";
        case Stage::searched: return "searched";
        case Stage::clustered: return "clustered";
        case Stage::retrained: return "retrained";
    }
    return "none";
}

Stage stage_from_name(const std::string& name) {
    for (Stage s : {Stage::none, Stage::pretrained, Stage::searched, Stage::clustered, Stage::retrained})
        if (name == stage_name(s)) return s;
    throw ConfigError("unknown stage tag '" + name + "'");
}

PipelineState make_pipeline(PipelineConfig config, DatasetSchema schema, Vocabulary vocab) {
    PipelineState state;
    state.config = std::move(config);
    state.schema = std::move(schema);
    state.vocab = std::move(vocab);
    state.schema_fingerprint = schema_hash(state.schema);
    return state;
}

namespace {

void log_event(PipelineState& state, const json& record) {
    std::string line = record.dump();
    state.metrics_log.push_back(line);
    if (state.log_sink) state.log_sink(line);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i-- > 1;) std::swap(idx[i], idx[rng.next_index(i + 1)]);
    return idx;
}

std::vector<std::size_t> vocab_sizes_of(const DatasetSchema& schema) {
    std::vector<std::size_t> v;
    v.reserve(schema.fields.size());
    for (const auto& f : schema.fields) v.push_back(f.vocab_size);
    return v;
}

// Validation-AUC score used for early stopping; falls back to -logloss when
// the set is single-class.
double validation_score(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
                        bool& used_auc) {
    try {
        used_auc = true;
        return auc(scores, labels);
    } catch (const MetricError&) {
        used_auc = false;
        return -logloss(scores, labels);
    }
}

std::vector<double> base_masked_scores(const PipelineState& state,
                                       const std::vector<EncodedSample>& samples) {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        const auto embedding = embed_lookup(s, state.base.tables);
        const auto probs = gate_probs(embedding, state.gates);
        const auto mask = deterministic_mask(probs, state.config.histogram_bins);
        out.push_back(forward(state.base, apply_mask(embedding, mask)));
    }
    return out;
}

std::vector<std::uint8_t> labels_of(const std::vector<EncodedSample>& samples) {
    std::vector<std::uint8_t> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void pretrain_stage(PipelineState& state, const std::vector<EncodedSample>& train) {
    if (state.stage != Stage::none)
        throw PipelineError("pretrain_stage: pipeline already at stage " +
                            std::string(stage_name(state.stage)));
    if (train.empty()) throw DataError("pretrain_stage: empty training set");

    const auto& cfg = state.config;
    RngStream init_rng = derive_stream(cfg.seed, "base-init");
    std::vector<std::size_t> dims(state.schema.fields.size(), cfg.embedding_dim);
    state.base = make_recommender("base", vocab_sizes_of(state.schema), dims,
                                  cfg.mlp_hidden1, cfg.mlp_hidden2, cfg.lr, cfg.weight_decay,
                                  init_rng);

    RngStream shuffle_rng = derive_stream(cfg.seed, "pretrain-shuffle");
    for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        const auto order = shuffled_indices(train.size(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<EncodedSample> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
            loss_sum += train_step(state.base, batch, {});
            ++n_batches;
        }
        log_event(state, {{"event", "pretrain-epoch"},
                          {"epoch", epoch + 1},
                          {"loss", loss_sum / static_cast<double>(n_batches)}});
    }
    state.stage = Stage::pretrained;
}

void search_stage(PipelineState& state, const std::vector<EncodedSample>& train,
                  const std::vector<EncodedSample>& val) {
    if (state.stage == Stage::none) pretrain_stage(state, train);
    if (state.stage != Stage::pretrained)
        throw PipelineError("search_stage: requires a pretrained pipeline, got stage " +
                            std::string(stage_name(state.stage)));
    if (val.empty()) throw DataError("search_stage: empty validation set");

    const auto& cfg = state.config;

    // Gates are initialized only now, after the embedding representation has
    // settled.
    RngStream gate_rng = derive_stream(cfg.seed, "gate-init");
    state.gates = make_gates(state.n_star(), cfg.lr, cfg.weight_decay, gate_rng);

    RngStream shuffle_rng = derive_stream(cfg.seed, "search-shuffle");
    RngStream mask_rng = derive_stream(cfg.seed, "search-gumbel");

    std::size_t val_cursor = 0;
    auto next_val_batch = [&]() {
        std::vector<EncodedSample> batch;
        batch.reserve(std::min<std::size_t>(cfg.batch_size, val.size()));
        for (std::size_t i = 0; i < cfg.batch_size && i < val.size(); ++i) {
            batch.push_back(val[val_cursor]);
            val_cursor = (val_cursor + 1) % val.size();
        }
        return batch;
    };

    double best_score = -std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    std::size_t train_batches_seen = 0;

    for (std::size_t epoch = 0; epoch < cfg.max_search_epochs; ++epoch) {
        const auto order = shuffled_indices(train.size(), shuffle_rng);
        double train_loss = 0.0;
        double gate_loss = 0.0;
        std::size_t n_batches = 0, n_gate_updates = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<EncodedSample> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);

            // model update through freshly drawn stochastic masks (Eq. 3)
            std::vector<MaskBits> masks;
            masks.reserve(batch.size());
            for (const auto& s : batch) {
                const auto embedding = embed_lookup(s, state.base.tables);
                const auto probs = gate_probs(embedding, state.gates);
                masks.push_back(stochastic_mask(probs, cfg.tau, mask_rng).bits);
            }
            train_loss += train_step(state.base, batch, masks);
            ++n_batches;
            ++train_batches_seen;

            // gate update on one validation batch (Eq. 3 + Eq. 5)
            if (train_batches_seen % cfg.val_every == 0) {
                const auto vb = next_val_batch();
                gate_loss += gate_update_step(state.gates, vb, state.base, cfg.tau, cfg.lambda,
                                              mask_rng, cfg.polarization_weight);
                ++n_gate_updates;
            }
        }

        const auto scores = base_masked_scores(state, val);
        bool used_auc = false;
        const double score = validation_score(scores, labels_of(val), used_auc);
        log_event(state, {{"event", "search-eval"},
                          {"epoch", epoch + 1},
                          {"train_loss", train_loss / std::max<std::size_t>(1, n_batches)},
                          {"gate_objective",
                           n_gate_updates ? gate_loss / static_cast<double>(n_gate_updates) : 0.0},
                          {"gate_updates", n_gate_updates},
                          {used_auc ? "val_auc" : "val_neg_logloss", score}});

        if (score > best_score + 1e-12) {
            best_score = score;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    state.stage = Stage::searched;
}

std::vector<double> masked_representation(const PipelineState& state, const EncodedSample& sample) {
    if (state.stage < Stage::searched)
        throw PipelineError("masked_representation: requires a searched pipeline");
    const auto embedding = embed_lookup(sample, state.base.tables);
    const auto probs = gate_probs(embedding, state.gates);
    return apply_mask(embedding, deterministic_mask(probs, state.config.histogram_bins));
}

void cluster_stage(PipelineState& state, const std::vector<EncodedSample>& train) {
    if (state.stage != Stage::searched)
        throw PipelineError("cluster_stage: requires a searched pipeline, got stage " +
                            std::string(stage_name(state.stage)));
    if (train.empty()) throw DataError("cluster_stage: empty training set");

    const auto& cfg = state.config;
    const std::size_t n_fit = std::min(train.size(), cfg.cluster_sample_cap);

    std::vector<std::vector<double>> reps;
    reps.reserve(n_fit);
    for (std::size_t i = 0; i < n_fit; ++i) reps.push_back(masked_representation(state, train[i]));

    KMeansFitOptions opts;
    opts.batch_size = cfg.kmeans_batch;
    opts.max_epochs = cfg.kmeans_max_epochs;
    opts.tol = cfg.kmeans_tol;
    state.kmeans = kmeans_fit(reps, cfg.k, cfg.seed, opts);

    std::vector<std::size_t> sizes(cfg.k, 0);
    for (const auto& r : reps) sizes[kmeans_assign(r, state.kmeans)] += 1;
    json sizes_json = sizes;
    log_event(state, {{"event", "cluster-fit"}, {"points", n_fit}, {"sizes", sizes_json}});

    state.stage = Stage::clustered;
}

std::vector<ClusterDimSpec> derive_cluster_dims(PipelineState& state,
                                                const std::vector<EncodedSample>& train) {
    if (state.stage < Stage::clustered)
        throw PipelineError("derive_cluster_dims: requires a clustered pipeline");

    const auto& cfg = state.config;
    const std::size_t n_star = state.n_star();
    std::vector<std::vector<double>> mask_sums(cfg.k, std::vector<double>(n_star, 0.0));
    std::vector<std::size_t> members(cfg.k, 0);

    for (const auto& sample : train) {
        const auto embedding = embed_lookup(sample, state.base.tables);
        const auto probs = gate_probs(embedding, state.gates);
        const auto mask = deterministic_mask(probs, cfg.histogram_bins);
        const auto rep = apply_mask(embedding, mask);
        const std::size_t c = kmeans_assign(rep, state.kmeans);
        members[c] += 1;
        for (std::size_t j = 0; j < n_star; ++j) mask_sums[c][j] += mask[j];
    }

    std::vector<ClusterDimSpec> specs(cfg.k);
    for (std::size_t c = 0; c < cfg.k; ++c) {
        if (members[c] == 0)
            throw PipelineError("derive_cluster_dims: cluster " + std::to_string(c) + " is empty");
        auto& spec = specs[c];
        spec.mean_mask.resize(n_star);
        for (std::size_t j = 0; j < n_star; ++j)
            spec.mean_mask[j] = mask_sums[c][j] / static_cast<double>(members[c]);

        spec.dims_per_field.assign(state.schema.fields.size(), 0);
        std::size_t offset = 0;
        for (std::size_t f = 0; f < state.schema.fields.size(); ++f) {
            for (std::size_t j = 0; j < cfg.embedding_dim; ++j)
                if (spec.mean_mask[offset + j] >= 0.5) spec.dims_per_field[f] += 1;
            offset += cfg.embedding_dim;
        }

        bool any = false;
        for (auto d : spec.dims_per_field) any = any || d > 0;
        if (!any)
            throw PipelineError("derive_cluster_dims: cluster " + std::to_string(c) +
                                " selected no dimensions");
        json dims_json = spec.dims_per_field;
        log_event(state, {{"event", "cluster-dims"},
                          {"cluster", c},
                          {"members", members[c]},
                          {"dims", dims_json}});
    }
    state.cluster_specs = specs;
    return specs;
}

void retrain_stage(PipelineState& state, const std::vector<EncodedSample>& train,
                   const std::vector<EncodedSample>& val) {
    if (state.stage != Stage::clustered)
        throw PipelineError("retrain_stage: requires a clustered pipeline, got stage " +
                            std::string(stage_name(state.stage)));
    if (state.cluster_specs.empty()) derive_cluster_dims(state, train);

    const auto& cfg = state.config;

    // Route both splits through the deterministic masks once.
    std::vector<std::vector<EncodedSample>> train_by_cluster(cfg.k), val_by_cluster(cfg.k);
    for (const auto& s : train)
        train_by_cluster[kmeans_assign(masked_representation(state, s), state.kmeans)].push_back(s);
    for (const auto& s : val)
        val_by_cluster[kmeans_assign(masked_representation(state, s), state.kmeans)].push_back(s);

    state.cluster_models.clear();
    for (std::size_t c = 0; c < cfg.k; ++c) {
        if (train_by_cluster[c].empty() || val_by_cluster[c].empty())
            throw PipelineError("retrain_stage: cluster " + std::to_string(c) +
                                " has fewer samples than one batch");

        RngStream init_rng = derive_stream(cfg.seed, "retrain-init-" + std::to_string(c));
        auto model = make_recommender("cluster-" + std::to_string(c), vocab_sizes_of(state.schema),
                                      state.cluster_specs[c].dims_per_field, cfg.mlp_hidden1,
                                      cfg.mlp_hidden2, cfg.lr, cfg.weight_decay, init_rng);

        RngStream shuffle_rng = derive_stream(cfg.seed, "retrain-shuffle-" + std::to_string(c));
        const auto& ctrain = train_by_cluster[c];
        const auto& cval = val_by_cluster[c];
        const auto cval_labels = labels_of(cval);

        double best_score = -std::numeric_limits<double>::infinity();
        std::size_t stale = 0;
        auto best_model = model;

        for (std::size_t epoch = 0; epoch < cfg.max_retrain_epochs; ++epoch) {
            const auto order = shuffled_indices(ctrain.size(), shuffle_rng);
            double loss_sum = 0.0;
            std::size_t n_batches = 0;
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t end = std::min(order.size(), start + cfg.batch_size);
                std::vector<EncodedSample> batch;
                batch.reserve(end - start);
                for (std::size_t i = start; i < end; ++i) batch.push_back(ctrain[order[i]]);
                loss_sum += train_step(model, batch, {});
                ++n_batches;
            }

            std::vector<double> scores;
            scores.reserve(cval.size());
            for (const auto& s : cval) scores.push_back(forward(model, embed_lookup(s, model.tables)));
            bool used_auc = false;
            const double score = validation_score(scores, cval_labels, used_auc);
            log_event(state, {{"event", "retrain-eval"},
                              {"cluster", c},
                              {"epoch", epoch + 1},
                              {"train_loss", loss_sum / std::max<std::size_t>(1, n_batches)},
                              {used_auc ? "val_auc" : "val_neg_logloss", score}});

            if (score > best_score + 1e-12) {
                best_score = score;
                best_model = model;
                stale = 0;
            } else if (++stale >= cfg.patience) {
                break;
            }
        }
        state.cluster_models.push_back(std::move(best_model));
    }
    state.stage = Stage::retrained;
}

double predict(const PipelineState& state, const EncodedSample& sample) {
    if (state.stage != Stage::retrained)
        throw PipelineError("predict: requires a retrained pipeline, got stage " +
                            std::string(stage_name(state.stage)));
    const auto rep = masked_representation(state, sample);
    const std::size_t c = kmeans_assign(rep, state.kmeans);
    const auto& model = state.cluster_models[c];
    return forward(model, embed_lookup(sample, model.tables));
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

MetricsReport evaluate(const PipelineState& state, const std::vector<EncodedSample>& test) {
    if (state.stage < Stage::searched)
        throw PipelineError("evaluate: requires at least a searched pipeline, got stage " +
                            std::string(stage_name(state.stage)));
    if (test.empty()) throw DataError("evaluate: empty test set");

    MetricsReport report;
    report.n_samples = test.size();
    for (const auto& f : state.schema.fields) report.field_names.push_back(f.name);

    std::vector<double> scores;
    scores.reserve(test.size());
    if (state.stage == Stage::retrained) {
        report.cluster_sizes.assign(state.config.k, 0);
        for (const auto& s : test) {
            const auto rep = masked_representation(state, s);
            const std::size_t c = kmeans_assign(rep, state.kmeans);
            report.cluster_sizes[c] += 1;
            const auto& model = state.cluster_models[c];
            scores.push_back(forward(model, embed_lookup(s, model.tables)));
        }
    } else {
        for (const auto& s : test)
            scores.push_back(forward(state.base, masked_representation(state, s)));
    }

    const auto labels = labels_of(test);
    report.logloss = logloss(scores, labels);
    try {
        report.auc = auc(scores, labels);
        report.has_auc = true;
    } catch (const MetricError&) {
        report.warning = "auc omitted: test labels are single-class";
    }

    for (const auto& spec : state.cluster_specs) report.dims_per_cluster.push_back(spec.dims_per_field);
    return report;
}

std::string MetricsReport::to_json() const {
    json j;
    j["n_samples"] = n_samples;
    if (has_auc) j["auc"] = auc;
    j["logloss"] = logloss;
    if (!warning.empty()) j["warning"] = warning;
    if (!cluster_sizes.empty()) j["cluster_sizes"] = cluster_sizes;
    if (!dims_per_cluster.empty()) {
        j["fields"] = field_names;
        j["dims_per_cluster"] = dims_per_cluster;
    }
    return j.dump(2);
}

std::string MetricsReport::to_text() const {
    std::ostringstream out;
    out << "n_samples = " << n_samples << "\n";
    if (has_auc) out << "auc = " << std::setprecision(17) << auc << "\n";
    out << "logloss = " << std::setprecision(17) << logloss << "\n";
    if (!warning.empty()) out << "warning = " << warning << "\n";
    for (std::size_t c = 0; c < cluster_sizes.size(); ++c)
        out << "cluster_" << c << "_size = " << cluster_sizes[c] << "\n";
    for (std::size_t c = 0; c < dims_per_cluster.size(); ++c) {
        out << "cluster_" << c << "_dims =";
        for (auto d : dims_per_cluster[c]) out << " " << d;
        out << "\n";
    }
    return out.str();
}

std::string MetricsReport::dims_csv() const {
    std::ostringstream out;
    out << "field";
    for (std::size_t c = 0; c < dims_per_cluster.size(); ++c) out << ",cluster_" << c;
    out << "\n";
    for (std::size_t f = 0; f < field_names.size(); ++f) {
        out << field_names[f];
        for (const auto& dims : dims_per_cluster) out << "," << dims[f];
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

IngestedData ingest_csv(const std::string& data_path, const std::string& schema_path,
                        const PipelineConfig& cfg) {
    IngestedData out;
    out.schema = load_schema(schema_path);
    out.data_hash = file_hash(data_path);

    const RawTable table = read_csv(data_path);
    const auto idx = split_indices(table.rows.size(), cfg.seed);

    // Vocabulary from the training rows only; test-only tokens fall into
    // "others" at encode time.
    out.vocab = build_vocab(table, out.schema, cfg.min_freq, &idx.train);

    const auto cols = resolve_field_columns(table, out.schema);
    const auto label_col = resolve_label_column(table, out.schema);
    auto encode_rows = [&](const std::vector<std::size_t>& rows, std::vector<EncodedSample>& dst) {
        dst.reserve(rows.size());
        for (auto r : rows) dst.push_back(encode(table, r, out.schema, out.vocab, cols, label_col));
    };
    encode_rows(idx.train, out.split.train);
    encode_rows(idx.val, out.split.val);
    encode_rows(idx.test, out.split.test);
    return out;
}

} // namespace ihas
