#include "ihas/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ihas/errors.hpp"

namespace ihas {

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double clamp_prob(double p) { return std::min(1.0 - 1e-12, std::max(1e-12, p)); }

} // namespace

std::size_t RecommenderModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tables.tables) n += t.size();
    n += mlp.w1.size() + mlp.b1.size();
    n += mlp.w2.size() + mlp.b2.size();
    n += mlp.w3.size() + mlp.b3.size();
    return n;
}

RecommenderModel make_recommender(const std::string& tag,
                                  const std::vector<std::size_t>& vocab_sizes,
                                  const std::vector<std::size_t>& dims,
                                  std::size_t hidden1, std::size_t hidden2,
                                  double lr, double weight_decay,
                                  RngStream& rng) {
    require_shape(vocab_sizes.size() == dims.size(), "make_recommender: vocab/dims size mismatch");

    RecommenderModel m;
    m.tag = tag;
    m.tables.dims = dims;
    for (std::size_t f = 0; f < dims.size(); ++f) {
        DenseMatrix t(dims[f], vocab_sizes[f]);
        init_embedding(t, rng);
        m.tables.tables.push_back(std::move(t));
        m.table_opt.emplace_back(tag + ".table." + std::to_string(f),
                                 dims[f] * vocab_sizes[f], lr, weight_decay);
    }

    const std::size_t in = m.tables.total_dim();
    m.mlp.w1 = DenseMatrix(hidden1, in);
    m.mlp.w2 = DenseMatrix(hidden2, hidden1);
    m.mlp.w3 = DenseMatrix(1, hidden2);
    init_fc(m.mlp.w1, m.mlp.b1, rng);
    init_fc(m.mlp.w2, m.mlp.b2, rng);
    init_fc(m.mlp.w3, m.mlp.b3, rng);

    m.w1_opt = AdamState(tag + ".w1", m.mlp.w1.size(), lr, weight_decay);
    m.b1_opt = AdamState(tag + ".b1", m.mlp.b1.size(), lr, weight_decay);
    m.w2_opt = AdamState(tag + ".w2", m.mlp.w2.size(), lr, weight_decay);
    m.b2_opt = AdamState(tag + ".b2", m.mlp.b2.size(), lr, weight_decay);
    m.w3_opt = AdamState(tag + ".w3", m.mlp.w3.size(), lr, weight_decay);
    m.b3_opt = AdamState(tag + ".b3", m.mlp.b3.size(), lr, weight_decay);
    return m;
}

std::vector<double> embed_lookup(const EncodedSample& sample, const EmbeddingTable& tables) {
    require_shape(sample.field_indices.size() == tables.n_fields(),
                  "embed_lookup: sample has " + std::to_string(sample.field_indices.size()) +
                  " fields, tables have " + std::to_string(tables.n_fields()));

    std::vector<double> out;
    out.reserve(tables.total_dim());
    for (std::size_t f = 0; f < tables.n_fields(); ++f) {
        const auto& t = tables.tables[f];
        if (t.rows == 0) continue;
        const std::uint32_t idx = sample.field_indices[f];
        if (idx >= t.cols)
            throw DataError("embed_lookup: category index " + std::to_string(idx) +
                            " out of range for field " + std::to_string(f));
        for (std::size_t j = 0; j < t.rows; ++j) out.push_back(t.at(j, idx));
    }
    return out;
}

std::vector<double> apply_mask(std::span<const double> embedding, std::span<const std::uint8_t> mask) {
    require_shape(embedding.size() == mask.size(), "apply_mask: length mismatch");
    std::vector<double> out(embedding.size());
    for (std::size_t j = 0; j < embedding.size(); ++j)
        out[j] = mask[j] ? embedding[j] : 0.0;
    return out;
}

ForwardCache forward_cached(const RecommenderModel& model, std::vector<double> masked_embedding) {
    ForwardCache c;
    c.input = std::move(masked_embedding);
    c.a1 = affine_forward(c.input, model.mlp.w1, model.mlp.b1);
    c.h1 = c.a1;
    for (auto& v : c.h1) v = std::max(0.0, v);
    c.a2 = affine_forward(c.h1, model.mlp.w2, model.mlp.b2);
    c.h2 = c.a2;
    for (auto& v : c.h2) v = std::max(0.0, v);
    const auto out = affine_forward(c.h2, model.mlp.w3, model.mlp.b3);
    c.logit = out[0];
    c.prob = clamp_prob(sigmoid(c.logit));
    return c;
}

double forward(const RecommenderModel& model, std::vector<double> masked_embedding) {
    return forward_cached(model, std::move(masked_embedding)).prob;
}

double bce_loss(double predicted, std::uint8_t label) {
    const double p = clamp_prob(predicted);
    return label ? -std::log(p) : -std::log(1.0 - p);
}

std::vector<double> backward_to_input(const RecommenderModel& model, const ForwardCache& cache,
                                      double dlogit) {
    std::vector<double> d3(1, dlogit);
    // head
    std::vector<double> dh2(model.mlp.w3.cols, 0.0);
    for (std::size_t c = 0; c < model.mlp.w3.cols; ++c) dh2[c] = model.mlp.w3.at(0, c) * dlogit;
    // relu 2
    for (std::size_t i = 0; i < dh2.size(); ++i)
        if (cache.a2[i] <= 0.0) dh2[i] = 0.0;
    // layer 2
    std::vector<double> dh1(model.mlp.w2.cols, 0.0);
    for (std::size_t r = 0; r < model.mlp.w2.rows; ++r)
        for (std::size_t c = 0; c < model.mlp.w2.cols; ++c)
            dh1[c] += model.mlp.w2.at(r, c) * dh2[r];
    // relu 1
    for (std::size_t i = 0; i < dh1.size(); ++i)
        if (cache.a1[i] <= 0.0) dh1[i] = 0.0;
    // layer 1
    std::vector<double> din(model.mlp.w1.cols, 0.0);
    for (std::size_t r = 0; r < model.mlp.w1.rows; ++r)
        for (std::size_t c = 0; c < model.mlp.w1.cols; ++c)
            din[c] += model.mlp.w1.at(r, c) * dh1[r];
    return din;
}

namespace {

struct MlpGradAcc {
    DenseMatrix gw1, gw2, gw3;
    std::vector<double> gb1, gb2, gb3;

    explicit MlpGradAcc(const MlpParams& mlp)
        : gw1(mlp.w1.rows, mlp.w1.cols),
          gw2(mlp.w2.rows, mlp.w2.cols),
          gw3(mlp.w3.rows, mlp.w3.cols),
          gb1(mlp.b1.size(), 0.0),
          gb2(mlp.b2.size(), 0.0),
          gb3(mlp.b3.size(), 0.0) {}
};

// Backprop one sample into the accumulators; returns grad w.r.t. the input.
std::vector<double> mlp_backward_acc(const RecommenderModel& model, const ForwardCache& cache,
                                     double dlogit, MlpGradAcc& acc) {
    std::vector<double> dout(1, dlogit);
    std::vector<double> dh2;
    affine_backward_acc(dout, cache.h2, model.mlp.w3, acc.gw3, acc.gb3, dh2);
    for (std::size_t i = 0; i < dh2.size(); ++i)
        if (cache.a2[i] <= 0.0) dh2[i] = 0.0;

    std::vector<double> dh1;
    affine_backward_acc(dh2, cache.h1, model.mlp.w2, acc.gw2, acc.gb2, dh1);
    for (std::size_t i = 0; i < dh1.size(); ++i)
        if (cache.a1[i] <= 0.0) dh1[i] = 0.0;

    std::vector<double> din;
    affine_backward_acc(dh1, cache.input, model.mlp.w1, acc.gw1, acc.gb1, din);
    return din;
}

} // namespace

BatchGrads compute_batch_gradients(const RecommenderModel& model,
                                   std::span<const EncodedSample> batch,
                                   std::span<const MaskBits> masks) {
    if (batch.empty()) throw DataError("train_step: empty batch");
    if (!masks.empty())
        require_shape(masks.size() == batch.size(), "train_step: one mask per sample required");

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    MlpGradAcc acc(model.mlp);
    BatchGrads out;
    out.embedding.resize(model.tables.n_fields());

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& sample = batch[i];
        auto embedding = embed_lookup(sample, model.tables);
        std::vector<double> masked = masks.empty() ? embedding : apply_mask(embedding, masks[i]);

        auto cache = forward_cached(model, std::move(masked));
        out.loss += bce_loss(cache.prob, sample.label);

        const double dlogit = (cache.prob - sample.label) * inv_b;
        auto din = mlp_backward_acc(model, cache, dlogit, acc);

        // Scatter into touched embedding columns; a closed gate contributes
        // exactly zero gradient and a fully closed field is not touched.
        std::size_t offset = 0;
        for (std::size_t f = 0; f < model.tables.n_fields(); ++f) {
            const std::size_t d = model.tables.dims[f];
            if (d == 0) continue;
            bool any_open = masks.empty();
            for (std::size_t j = 0; !any_open && j < d; ++j) any_open = masks[i][offset + j];
            if (any_open) {
                auto [it, fresh] = out.embedding[f].try_emplace(sample.field_indices[f],
                                                                std::vector<double>(d, 0.0));
                for (std::size_t j = 0; j < d; ++j) {
                    const double g = masks.empty() ? din[offset + j]
                                                   : (masks[i][offset + j] ? din[offset + j] : 0.0);
                    it->second[j] += g;
                }
            }
            offset += d;
        }
    }
    out.loss *= inv_b;
    out.gw1 = std::move(acc.gw1);
    out.gw2 = std::move(acc.gw2);
    out.gw3 = std::move(acc.gw3);
    out.gb1 = std::move(acc.gb1);
    out.gb2 = std::move(acc.gb2);
    out.gb3 = std::move(acc.gb3);
    return out;
}

double train_step(RecommenderModel& model,
                  std::span<const EncodedSample> batch,
                  std::span<const MaskBits> masks) {
    auto grads = compute_batch_gradients(model, batch, masks);
    if (!std::isfinite(grads.loss))
        throw NumericError("train_step: non-finite loss in model '" + model.tag + "'");

    adam_step(std::span<double>(model.mlp.w1.values), grads.gw1.values, model.w1_opt);
    adam_step(std::span<double>(model.mlp.b1), grads.gb1, model.b1_opt);
    adam_step(std::span<double>(model.mlp.w2.values), grads.gw2.values, model.w2_opt);
    adam_step(std::span<double>(model.mlp.b2), grads.gb2, model.b2_opt);
    adam_step(std::span<double>(model.mlp.w3.values), grads.gw3.values, model.w3_opt);
    adam_step(std::span<double>(model.mlp.b3), grads.gb3, model.b3_opt);

    for (std::size_t f = 0; f < model.tables.n_fields(); ++f) {
        if (grads.embedding[f].empty()) continue;
        std::vector<std::size_t> touched;
        std::vector<std::vector<double>> cols;
        touched.reserve(grads.embedding[f].size());
        for (auto& [cat, g] : grads.embedding[f]) {
            touched.push_back(cat);
            cols.push_back(std::move(g));
        }
        adam_step_columns(model.tables.tables[f], touched, cols, model.table_opt[f]);
    }
    return grads.loss;
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    require_shape(scores.size() == labels.size(), "auc: scores/labels length mismatch");
    std::size_t n_pos = 0;
    for (auto y : labels) n_pos += y ? 1 : 0;
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw MetricError("auc undefined: labels contain a single class");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks over tie groups
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t t = i; t <= j; ++t)
            if (labels[order[t]]) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double logloss(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    require_shape(scores.size() == labels.size(), "logloss: scores/labels length mismatch");
    if (scores.empty()) throw MetricError("logloss undefined on empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) s += bce_loss(scores[i], labels[i]);
    return s / static_cast<double>(scores.size());
}

} // namespace ihas
