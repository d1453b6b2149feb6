#include "ihas/gates.hpp"
#include <algorithm>

#include <cmath>

#include "ihas/errors.hpp"

namespace ihas {

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

constexpr double kProbFloor = 1e-6;
constexpr double kProbCeil = 1.0 - 1e-6;

} // namespace

GateParams make_gates(std::size_t n_star, double lr, double weight_decay, RngStream& rng) {
    GateParams g;
    g.projection = DenseMatrix(n_star, n_star);
    init_fc(g.projection, g.bias, rng);
    // Start with every gate nearly open (p ~ 0.9). The search then prunes
    // from the pretrained all-open operating point instead of dropping the
    // model into heavy random masking it was never trained under.
    for (auto& b : g.bias) b = 2.2;
    g.proj_opt = AdamState("gates.projection", g.projection.size(), lr, weight_decay);
    g.bias_opt = AdamState("gates.bias", g.bias.size(), lr, weight_decay);
    return g;
}

GateProbs gate_probs(std::span<const double> embedding, const GateParams& params) {
    require_shape(embedding.size() == params.projection.cols,
                  "gate_probs: embedding length " + std::to_string(embedding.size()) +
                  " != gate dimension " + std::to_string(params.projection.cols));
    auto pre = affine_forward(embedding, params.projection, params.bias);
    GateProbs p(pre.size());
    for (std::size_t j = 0; j < pre.size(); ++j)
        p[j] = std::min(kProbCeil, std::max(kProbFloor, sigmoid(pre[j])));
    return p;
}

StochasticMask stochastic_mask(const GateProbs& probs, double tau, RngStream& rng) {
    if (!(tau > 0.0)) throw ConfigError("stochastic_mask: tau must be positive");

    StochasticMask m;
    const std::size_t n = probs.size();
    m.bits.resize(n);
    m.soft.resize(n);
    m.dsoft_dp.resize(n);

    for (std::size_t j = 0; j < n; ++j) {
        const double p = probs[j];
        const double g_open = rng.gumbel();
        const double g_closed = rng.gumbel();
        // argmax over [log p + G, log(1-p) + G'], expressed via the logit gap
        const double gap = std::log(p) - std::log(1.0 - p) + g_open - g_closed;
        m.bits[j] = gap > 0.0 ? 1 : 0;
        const double s = sigmoid(gap / tau);
        m.soft[j] = s;
        m.dsoft_dp[j] = s * (1.0 - s) / (tau * p * (1.0 - p));
    }
    return m;
}

PolarizationResult polarization_reg(const GateProbs& probs, double lambda) {
    if (lambda < 0.0) throw ConfigError("polarization_reg: lambda must be >= 0");
    const std::size_t n = probs.size();
    PolarizationResult r;
    r.grad.assign(n, 0.0);
    if (n == 0) return r;

    double mean = 0.0;
    for (double p : probs) mean += p;
    mean /= static_cast<double>(n);

    double sign_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double dev = probs[j] - mean;
        r.value += lambda * probs[j] - std::abs(dev);
        sign_sum += dev > 0.0 ? 1.0 : (dev < 0.0 ? -1.0 : 0.0);
    }
    const double mean_correction = sign_sum / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double dev = probs[j] - mean;
        const double sgn = dev > 0.0 ? 1.0 : (dev < 0.0 ? -1.0 : 0.0);
        r.grad[j] = lambda - sgn + mean_correction;
    }
    return r;
}

std::optional<std::size_t> histogram_saddle(const GateProbs& probs, std::size_t bins) {
    require_shape(probs.size() >= 2, "find_threshold: need at least 2 probabilities");
    if (bins < 2) throw ConfigError("find_threshold: need at least 2 bins");

    std::vector<std::size_t> counts(bins, 0);
    for (double p : probs) {
        auto b = static_cast<std::size_t>(p * static_cast<double>(bins));
        if (b >= bins) b = bins - 1;
        counts[b] += 1;
    }

    // nearest nonempty neighbor count on each side, -1 when there is none
    std::vector<long long> left(bins, -1), right(bins, -1);
    long long last = -1;
    for (std::size_t i = 0; i < bins; ++i) {
        left[i] = last;
        if (counts[i] > 0) last = static_cast<long long>(counts[i]);
    }
    last = -1;
    for (std::size_t i = bins; i-- > 0;) {
        right[i] = last;
        if (counts[i] > 0) last = static_cast<long long>(counts[i]);
    }

    for (std::size_t i = 0; i < bins; ++i) {
        const auto c = static_cast<long long>(counts[i]);
        if (left[i] > c && right[i] > c) return i;
    }
    return std::nullopt;
}

double find_threshold(const GateProbs& probs, std::size_t bins) {
    if (const auto saddle = histogram_saddle(probs, bins))
        return static_cast<double>(*saddle) / static_cast<double>(bins);

    // fallback: mean of p; a constant vector's mean is that constant exactly
    const auto [lo, hi] = std::minmax_element(probs.begin(), probs.end());
    if (*lo == *hi) return *lo;
    double mean = 0.0;
    for (double p : probs) mean += p;
    return mean / static_cast<double>(probs.size());
}

MaskBits deterministic_mask(const GateProbs& probs, std::size_t bins) {
    const double thr = find_threshold(probs, bins);
    MaskBits bits(probs.size());
    for (std::size_t j = 0; j < probs.size(); ++j) bits[j] = probs[j] > thr ? 1 : 0;
    return bits;
}

double gate_update_step(GateParams& gates,
                        std::span<const EncodedSample> val_batch,
                        const RecommenderModel& frozen_model,
                        double tau, double lambda,
                        RngStream& rng,
                        double polarization_weight) {
    if (val_batch.empty()) throw DataError("gate_update_step: empty validation batch");
    const double w_pol = polarization_weight < 0.0 ? lambda : polarization_weight;

    const std::size_t n_star = gates.dim();
    const double inv_b = 1.0 / static_cast<double>(val_batch.size());

    DenseMatrix grad_proj(n_star, n_star);
    std::vector<double> grad_bias(n_star, 0.0);
    double objective = 0.0;

    for (const auto& sample : val_batch) {
        const auto embedding = embed_lookup(sample, frozen_model.tables);
        const auto probs = gate_probs(embedding, gates);
        const auto mask = stochastic_mask(probs, tau, rng);

        // lambda * sum(p) - w_pol * sum(|p - mean|); polarization_reg with
        // lambda=0 supplies the pure distance-from-mean piece
        PolarizationResult reg;
        reg.grad.assign(probs.size(), lambda);
        for (double p : probs) reg.value += lambda * p;
        if (w_pol != 0.0) {
            const auto spread = polarization_reg(probs, 0.0);
            reg.value += w_pol * spread.value;
            for (std::size_t j = 0; j < probs.size(); ++j) reg.grad[j] += w_pol * spread.grad[j];
        }

        auto cache = forward_cached(frozen_model, apply_mask(embedding, mask.bits));
        objective += bce_loss(cache.prob, sample.label) + reg.value;

        const double dlogit = (cache.prob - sample.label) * inv_b;
        const auto dinput = backward_to_input(frozen_model, cache, dlogit);

        // straight-through: route the mask gradient through the soft path
        std::vector<double> dpre(n_star);
        for (std::size_t j = 0; j < n_star; ++j) {
            const double dmask = dinput[j] * embedding[j];
            const double dp = dmask * mask.dsoft_dp[j] + reg.grad[j] * inv_b;
            dpre[j] = dp * probs[j] * (1.0 - probs[j]);
        }
        for (std::size_t r = 0; r < n_star; ++r) {
            const double g = dpre[r];
            grad_bias[r] += g;
            if (g == 0.0) continue;
            double* row = grad_proj.values.data() + r * n_star;
            for (std::size_t c = 0; c < n_star; ++c) row[c] += g * embedding[c];
        }
    }

    objective *= inv_b;
    if (!std::isfinite(objective)) throw NumericError("gate_update_step: non-finite objective");

    adam_step(std::span<double>(gates.projection.values), grad_proj.values, gates.proj_opt);
    adam_step(std::span<double>(gates.bias), grad_bias, gates.bias_opt);
    return objective;
}

} // namespace ihas
