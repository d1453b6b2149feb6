#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ihas/numeric.hpp"
#include "ihas/recommender.hpp"

namespace ihas {

// ---------------------------------------------------------------------------
// Bernoulli gates: project an embedding representation onto per-dimension
// open probabilities, then select dimensions stochastically (searching) or
// deterministically (clustering / inference).
// ---------------------------------------------------------------------------

struct GateParams {
    DenseMatrix projection;   // N* x N*
    std::vector<double> bias; // N*
    AdamState proj_opt, bias_opt;

    std::size_t dim() const { return bias.size(); }
};

GateParams make_gates(std::size_t n_star, double lr, double weight_decay, RngStream& rng);

// p = sigmoid(projection * E + bias), clamped to [1e-6, 1 - 1e-6].
using GateProbs = std::vector<double>;

GateProbs gate_probs(std::span<const double> embedding, const GateParams& params);

// One stochastic draw: hard bits from the Gumbel-Max argmax in the forward
// direction, plus the straight-through quantities needed to push gradients
// back through the temperature-tau softmax relaxation at the same noise.
struct StochasticMask {
    MaskBits bits;                 // hard argmax bit per dimension
    std::vector<double> soft;      // first softmax component at the same noise
    std::vector<double> dsoft_dp;  // d soft / d p at the same noise
};

StochasticMask stochastic_mask(const GateProbs& probs, double tau, RngStream& rng);

// Sparsity + polarization term: sum_j lambda * p_j - |p_j - mean(p)|.
// The gradient differentiates through the mean; subgradient 0 at kinks.
struct PolarizationResult {
    double value = 0.0;
    std::vector<double> grad;
};

PolarizationResult polarization_reg(const GateProbs& probs, double lambda);

// First histogram bin strictly below its nearest nonempty neighbor on each
// side, if any (equal-width bins over [0,1], scanned left to right).
std::optional<std::size_t> histogram_saddle(const GateProbs& probs, std::size_t bins = 100);

// Threshold = the saddle bin's lower edge; falls back to mean(p) when the
// histogram has no saddle.
double find_threshold(const GateProbs& probs, std::size_t bins = 100);

// Open exactly the dimensions whose probability strictly exceeds the
// searched threshold. Pure function of p.
MaskBits deterministic_mask(const GateProbs& probs, std::size_t bins = 100);

// One bi-level gate update on a validation batch: BCE through stochastic
// masks into the frozen base model plus the regularizer
//     lambda * sum(p) - polarization_weight * sum(|p - mean(p)|),
// stepping the gate parameters only. Returns the mean objective value.
// polarization_weight < 0 selects the default (equal to lambda, so the
// sparsity and spreading pressures stay on the scale of the task gradients);
// 0 removes the distance-from-mean term entirely (the ablation variant).
double gate_update_step(GateParams& gates,
                        std::span<const EncodedSample> val_batch,
                        const RecommenderModel& frozen_model,
                        double tau, double lambda,
                        RngStream& rng,
                        double polarization_weight = -1.0);

} // namespace ihas
