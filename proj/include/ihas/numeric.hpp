#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ihas/matrix.hpp"
#include "ihas/rng.hpp"

namespace ihas {

// ---------------------------------------------------------------------------
// Affine layer primitives. Explicit forward/backward pairs; no autodiff.
// ---------------------------------------------------------------------------

// output[r] = sum_c weights[r,c] * input[c] + bias[r]
std::vector<double> affine_forward(std::span<const double> input,
                                   const DenseMatrix& weights,
                                   std::span<const double> bias);

struct AffineGrads {
    DenseMatrix grad_weights;
    std::vector<double> grad_bias;
    std::vector<double> grad_input;
};

AffineGrads affine_backward(std::span<const double> upstream_grad,
                            std::span<const double> cached_input,
                            const DenseMatrix& weights);

// Accumulating variant used by the batched training loops.
void affine_backward_acc(std::span<const double> upstream_grad,
                         std::span<const double> cached_input,
                         const DenseMatrix& weights,
                         DenseMatrix& grad_weights,
                         std::vector<double>& grad_bias,
                         std::vector<double>& grad_input);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    std::string name;   // reported in numeric errors
    std::uint64_t step = 0;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    AdamState() = default;
    AdamState(std::string param_name, std::size_t n, double lr_, double weight_decay_)
        : name(std::move(param_name)),
          first_moment(n, 0.0),
          second_moment(n, 0.0),
          lr(lr_),
          weight_decay(weight_decay_) {}
};

// Classic Adam with the L2 term folded into the gradient before the moment
// updates. Throws NumericError (naming the parameter) on non-finite grads.
void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state);

// Sparse variant for embedding tables: advances state.step once, then updates
// only the listed columns of a rows x cols parameter laid out row-major.
// grad_columns[i] holds the gradient for column touched[i] (length = rows).
void adam_step_columns(DenseMatrix& param,
                       const std::vector<std::size_t>& touched,
                       const std::vector<std::vector<double>>& grad_columns,
                       AdamState& state);

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

std::vector<double> sample_gumbel(RngStream& rng, std::size_t n);

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

// Max over coordinates of |central difference - analytic| / (|analytic| + 1e-8).
double finite_diff_check(const std::function<double(const std::vector<double>&)>& loss_fn,
                         std::vector<double> param,
                         std::span<const double> analytic_grad,
                         double h);

// ---------------------------------------------------------------------------
// Initializers (recorded in checkpoints via the seed)
// ---------------------------------------------------------------------------

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for FC and gate weights.
void init_fc(DenseMatrix& weights, std::vector<double>& bias, RngStream& rng);

// Normal(0, 0.01) for embedding tables.
void init_embedding(DenseMatrix& table, RngStream& rng);

} // namespace ihas
