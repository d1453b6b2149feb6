#include "ihas/numeric.hpp"

#include <cmath>

namespace ihas {

std::vector<double> affine_forward(std::span<const double> input,
                                   const DenseMatrix& weights,
                                   std::span<const double> bias) {
    require_shape(input.size() == weights.cols, "affine_forward: input length " +
                  std::to_string(input.size()) + " != weight cols " + std::to_string(weights.cols));
    require_shape(bias.size() == weights.rows, "affine_forward: bias length " +
                  std::to_string(bias.size()) + " != weight rows " + std::to_string(weights.rows));

    std::vector<double> out(weights.rows);
    const double* w = weights.values.data();
    for (std::size_t r = 0; r < weights.rows; ++r) {
        double acc = bias[r];
        const double* row = w + r * weights.cols;
        for (std::size_t c = 0; c < weights.cols; ++c) acc += row[c] * input[c];
        out[r] = acc;
    }
    return out;
}

void affine_backward_acc(std::span<const double> upstream_grad,
                         std::span<const double> cached_input,
                         const DenseMatrix& weights,
                         DenseMatrix& grad_weights,
                         std::vector<double>& grad_bias,
                         std::vector<double>& grad_input) {
    require_shape(upstream_grad.size() == weights.rows, "affine_backward: upstream length mismatch");
    require_shape(cached_input.size() == weights.cols, "affine_backward: cached input length mismatch");
    require_shape(grad_weights.rows == weights.rows && grad_weights.cols == weights.cols,
                  "affine_backward: grad_weights shape mismatch");

    grad_bias.resize(weights.rows, 0.0);
    grad_input.assign(weights.cols, 0.0);

    for (std::size_t r = 0; r < weights.rows; ++r) {
        const double g = upstream_grad[r];
        grad_bias[r] += g;
        double* gw_row = grad_weights.values.data() + r * weights.cols;
        const double* w_row = weights.values.data() + r * weights.cols;
        for (std::size_t c = 0; c < weights.cols; ++c) {
            gw_row[c] += g * cached_input[c];
            grad_input[c] += w_row[c] * g;
        }
    }
}

AffineGrads affine_backward(std::span<const double> upstream_grad,
                            std::span<const double> cached_input,
                            const DenseMatrix& weights) {
    AffineGrads grads;
    grads.grad_weights = DenseMatrix(weights.rows, weights.cols);
    grads.grad_bias.assign(weights.rows, 0.0);
    affine_backward_acc(upstream_grad, cached_input, weights,
                        grads.grad_weights, grads.grad_bias, grads.grad_input);
    return grads;
}

namespace {

void check_grad_finite(std::span<const double> grad, const AdamState& state) {
    for (double g : grad) {
        if (!std::isfinite(g)) {
            throw NumericError("adam_step: non-finite gradient for parameter '" + state.name + "'");
        }
    }
}

inline double adam_update(double g, double& m, double& v, double bc1, double bc2,
                          const AdamState& s) {
    m = s.beta1 * m + (1.0 - s.beta1) * g;
    v = s.beta2 * v + (1.0 - s.beta2) * g * g;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    return -s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
}

} // namespace

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state) {
    require_shape(param.size() == grad.size(), "adam_step: param/grad size mismatch for '" + state.name + "'");
    require_shape(param.size() == state.first_moment.size(),
                  "adam_step: moment size mismatch for '" + state.name + "'");
    check_grad_finite(grad, state);

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i] + state.weight_decay * param[i];
        param[i] += adam_update(g, state.first_moment[i], state.second_moment[i], bc1, bc2, state);
    }
}

void adam_step_columns(DenseMatrix& param,
                       const std::vector<std::size_t>& touched,
                       const std::vector<std::vector<double>>& grad_columns,
                       AdamState& state) {
    require_shape(param.size() == state.first_moment.size(),
                  "adam_step_columns: moment size mismatch for '" + state.name + "'");
    require_shape(touched.size() == grad_columns.size(), "adam_step_columns: touched/grad mismatch");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    for (std::size_t t = 0; t < touched.size(); ++t) {
        const std::size_t col = touched[t];
        require_shape(col < param.cols, "adam_step_columns: column out of range for '" + state.name + "'");
        require_shape(grad_columns[t].size() == param.rows, "adam_step_columns: column grad length mismatch");
        check_grad_finite(grad_columns[t], state);
        for (std::size_t r = 0; r < param.rows; ++r) {
            const std::size_t idx = r * param.cols + col;
            const double g = grad_columns[t][r] + state.weight_decay * param.values[idx];
            param.values[idx] += adam_update(g, state.first_moment[idx], state.second_moment[idx],
                                             bc1, bc2, state);
        }
    }
}

std::vector<double> sample_gumbel(RngStream& rng, std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = rng.gumbel();
    return out;
}

double finite_diff_check(const std::function<double(const std::vector<double>&)>& loss_fn,
                         std::vector<double> param,
                         std::span<const double> analytic_grad,
                         double h) {
    double worst = 0.0;
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + h;
        const double up = loss_fn(param);
        param[i] = saved - h;
        const double down = loss_fn(param);
        param[i] = saved;
        const double central = (up - down) / (2.0 * h);
        const double err = std::abs(central - analytic_grad[i]) / (std::abs(analytic_grad[i]) + 1e-8);
        if (err > worst) worst = err;
    }
    return worst;
}

void init_fc(DenseMatrix& weights, std::vector<double>& bias, RngStream& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(weights.cols));
    for (auto& v : weights.values) v = rng.uniform(-bound, bound);
    bias.assign(weights.rows, 0.0);
    for (auto& v : bias) v = rng.uniform(-bound, bound);
}

void init_embedding(DenseMatrix& table, RngStream& rng) {
    for (auto& v : table.values) v = rng.normal(0.0, 0.01);
}

} // namespace ihas
