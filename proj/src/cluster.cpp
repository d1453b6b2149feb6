#include "ihas/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ihas/errors.hpp"
#include "ihas/matrix.hpp"
#include "ihas/rng.hpp"

namespace ihas {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

} // namespace

std::size_t kmeans_assign(std::span<const double> x, const KMeansModel& model) {
    if (model.k == 0) throw ClusteringError("kmeans_assign: model has no centroids");
    require_shape(x.size() == model.dim(), "kmeans_assign: point dimension mismatch");

    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < model.k; ++c) {
        const double d = sq_dist(x, model.centroids[c]);
        if (d < best_d) { // strict: ties keep the lowest id
            best_d = d;
            best = c;
        }
    }
    return best;
}

void kmeans_minibatch_update(const std::vector<std::vector<double>>& batch, KMeansModel& model) {
    if (batch.empty()) throw ClusteringError("kmeans_minibatch_update: empty batch");

    std::vector<std::size_t> assignment(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) assignment[i] = kmeans_assign(batch[i], model);

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t c = assignment[i];
        model.counts[c] += 1;
        const double lr = 1.0 / static_cast<double>(model.counts[c]);
        auto& centroid = model.centroids[c];
        for (std::size_t j = 0; j < centroid.size(); ++j)
            centroid[j] += lr * (batch[i][j] - centroid[j]);
    }
}

KMeansModel kmeans_fit(const std::vector<std::vector<double>>& points,
                       std::size_t k,
                       std::uint64_t seed,
                       const KMeansFitOptions& opts) {
    if (k < 1) throw ClusteringError("kmeans_fit: k must be >= 1");
    if (points.empty()) throw ClusteringError("kmeans_fit: no points");

    RngStream rng = derive_stream(seed, "kmeans");

    std::vector<std::size_t> order(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[rng.next_index(i + 1)]);

    // init from the first k distinct vectors of the shuffled stream
    KMeansModel model;
    model.k = k;
    for (std::size_t idx : order) {
        const auto& cand = points[idx];
        bool dup = false;
        for (const auto& c : model.centroids)
            if (c == cand) { dup = true; break; }
        if (!dup) model.centroids.push_back(cand);
        if (model.centroids.size() == k) break;
    }
    if (model.centroids.size() < k)
        throw ClusteringError("kmeans_fit: fewer than k distinct points (k=" + std::to_string(k) + ")");
    model.counts.assign(k, 1);

    for (std::size_t epoch = 0; epoch < opts.max_epochs; ++epoch) {
        const auto before = model.centroids;
        std::vector<std::uint64_t> epoch_hits(k, 0);

        // farthest point of the epoch, for dead-centroid rescue
        double far_dist = -1.0;
        std::size_t far_idx = 0;

        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::size_t end = std::min(order.size(), start + opts.batch_size);
            std::vector<std::vector<double>> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(points[order[i]]);

            for (std::size_t i = start; i < end; ++i) {
                const std::size_t a = kmeans_assign(points[order[i]], model);
                epoch_hits[a] += 1;
                const double d = sq_dist(points[order[i]], model.centroids[a]);
                if (d > far_dist) {
                    far_dist = d;
                    far_idx = order[i];
                }
            }
            kmeans_minibatch_update(batch, model);
        }

        bool rescued = false;
        for (std::size_t c = 0; c < k; ++c) {
            if (epoch_hits[c] == 0) {
                model.centroids[c] = points[far_idx];
                model.counts[c] = 1;
                rescued = true;
            }
        }

        double max_disp = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            max_disp = std::max(max_disp, std::sqrt(sq_dist(model.centroids[c], before[c])));
        if (!rescued && max_disp < opts.tol) break;

        // reshuffle between epochs
        for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[rng.next_index(i + 1)]);
    }
    return model;
}

double kmeans_sse(const std::vector<std::vector<double>>& points, const KMeansModel& model) {
    double s = 0.0;
    for (const auto& p : points) s += sq_dist(p, model.centroids[kmeans_assign(p, model)]);
    return s;
}

double adjusted_rand_index(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    require_shape(a.size() == b.size(), "adjusted_rand_index: size mismatch");
    const std::size_t n = a.size();
    if (n < 2) throw MetricError("adjusted_rand_index: need at least 2 items");

    const auto max_label = [](std::span<const std::uint32_t> v) {
        std::uint32_t m = 0;
        for (auto x : v) m = std::max(m, x);
        return static_cast<std::size_t>(m) + 1;
    };
    const std::size_t ka = max_label(a), kb = max_label(b);

    std::vector<std::vector<std::uint64_t>> table(ka, std::vector<std::uint64_t>(kb, 0));
    std::vector<std::uint64_t> row(ka, 0), col(kb, 0);
    for (std::size_t i = 0; i < n; ++i) {
        table[a[i]][b[i]] += 1;
        row[a[i]] += 1;
        col[b[i]] += 1;
    }

    auto choose2 = [](std::uint64_t m) { return 0.5 * static_cast<double>(m) * static_cast<double>(m - 1); };

    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (std::size_t i = 0; i < ka; ++i)
        for (std::size_t j = 0; j < kb; ++j) sum_ij += choose2(table[i][j]);
    for (auto m : row) sum_a += choose2(m);
    for (auto m : col) sum_b += choose2(m);

    const double total = choose2(static_cast<std::uint64_t>(n));
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 0.0; // both labelings constant
    return (sum_ij - expected) / (max_index - expected);
}

} // namespace ihas
