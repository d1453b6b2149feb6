#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ihas {

// Mini-batch K-means over masked embedding representations (Sculley-style
// per-centroid 1/count learning rates).
struct KMeansModel {
    std::size_t k = 0;
    std::vector<std::vector<double>> centroids; // k vectors of length N*
    std::vector<std::uint64_t> counts;          // per-centroid update counts

    std::size_t dim() const { return centroids.empty() ? 0 : centroids[0].size(); }
};

// Nearest centroid by squared Euclidean distance; ties go to the lowest id.
std::size_t kmeans_assign(std::span<const double> x, const KMeansModel& model);

// Assign the whole batch against the current centroids, then fold each point
// in with learning rate 1/count (count incremented first).
void kmeans_minibatch_update(const std::vector<std::vector<double>>& batch, KMeansModel& model);

struct KMeansFitOptions {
    std::size_t batch_size = 64;
    std::size_t max_epochs = 100;
    double tol = 1e-4; // max centroid displacement per epoch
};

// Seeded: centroids start from k distinct samples; epochs run over a seeded
// shuffle until displacement falls below tol. Dead centroids are reseeded to
// the farthest point seen in the epoch.
KMeansModel kmeans_fit(const std::vector<std::vector<double>>& points,
                       std::size_t k,
                       std::uint64_t seed,
                       const KMeansFitOptions& opts = {});

// Full-batch within-cluster sum of squared distances over an evaluation set.
double kmeans_sse(const std::vector<std::vector<double>>& points, const KMeansModel& model);

// Agreement between two labelings, corrected for chance.
double adjusted_rand_index(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

} // namespace ihas
