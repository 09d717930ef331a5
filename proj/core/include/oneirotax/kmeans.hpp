#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace oneirotax {

struct KMeansParams {
    std::size_t k = 20;
    std::size_t restarts = 100;
    std::size_t max_iterations = 300;
    double tolerance = 1e-6;  // max centroid shift (Euclidean) to stop
    std::uint64_t seed = 0;
    std::size_t threads = 0;  // 0: default_threads()
};

struct KMeansResult {
    std::vector<int> labels;
    std::vector<std::vector<double>> centroids;
    double inertia = 0.0;
    std::size_t iterations = 0;
    std::size_t best_restart = 0;
    /// Inertia after every assignment step of the winning restart.
    std::vector<double> inertia_history;
};

/// One Lloyd run from a k-means++ seeding drawn with `seed`. Empty clusters
/// are re-seeded at the point farthest from its centroid. Throws if the
/// objective ever increases between iterations.
KMeansResult kmeans_single(const std::vector<std::vector<double>>& points, std::size_t k, std::uint64_t seed,
                           std::size_t max_iterations, double tolerance);

/// Best of `restarts` seeded runs (lowest inertia, ties to the lower
/// restart index). Restarts run in parallel; the result does not depend
/// on the thread count.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, const KMeansParams& params);

}  // namespace oneirotax
