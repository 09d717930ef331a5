#include "oneirotax/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oneirotax/error.hpp"
#include "oneirotax/util.hpp"

namespace oneirotax {

namespace {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }  // [0, 1)
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

private:
    std::uint64_t state_;
};

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        s += t * t;
    }
    return s;
}

std::vector<std::vector<double>> kmeanspp(const std::vector<std::vector<double>>& x, std::size_t k, Rng& rng) {
    const std::size_t n = x.size();
    std::vector<std::vector<double>> centers;
    centers.reserve(k);
    centers.push_back(x[rng.below(n)]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(x[i], centers[0]);
    while (centers.size() < k) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.below(n);  // all remaining points coincide with centers
        }
        centers.push_back(x[pick]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(x[i], centers.back()));
    }
    return centers;
}

double assign(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& centers,
              std::vector<int>& labels) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (std::size_t c = 0; c < centers.size(); ++c) {
            const double d = sq_dist(x[i], centers[c]);
            if (d < best) {
                best = d;
                arg = static_cast<int>(c);
            }
        }
        labels[i] = arg;
        inertia += best;
    }
    return inertia;
}

}  // namespace

KMeansResult kmeans_single(const std::vector<std::vector<double>>& x, std::size_t k, std::uint64_t seed,
                           std::size_t max_iterations, double tolerance) {
    const std::size_t n = x.size();
    if (k == 0) throw PreconditionError("kmeans: k must be positive");
    if (k > n) throw PreconditionError("kmeans: k = " + std::to_string(k) + " exceeds " + std::to_string(n) + " points");
    const std::size_t d = x.front().size();
    Rng rng(seed);
    KMeansResult r;
    r.centroids = kmeanspp(x, k, rng);
    r.labels.assign(n, 0);
    double inertia = assign(x, r.centroids, r.labels);
    r.inertia_history.push_back(inertia);

    for (std::size_t it = 0; it < max_iterations; ++it) {
        std::vector<std::vector<double>> next(k, std::vector<double>(d, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(r.labels[i]);
            ++counts[c];
            for (std::size_t j = 0; j < d; ++j) next[c][j] += x[i][j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (auto& v : next[c]) v /= static_cast<double>(counts[c]);
        }
        // Re-seed empty clusters at the point farthest from its centroid.
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dd = sq_dist(x[i], next[static_cast<std::size_t>(r.labels[i])]);
                if (dd > far_d) {
                    far_d = dd;
                    far = i;
                }
            }
            next[c] = x[far];
            --counts[static_cast<std::size_t>(r.labels[far])];
            r.labels[far] = static_cast<int>(c);
            counts[c] = 1;
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) shift = std::max(shift, std::sqrt(sq_dist(next[c], r.centroids[c])));
        r.centroids = std::move(next);
        const double updated = assign(x, r.centroids, r.labels);
        if (updated > inertia * (1.0 + 1e-12) + 1e-300)
            throw Error("kmeans: objective increased from " + format_double(inertia) + " to " + format_double(updated));
        inertia = updated;
        r.inertia_history.push_back(inertia);
        r.iterations = it + 1;
        if (shift <= tolerance) break;
    }
    r.inertia = inertia;
    return r;
}

KMeansResult kmeans(const std::vector<std::vector<double>>& points, const KMeansParams& params) {
    if (points.empty()) throw PreconditionError("kmeans: no points");
    if (params.k > points.size())
        throw PreconditionError("kmeans: k = " + std::to_string(params.k) + " exceeds " +
                                std::to_string(points.size()) + " points");
    const std::size_t restarts = std::max<std::size_t>(1, params.restarts);
    std::vector<KMeansResult> runs(restarts);
    parallel_for(restarts, params.threads ? params.threads : default_threads(), [&](std::size_t r) {
        runs[r] = kmeans_single(points, params.k, params.seed * 1000003ULL + r, params.max_iterations,
                                params.tolerance);
    });
    std::size_t best = 0;
    for (std::size_t r = 1; r < restarts; ++r)
        if (runs[r].inertia < runs[best].inertia) best = r;
    KMeansResult out = std::move(runs[best]);
    out.best_restart = best;
    return out;
}

}  // namespace oneirotax
