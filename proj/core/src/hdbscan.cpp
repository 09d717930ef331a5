#include "oneirotax/hdbscan.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <map>
#include <numeric>

namespace oneirotax {

namespace {

// Stand-in for 1/0 so stabilities stay finite when points coincide.
constexpr double kMaxLambda = 1e200;

double lambda_of(double distance) { return distance > 0.0 ? std::min(1.0 / distance, kMaxLambda) : kMaxLambda; }

struct MergeRow {
    std::size_t left = 0;
    std::size_t right = 0;
    double distance = 0.0;
    std::size_t size = 0;
};

class DenseDistances {
public:
    explicit DenseDistances(const EmbeddingMatrix& m) : n_(m.rows()), d_(m.dim), x_(m.values.begin(), m.values.end()) {}
    double operator()(std::size_t a, std::size_t b) const {
        const double* pa = x_.data() + a * d_;
        const double* pb = x_.data() + b * d_;
        double s = 0.0;
        for (std::size_t k = 0; k < d_; ++k) {
            const double t = pa[k] - pb[k];
            s += t * t;
        }
        return std::sqrt(s);
    }
    std::size_t size() const { return n_; }

private:
    std::size_t n_, d_;
    std::vector<double> x_;
};

std::vector<double> core_distances(const DenseDistances& dist, std::size_t min_samples) {
    const std::size_t n = dist.size();
    const std::size_t k = std::min(min_samples, n - 1);
    std::vector<double> core(n, 0.0);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) row[j] = i == j ? 0.0 : dist(i, j);
        // row includes the point itself at distance 0, so index k is the
        // k-th nearest other point.
        std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end());
        core[i] = row[k];
    }
    return core;
}

struct MstEdge {
    std::size_t a, b;
    double w;
};

std::vector<MstEdge> mutual_reachability_mst(const DenseDistances& dist, const std::vector<double>& core) {
    const std::size_t n = dist.size();
    std::vector<MstEdge> edges;
    edges.reserve(n - 1);
    std::vector<char> in_tree(n, 0);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> from(n, 0);
    std::size_t current = 0;
    in_tree[0] = 1;
    for (std::size_t step = 1; step < n; ++step) {
        std::size_t next = n;
        double next_w = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (in_tree[j]) continue;
            const double mr = std::max({core[current], core[j], dist(current, j)});
            if (mr < best[j]) {
                best[j] = mr;
                from[j] = current;
            }
            if (next == n || best[j] < next_w) {
                next_w = best[j];
                next = j;
            }
        }
        in_tree[next] = 1;
        edges.push_back({from[next], next, next_w});
        current = next;
    }
    return edges;
}

std::vector<MergeRow> single_linkage(std::vector<MstEdge> edges, std::size_t n) {
    std::stable_sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) { return x.w < y.w; });
    std::vector<std::size_t> parent(2 * n - 1);
    std::iota(parent.begin(), parent.end(), 0);
    std::vector<std::size_t> size(2 * n - 1, 1);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    std::vector<MergeRow> rows;
    rows.reserve(n - 1);
    std::size_t next = n;
    for (const auto& e : edges) {
        const std::size_t ra = find(e.a);
        const std::size_t rb = find(e.b);
        rows.push_back({ra, rb, e.w, size[ra] + size[rb]});
        parent[ra] = next;
        parent[rb] = next;
        size[next] = size[ra] + size[rb];
        ++next;
    }
    return rows;
}

std::vector<CondensedEdge> condense(const std::vector<MergeRow>& hierarchy, std::size_t n, std::size_t min_size) {
    std::vector<CondensedEdge> out;
    const std::size_t root = 2 * n - 2;
    auto node_size = [&](std::size_t node) { return node < n ? std::size_t{1} : hierarchy[node - n].size; };
    auto leaves_of = [&](std::size_t node, auto&& emit) {
        std::deque<std::size_t> q{node};
        while (!q.empty()) {
            const std::size_t x = q.front();
            q.pop_front();
            if (x < n) {
                emit(x);
            } else {
                q.push_back(hierarchy[x - n].left);
                q.push_back(hierarchy[x - n].right);
            }
        }
    };

    std::vector<std::size_t> relabel(2 * n - 1, 0);
    std::vector<char> ignore(2 * n - 1, 0);
    relabel[root] = n;
    std::size_t next_label = n + 1;

    std::deque<std::size_t> bfs{root};
    while (!bfs.empty()) {
        const std::size_t node = bfs.front();
        bfs.pop_front();
        if (node < n) continue;
        const MergeRow& row = hierarchy[node - n];
        bfs.push_back(row.left);
        bfs.push_back(row.right);
        if (ignore[node]) continue;

        const double lambda = lambda_of(row.distance);
        const std::size_t lsize = node_size(row.left);
        const std::size_t rsize = node_size(row.right);
        auto fall_out = [&](std::size_t sub) {
            leaves_of(sub, [&](std::size_t p) { out.push_back({relabel[node], p, lambda, 1}); });
            std::deque<std::size_t> q{sub};
            while (!q.empty()) {
                const std::size_t x = q.front();
                q.pop_front();
                ignore[x] = 1;
                if (x >= n) {
                    q.push_back(hierarchy[x - n].left);
                    q.push_back(hierarchy[x - n].right);
                }
            }
        };
        if (lsize >= min_size && rsize >= min_size) {
            relabel[row.left] = next_label++;
            out.push_back({relabel[node], relabel[row.left], lambda, lsize});
            relabel[row.right] = next_label++;
            out.push_back({relabel[node], relabel[row.right], lambda, rsize});
        } else if (lsize < min_size && rsize < min_size) {
            fall_out(row.left);
            fall_out(row.right);
        } else if (lsize < min_size) {
            relabel[row.right] = relabel[node];
            fall_out(row.left);
        } else {
            relabel[row.left] = relabel[node];
            fall_out(row.right);
        }
    }
    return out;
}

}  // namespace

HdbscanResult hdbscan(const EmbeddingMatrix& points, const HdbscanParams& params) {
    validate(points);
    const std::size_t n = points.rows();
    HdbscanResult result;
    result.labels.assign(n, -1);
    const std::size_t min_size = std::max<std::size_t>(2, params.min_cluster_size);
    if (n < 2 || n < min_size) return result;
    std::size_t min_samples = params.min_samples == 0 ? min_size : params.min_samples;
    min_samples = std::max<std::size_t>(1, std::min(min_samples, n - 1));

    const DenseDistances dist(points);
    const auto core = core_distances(dist, min_samples);
    const auto hierarchy = single_linkage(mutual_reachability_mst(dist, core), n);
    result.condensed_tree = condense(hierarchy, n, min_size);
    const auto& tree = result.condensed_tree;

    const std::size_t root = n;
    std::size_t max_cluster = root;
    for (const auto& e : tree) max_cluster = std::max(max_cluster, e.parent);
    for (const auto& e : tree)
        if (e.child_size > 1) max_cluster = std::max(max_cluster, e.child);
    const std::size_t n_nodes = max_cluster - root + 1;

    // Birth lambda of every cluster, then excess-of-mass stability.
    std::vector<double> birth(n_nodes, 0.0);
    for (const auto& e : tree)
        if (e.child_size > 1) birth[e.child - root] = e.lambda;
    std::vector<double> stability(n_nodes, 0.0);
    for (const auto& e : tree) stability[e.parent - root] += (e.lambda - birth[e.parent - root]) * static_cast<double>(e.child_size);

    std::vector<std::vector<std::size_t>> children(n_nodes);
    for (const auto& e : tree)
        if (e.child_size > 1) children[e.parent - root].push_back(e.child - root);

    std::vector<char> selected(n_nodes, 0);
    std::vector<double> subtree = stability;
    // Children carry larger ids than their parents, so a reverse sweep
    // visits leaves first. The root (index 0) is never a candidate.
    for (std::size_t c = n_nodes; c-- > 1;) {
        double child_sum = 0.0;
        for (auto ch : children[c]) child_sum += subtree[ch];
        if (!children[c].empty() && child_sum > stability[c]) {
            selected[c] = 0;
            subtree[c] = child_sum;
        } else {
            selected[c] = 1;
            std::deque<std::size_t> q(children[c].begin(), children[c].end());
            while (!q.empty()) {
                const std::size_t x = q.front();
                q.pop_front();
                selected[x] = 0;
                for (auto ch : children[x]) q.push_back(ch);
            }
        }
    }

    std::vector<int> label_of(n_nodes, -1);
    int next = 0;
    for (std::size_t c = 1; c < n_nodes; ++c) {
        if (selected[c]) {
            label_of[c] = next++;
            result.cluster_stability.push_back(stability[c]);
        }
    }
    result.n_clusters = static_cast<std::size_t>(next);

    // Each node points at its parent unless it is itself selected.
    std::vector<std::size_t> up(n_nodes, 0);
    for (const auto& e : tree)
        if (e.child_size > 1) up[e.child - root] = e.parent - root;
    auto resolve = [&](std::size_t c) -> int {
        while (c != 0 && !selected[c]) c = up[c];
        return c == 0 ? -1 : label_of[c];
    };
    for (const auto& e : tree)
        if (e.child_size == 1) result.labels[e.child] = resolve(e.parent - root);
    return result;
}

}  // namespace oneirotax
