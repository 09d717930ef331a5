#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oneirotax/profile.hpp"

namespace oneirotax {

struct FrequencyRow {
    int entity = 0;
    std::size_t n_sentences = 0;
    std::size_t n_docs = 0;
    std::size_t n_authors = 0;
};

/// One row per entity of the profiles' map, ascending by entity id.
std::vector<FrequencyRow> frequency_table(std::span<const DocProfile> docs, const EntityMap& map);

/// Columns: <level>_id, rank, n_sentences, n_docs, n_authors, label.
/// Rows ordered by n_docs descending, ties by id.
std::string frequency_csv(std::span<const FrequencyRow> rows, Level level,
                          const std::map<int, std::string>& labels = {});

/// Undirected, no self-loops, edge key (u, v) with u < v.
struct WeightedGraph {
    std::set<int> nodes;
    std::map<std::pair<int, int>, std::uint64_t> edges;

    void add(int u, int v, std::uint64_t w = 1);
    std::uint64_t weight(int u, int v) const;  // 0 when absent
    std::map<int, std::uint64_t> strengths() const;
    bool connected() const;
    friend bool operator==(const WeightedGraph&, const WeightedGraph&) = default;
};

/// weight(A, B) = number of sets containing both A and B.
WeightedGraph cooccurrence(std::span<const std::set<int>> doc_sets, const std::set<int>& nodes);
WeightedGraph cooccurrence(std::span<const DocProfile> docs, const EntityMap& map);

struct EdgeScore {
    int u = 0;
    int v = 0;
    std::uint64_t weight = 0;
    double expected = 0.0;
    double sdev = 0.0;
    double z = 0.0;  // (weight - expected) / sdev
};

/// Null-model statistics per edge. The symmetric adjacency convention is
/// used: node totals are strengths and the grand total is the sum of all
/// strengths. The variance is the binomial variance under a Beta posterior
/// whose prior matches the hypergeometric mean and variance.
std::vector<EdgeScore> noise_corrected_scores(const WeightedGraph& g);

enum class BackboneMethod { noise_corrected, weight_threshold };
std::string_view to_string(BackboneMethod m);
BackboneMethod parse_backbone_method(std::string_view s);

/// noise_corrected keeps edges with z >= delta; weight_threshold keeps
/// edges with weight >= delta. Nodes are always preserved.
WeightedGraph backbone(const WeightedGraph& g, double delta, BackboneMethod method = BackboneMethod::noise_corrected);

inline WeightedGraph noise_corrected_backbone(const WeightedGraph& g, double delta = 3.8) {
    return backbone(g, delta, BackboneMethod::noise_corrected);
}

std::string edge_csv(const WeightedGraph& g);
/// Parses "source,target,weight". Nodes come from the edges plus `extra_nodes`.
WeightedGraph read_edge_csv(std::string_view text, std::span<const int> extra_nodes = {});

struct GexfNodeInfo {
    std::string label;
    std::size_t n_docs = 0;
};
std::string gexf_xml(const WeightedGraph& g, const std::map<int, GexfNodeInfo>& info = {});

}  // namespace oneirotax
