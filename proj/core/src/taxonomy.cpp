#include "oneirotax/taxonomy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <queue>

#include <spdlog/spdlog.h>

#include "oneirotax/error.hpp"
#include "oneirotax/util.hpp"

namespace oneirotax {

std::vector<FrequencyRow> frequency_table(std::span<const DocProfile> docs, const EntityMap& map) {
    std::map<int, FrequencyRow> rows;
    std::map<int, std::set<std::string_view>> authors;
    for (int e : map.entities) rows[e].entity = e;
    for (const auto& d : docs) {
        for (const auto& [e, n] : d.hits) {
            if (n == 0) continue;
            auto& r = rows[e];
            r.entity = e;
            r.n_sentences += n;
            ++r.n_docs;
            authors[e].insert(d.author_id);
        }
    }
    std::vector<FrequencyRow> out;
    for (auto& [e, r] : rows) {
        r.n_authors = authors[e].size();
        out.push_back(r);
    }
    return out;
}

std::string frequency_csv(std::span<const FrequencyRow> rows, Level level, const std::map<int, std::string>& labels) {
    std::vector<FrequencyRow> sorted(rows.begin(), rows.end());
    std::sort(sorted.begin(), sorted.end(), [](const FrequencyRow& a, const FrequencyRow& b) {
        if (a.n_docs != b.n_docs) return a.n_docs > b.n_docs;
        return a.entity < b.entity;
    });
    std::string out = std::string(to_string(level)) + "_id,rank,n_sentences,n_docs,n_authors,label\n";
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const auto& r = sorted[i];
        auto it = labels.find(r.entity);
        out += std::to_string(r.entity) + "," + std::to_string(i + 1) + "," + std::to_string(r.n_sentences) + "," +
               std::to_string(r.n_docs) + "," + std::to_string(r.n_authors) + "," +
               csv_escape(it == labels.end() ? std::string_view{} : std::string_view(it->second)) + "\n";
    }
    return out;
}

void WeightedGraph::add(int u, int v, std::uint64_t w) {
    if (u == v) throw PreconditionError("self-loop on node " + std::to_string(u));
    if (w == 0) throw PreconditionError("edge weight must be at least 1");
    nodes.insert(u);
    nodes.insert(v);
    edges[{std::min(u, v), std::max(u, v)}] += w;
}

std::uint64_t WeightedGraph::weight(int u, int v) const {
    auto it = edges.find({std::min(u, v), std::max(u, v)});
    return it == edges.end() ? 0 : it->second;
}

std::map<int, std::uint64_t> WeightedGraph::strengths() const {
    std::map<int, std::uint64_t> s;
    for (int n : nodes) s[n] = 0;
    for (const auto& [e, w] : edges) {
        s[e.first] += w;
        s[e.second] += w;
    }
    return s;
}

bool WeightedGraph::connected() const {
    if (nodes.empty()) return true;
    std::map<int, std::vector<int>> adj;
    for (const auto& [e, w] : edges) {
        adj[e.first].push_back(e.second);
        adj[e.second].push_back(e.first);
    }
    std::set<int> seen{*nodes.begin()};
    std::queue<int> q;
    q.push(*nodes.begin());
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (int v : adj[u])
            if (seen.insert(v).second) q.push(v);
    }
    return seen.size() == nodes.size();
}

WeightedGraph cooccurrence(std::span<const std::set<int>> doc_sets, const std::set<int>& nodes) {
    WeightedGraph g;
    g.nodes = nodes;
    for (const auto& s : doc_sets) {
        for (auto a = s.begin(); a != s.end(); ++a)
            for (auto b = std::next(a); b != s.end(); ++b) g.add(*a, *b);
    }
    return g;
}

WeightedGraph cooccurrence(std::span<const DocProfile> docs, const EntityMap& map) {
    std::vector<std::set<int>> sets;
    sets.reserve(docs.size());
    for (const auto& d : docs) {
        std::set<int> s;
        for (const auto& [e, n] : d.hits)
            if (n > 0) s.insert(e);
        sets.push_back(std::move(s));
    }
    return cooccurrence(sets, std::set<int>(map.entities.begin(), map.entities.end()));
}

std::vector<EdgeScore> noise_corrected_scores(const WeightedGraph& g) {
    const auto strength = g.strengths();
    double total = 0.0;
    for (const auto& [n, s] : strength) total += static_cast<double>(s);
    std::vector<EdgeScore> out;
    out.reserve(g.edges.size());
    for (const auto& [e, w] : g.edges) {
        const double ni = static_cast<double>(strength.at(e.first));
        const double nj = static_cast<double>(strength.at(e.second));
        const double nij = static_cast<double>(w);
        const double n = total;
        const double prior_mean = ni * nj / (n * n);
        const double prior_var = ni * nj * (n - ni) * (n - nj) / (n * n * n * n * (n - 1.0));
        const double alpha = prior_mean * prior_mean / prior_var * (1.0 - prior_mean) - prior_mean;
        const double beta = prior_mean / prior_var * (1.0 - prior_mean * prior_mean) - (1.0 - prior_mean);
        const double a_post = alpha + nij;
        const double b_post = n - nij + beta;
        const double p = a_post / (a_post + b_post);
        EdgeScore s;
        s.u = e.first;
        s.v = e.second;
        s.weight = w;
        s.expected = ni * nj / n;
        s.sdev = std::sqrt(p * (1.0 - p) * n);
        s.z = (nij - s.expected) / s.sdev;
        out.push_back(s);
    }
    return out;
}

std::string_view to_string(BackboneMethod m) {
    return m == BackboneMethod::noise_corrected ? "noise_corrected" : "weight_threshold";
}

BackboneMethod parse_backbone_method(std::string_view s) {
    if (s == "noise_corrected") return BackboneMethod::noise_corrected;
    if (s == "weight_threshold") return BackboneMethod::weight_threshold;
    throw ValidationError("unknown backbone method '" + std::string(s) + "'");
}

WeightedGraph backbone(const WeightedGraph& g, double delta, BackboneMethod method) {
    if (std::isnan(delta)) throw ValidationError("backbone delta is NaN");
    if (!g.connected()) spdlog::warn("backbone: input graph is not connected");
    WeightedGraph out;
    out.nodes = g.nodes;
    if (method == BackboneMethod::weight_threshold) {
        for (const auto& [e, w] : g.edges)
            if (static_cast<double>(w) >= delta) out.edges.emplace(e, w);
    } else {
        for (const auto& s : noise_corrected_scores(g))
            if (s.z >= delta) out.edges.emplace(std::pair{s.u, s.v}, s.weight);
    }
    if (out.edges.empty() && !g.edges.empty())
        spdlog::warn("backbone: delta {} removes every edge; emitting an empty backbone", delta);
    return out;
}

std::string edge_csv(const WeightedGraph& g) {
    std::string out = "source,target,weight\n";
    for (const auto& [e, w] : g.edges)
        out += std::to_string(e.first) + "," + std::to_string(e.second) + "," + std::to_string(w) + "\n";
    return out;
}

namespace {

template <typename T>
T parse_number(std::string_view s, std::size_t line) {
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ValidationError("edge csv line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    return v;
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

WeightedGraph read_edge_csv(std::string_view text, std::span<const int> extra_nodes) {
    WeightedGraph g;
    g.nodes.insert(extra_nodes.begin(), extra_nodes.end());
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line_no == 1) {
            if (line != "source,target,weight") throw ValidationError("edge csv: unexpected header '" + std::string(line) + "'");
            continue;
        }
        if (line.empty()) continue;
        const auto fields = csv_split(line);
        if (fields.size() != 3) throw ValidationError("edge csv line " + std::to_string(line_no) + ": expected 3 fields");
        const int u = parse_number<int>(fields[0], line_no);
        const int v = parse_number<int>(fields[1], line_no);
        const auto w = parse_number<std::uint64_t>(fields[2], line_no);
        if (g.weight(u, v) != 0)
            throw ValidationError("edge csv line " + std::to_string(line_no) + ": duplicate edge");
        g.add(u, v, w);
    }
    if (line_no == 0) throw ValidationError("edge csv: missing header");
    return g;
}

std::string gexf_xml(const WeightedGraph& g, const std::map<int, GexfNodeInfo>& info) {
    const auto strength = g.strengths();
    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<gexf xmlns=\"http://gexf.net/1.3\" xmlns:viz=\"http://gexf.net/1.3/viz\" version=\"1.3\">\n";
    out += "  <graph defaultedgetype=\"undirected\">\n";
    out += "    <attributes class=\"node\">\n";
    out += "      <attribute id=\"n_docs\" title=\"n_docs\" type=\"integer\"/>\n";
    out += "      <attribute id=\"weighted_degree\" title=\"weighted_degree\" type=\"integer\"/>\n";
    out += "    </attributes>\n";
    out += "    <nodes>\n";
    for (int n : g.nodes) {
        auto it = info.find(n);
        const std::string label = it == info.end() ? std::to_string(n) : it->second.label;
        const std::size_t docs = it == info.end() ? 0 : it->second.n_docs;
        out += "      <node id=\"" + std::to_string(n) + "\" label=\"" + xml_escape(label) + "\">\n";
        out += "        <attvalues>\n";
        out += "          <attvalue for=\"n_docs\" value=\"" + std::to_string(docs) + "\"/>\n";
        out += "          <attvalue for=\"weighted_degree\" value=\"" + std::to_string(strength.at(n)) + "\"/>\n";
        out += "        </attvalues>\n";
        out += "        <viz:size value=\"" + std::to_string(docs) + "\"/>\n";
        out += "      </node>\n";
    }
    out += "    </nodes>\n";
    out += "    <edges>\n";
    std::size_t id = 0;
    for (const auto& [e, w] : g.edges) {
        out += "      <edge id=\"" + std::to_string(id++) + "\" source=\"" + std::to_string(e.first) + "\" target=\"" +
               std::to_string(e.second) + "\" weight=\"" + std::to_string(w) + "\"/>\n";
    }
    out += "    </edges>\n";
    out += "  </graph>\n";
    out += "</gexf>\n";
    return out;
}

}  // namespace oneirotax
