#include "oneirotax/topics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "oneirotax/hdbscan.hpp"
#include "oneirotax/text.hpp"

namespace oneirotax {

void ClusteringParams::validate() const {
    if (min_topic_size < 2) throw ValidationError("clustering.min_topic_size must be >= 2");
    if (!(mmr_diversity >= 0.0 && mmr_diversity <= 1.0))
        throw ValidationError("clustering.mmr_diversity must lie in [0, 1]");
    if (reduce_dim == 0) throw ValidationError("clustering.reduce_dim must be positive");
    if (top_n_words == 0) throw ValidationError("clustering.top_n_words must be positive");
    if (candidate_pool < top_n_words) throw ValidationError("clustering.candidate_pool must be >= top_n_words");
    if (ngram_max != 2) throw ValidationError("clustering.ngram_range is fixed at (1, 2)");
    if (!(merge_threshold > 0.0 && merge_threshold <= 1.0))
        throw ValidationError("clustering.merge_threshold must lie in (0, 1]");
}

const std::vector<TermScore>& CtfidfTable::for_topic(int topic_id) const {
    auto it = std::lower_bound(topic_ids.begin(), topic_ids.end(), topic_id);
    if (it == topic_ids.end() || *it != topic_id)
        throw PreconditionError("c-TF-IDF table has no topic " + std::to_string(topic_id));
    return ranked[static_cast<std::size_t>(it - topic_ids.begin())];
}

CtfidfTable ctfidf(std::span<const int> topic_of_sentence, std::span<const std::string> sentence_texts,
                   std::size_t min_df) {
    if (topic_of_sentence.size() != sentence_texts.size())
        throw PreconditionError("ctfidf: assignments and sentences differ in length");
    CtfidfTable table;
    std::set<int> ids;
    for (int t : topic_of_sentence)
        if (t != kOutlierTopic) ids.insert(t);
    if (ids.empty()) throw PreconditionError("ctfidf: no non-outlier topic");
    table.topic_ids.assign(ids.begin(), ids.end());
    std::unordered_map<int, std::size_t> slot;
    for (std::size_t i = 0; i < table.topic_ids.size(); ++i) slot[table.topic_ids[i]] = i;

    // Document frequency over all sentences.
    std::vector<std::vector<std::string>> terms(sentence_texts.size());
    std::unordered_map<std::string, std::size_t> df;
    for (std::size_t i = 0; i < sentence_texts.size(); ++i) {
        terms[i] = text::sentence_terms(sentence_texts[i]);
        std::unordered_set<std::string_view> uniq(terms[i].begin(), terms[i].end());
        for (auto t : uniq) ++df[std::string(t)];
    }

    std::vector<std::map<std::string, std::size_t>> tf(table.topic_ids.size());
    std::map<std::string, std::size_t> tf_total;
    std::vector<std::size_t> tokens(table.topic_ids.size(), 0);
    for (std::size_t i = 0; i < sentence_texts.size(); ++i) {
        if (topic_of_sentence[i] == kOutlierTopic) continue;
        const std::size_t c = slot.at(topic_of_sentence[i]);
        for (const auto& t : terms[i]) {
            if (df.at(t) < min_df) continue;
            ++tf[c][t];
            ++tf_total[t];
            ++tokens[c];
        }
    }
    table.vocabulary_size = tf_total.size();
    table.mean_tokens = static_cast<double>(std::accumulate(tokens.begin(), tokens.end(), std::size_t{0})) /
                        static_cast<double>(tokens.size());

    table.ranked.resize(table.topic_ids.size());
    for (std::size_t c = 0; c < table.topic_ids.size(); ++c) {
        auto& ranked = table.ranked[c];
        ranked.reserve(tf[c].size());
        for (const auto& [term, count] : tf[c]) {
            const double total = static_cast<double>(tf_total.at(term));
            ranked.push_back({term, static_cast<double>(count) * std::log(1.0 + table.mean_tokens / total), count});
        }
        std::stable_sort(ranked.begin(), ranked.end(), [](const TermScore& a, const TermScore& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.term < b.term;
        });
        if (ranked.empty()) {
            table.empty_topics.push_back(table.topic_ids[c]);
            spdlog::warn("c-TF-IDF: topic {} has no eligible terms", table.topic_ids[c]);
        }
    }
    return table;
}

std::vector<std::size_t> mmr_diversify(std::span<const MmrCandidate> candidates, std::span<const float> centroid,
                                       double diversity, std::size_t k) {
    const std::size_t n = candidates.size();
    if (n < k) {
        spdlog::warn("MMR: {} candidate(s) for k = {}; returning all", n, k);
        k = n;
    }
    std::vector<double> relevance(n);
    for (std::size_t i = 0; i < n; ++i)
        relevance[i] = cosine(std::span<const float>(candidates[i].embedding), centroid);
    std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            sim[i][j] = cosine(std::span<const float>(candidates[i].embedding),
                               std::span<const float>(candidates[j].embedding));

    // True when candidate a beats b at equal objective value.
    auto tie_better = [&](std::size_t a, std::size_t b) {
        if (candidates[a].score != candidates[b].score) return candidates[a].score > candidates[b].score;
        return candidates[a].term < candidates[b].term;
    };

    std::vector<std::size_t> picked;
    std::vector<char> used(n, 0);
    picked.reserve(k);
    while (picked.size() < k) {
        std::size_t best = n;
        double best_value = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            double value;
            if (picked.empty()) {
                value = relevance[i];
            } else {
                double redundancy = -std::numeric_limits<double>::infinity();
                for (auto s : picked) redundancy = std::max(redundancy, sim[i][s]);
                value = (1.0 - diversity) * relevance[i] - diversity * redundancy;
            }
            if (best == n || value > best_value || (value == best_value && tie_better(i, best))) {
                best = i;
                best_value = value;
            }
        }
        used[best] = 1;
        picked.push_back(best);
    }
    return picked;
}

Topic strip_and_renormalize(Topic topic, const std::set<std::string, std::less<>>& banned) {
    const std::size_t target = topic.words.size();
    auto is_banned = [&](const TopicWord& w) { return banned.contains(w.term); };
    std::erase_if(topic.words, is_banned);
    std::erase_if(topic.reserve, is_banned);
    while (topic.words.size() < target && !topic.reserve.empty()) {
        topic.words.push_back(std::move(topic.reserve.front()));
        topic.reserve.erase(topic.reserve.begin());
    }
    if (topic.words.empty()) {
        topic.empty_representation = true;
        spdlog::warn("topic {}: every representation term is banned", topic.topic_id);
        return topic;
    }
    double total = 0.0;
    for (const auto& w : topic.words) total += w.score;
    for (auto& w : topic.words) w.weight = w.score / total;
    return topic;
}

std::vector<int> doc_topics(std::span<const int> sentence_topics) {
    std::vector<int> out;
    for (int t : sentence_topics) {
        if (t == kOutlierTopic) continue;
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

double sparse_cosine(const std::vector<TermScore>& a, const std::vector<TermScore>& b) {
    std::unordered_map<std::string_view, double> av;
    double na = 0.0, nb = 0.0, dot = 0.0;
    for (const auto& t : a) {
        av[t.term] = t.score;
        na += t.score * t.score;
    }
    for (const auto& t : b) {
        nb += t.score * t.score;
        if (auto it = av.find(t.term); it != av.end()) dot += it->second * t.score;
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Relabels clusters 0.. by size descending, ties to the lower old label.
void rank_by_size(std::vector<int>& labels) {
    std::map<int, std::size_t> sizes;
    for (int l : labels)
        if (l != kOutlierTopic) ++sizes[l];
    std::vector<std::pair<int, std::size_t>> order(sizes.begin(), sizes.end());
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::map<int, int> remap;
    for (std::size_t i = 0; i < order.size(); ++i) remap[order[i].first] = static_cast<int>(i);
    for (int& l : labels)
        if (l != kOutlierTopic) l = remap.at(l);
}

}  // namespace

std::vector<int> cluster_sentences(const EmbeddingMatrix& reduced, std::span<const std::string> sentence_texts,
                                   const ClusteringParams& params, std::size_t* n_raw_clusters,
                                   std::size_t* n_merges) {
    params.validate();
    if (reduced.rows() < params.min_topic_size)
        throw PreconditionError("cluster_sentences: " + std::to_string(reduced.rows()) +
                                " rows is fewer than min_topic_size " + std::to_string(params.min_topic_size));
    const auto result = hdbscan(reduced, {params.min_topic_size, params.min_samples});
    std::vector<int> labels = result.labels;
    if (n_raw_clusters) *n_raw_clusters = result.n_clusters;
    std::size_t merges = 0;

    if (params.auto_merge && result.n_clusters > 1) {
        if (sentence_texts.size() != labels.size())
            throw PreconditionError("cluster_sentences: auto_merge needs one text per row");
        for (;;) {
            const auto table = ctfidf(labels, sentence_texts, params.min_df);
            if (table.topic_ids.size() < 2) break;
            double best = -1.0;
            std::size_t bi = 0, bj = 0;
            for (std::size_t i = 0; i < table.topic_ids.size(); ++i) {
                for (std::size_t j = i + 1; j < table.topic_ids.size(); ++j) {
                    const double s = sparse_cosine(table.ranked[i], table.ranked[j]);
                    if (s > best) {
                        best = s;
                        bi = i;
                        bj = j;
                    }
                }
            }
            if (best < params.merge_threshold) break;
            const int keep = table.topic_ids[bi];
            const int gone = table.topic_ids[bj];
            spdlog::info("auto-merge: topic {} into {} (c-TF-IDF cosine {:.4f})", gone, keep, best);
            for (int& l : labels)
                if (l == gone) l = keep;
            ++merges;
        }
    }
    if (n_merges) *n_merges = merges;
    rank_by_size(labels);
    return labels;
}

const Topic& TopicModel::topic(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= topics.size() || topics[static_cast<std::size_t>(id)].topic_id != id)
        throw PreconditionError("no topic " + std::to_string(id));
    return topics[static_cast<std::size_t>(id)];
}

std::vector<int> TopicModel::topic_ids_of(std::string_view doc_id) const {
    std::vector<int> per_sentence;
    for (const auto& a : assignments)
        if (a.sentence.doc_id == doc_id) per_sentence.push_back(a.topic_id);
    return doc_topics(per_sentence);
}

TopicModel extract_topics(std::span<const Sentence> sentences, const EmbeddingMatrix& sentence_embeddings,
                          EmbeddingProvider& provider, EmbeddingCache* cache, const ClusteringParams& params) {
    params.validate();
    if (sentences.size() != sentence_embeddings.rows())
        throw PreconditionError("extract_topics: " + std::to_string(sentences.size()) + " sentences but " +
                                std::to_string(sentence_embeddings.rows()) + " embeddings");
    std::vector<std::string> texts;
    texts.reserve(sentences.size());
    for (const auto& s : sentences) texts.push_back(s.text);

    const std::size_t dim = std::min(params.reduce_dim, sentence_embeddings.dim);
    const EmbeddingMatrix reduced = dim < sentence_embeddings.dim
                                        ? reduce(sentence_embeddings, dim, params.reduce_method, params.seed)
                                        : sentence_embeddings;
    TopicModel model;
    const auto labels = cluster_sentences(reduced, texts, params, &model.n_raw_clusters, &model.n_merges);

    model.assignments.reserve(sentences.size());
    for (std::size_t i = 0; i < sentences.size(); ++i)
        model.assignments.push_back({{sentences[i].doc_id, sentences[i].index}, labels[i]});

    const int n_topics = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    if (n_topics <= 0) {
        spdlog::warn("extract_topics: every sentence is an outlier");
        return model;
    }
    const auto table = ctfidf(labels, texts, params.min_df);

    // Embed every topic's candidate terms and joined-candidate centroid text
    // in one provider pass.
    std::vector<std::vector<TermScore>> pools(static_cast<std::size_t>(n_topics));
    std::vector<std::string> to_embed;
    for (int t = 0; t < n_topics; ++t) {
        const auto& ranked = table.for_topic(t);
        auto& pool = pools[static_cast<std::size_t>(t)];
        pool.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(std::min(ranked.size(), params.candidate_pool)));
        std::string joined;
        for (const auto& c : pool) {
            std::string spaced = c.term;
            std::replace(spaced.begin(), spaced.end(), '-', ' ');
            to_embed.push_back(spaced);
            joined += (joined.empty() ? "" : " ") + spaced;
        }
        if (!pool.empty()) to_embed.push_back(joined);
    }
    EmbeddingMatrix term_embeddings;
    if (!to_embed.empty()) term_embeddings = embed_texts(provider, to_embed, cache);

    // Sentence rows per topic for representatives.
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n_topics));
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != kOutlierTopic) members[static_cast<std::size_t>(labels[i])].push_back(i);

    std::vector<std::size_t> offsets(static_cast<std::size_t>(n_topics), 0);
    for (std::size_t t = 0, off = 0; t < pools.size(); ++t) {
        offsets[t] = off;
        if (!pools[t].empty()) off += pools[t].size() + 1;
    }

    model.topics.resize(static_cast<std::size_t>(n_topics));
    parallel_for(static_cast<std::size_t>(n_topics), default_threads(), [&](std::size_t t) {
        Topic topic;
        topic.topic_id = static_cast<int>(t);
        topic.n_sentences = members[t].size();
        const auto& pool = pools[t];
        if (!pool.empty()) {
            std::vector<MmrCandidate> cands;
            cands.reserve(pool.size());
            for (std::size_t c = 0; c < pool.size(); ++c) {
                auto row = term_embeddings.row(offsets[t] + c);
                cands.push_back({pool[c].term, pool[c].score, std::vector<float>(row.begin(), row.end())});
            }
            const auto centroid = term_embeddings.row(offsets[t] + pool.size());
            const auto order = mmr_diversify(cands, centroid, params.mmr_diversity, cands.size());
            for (std::size_t r = 0; r < order.size(); ++r) {
                TopicWord w{pool[order[r]].term, 0.0, pool[order[r]].score};
                (r < params.top_n_words ? topic.words : topic.reserve).push_back(std::move(w));
            }
            double total = 0.0;
            for (const auto& w : topic.words) total += w.score;
            for (auto& w : topic.words) w.weight = w.score / total;
            topic = strip_and_renormalize(std::move(topic));
        } else {
            topic.empty_representation = true;
        }

        // Representatives: the three sentences closest (cosine) to the
        // mean sentence embedding of the topic.
        const std::size_t d = sentence_embeddings.dim;
        std::vector<double> mean(d, 0.0);
        for (auto i : members[t]) {
            auto row = sentence_embeddings.row(i);
            for (std::size_t k = 0; k < d; ++k) mean[k] += row[k];
        }
        double norm = 0.0;
        for (double v : mean) norm += v * v;
        std::vector<std::pair<double, std::size_t>> scored;
        for (auto i : members[t]) {
            double sim = 0.0;
            if (norm > 0.0) {
                try {
                    sim = cosine(sentence_embeddings.row(i), std::span<const double>(mean));
                } catch (const PreconditionError&) {
                    sim = -2.0;
                }
            }
            scored.emplace_back(sim, i);
        }
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t r = 0; r < std::min<std::size_t>(3, scored.size()); ++r) {
            const auto& s = sentences[scored[r].second];
            topic.representatives.push_back({s.doc_id, s.index});
        }
        model.topics[t] = std::move(topic);
    });
    return model;
}

// ---------------------------------------------------------------------------

std::string topic_table_csv(const TopicModel& model, std::size_t n_words) {
    std::map<int, std::set<std::string_view>> docs;
    for (const auto& a : model.assignments)
        if (a.topic_id != kOutlierTopic) docs[a.topic_id].insert(a.sentence.doc_id);
    std::string out = "topic_id,rank,n_sentences,n_docs";
    for (std::size_t i = 1; i <= n_words; ++i) out += ",term_" + std::to_string(i);
    for (std::size_t i = 1; i <= n_words; ++i) out += ",weight_" + std::to_string(i);
    out += '\n';
    for (const auto& t : model.topics) {
        out += std::to_string(t.topic_id) + "," + std::to_string(t.topic_id + 1) + "," +
               std::to_string(t.n_sentences) + "," + std::to_string(docs[t.topic_id].size());
        for (std::size_t i = 0; i < n_words; ++i) out += "," + (i < t.words.size() ? csv_escape(t.words[i].term) : "");
        for (std::size_t i = 0; i < n_words; ++i)
            out += "," + (i < t.words.size() ? format_double(t.words[i].weight) : std::string());
        out += '\n';
    }
    return out;
}

std::string representatives_jsonl(const TopicModel& model, std::span<const Sentence> sentences) {
    std::map<SentenceRef, std::string_view> text_of;
    for (const auto& s : sentences) text_of[{s.doc_id, s.index}] = s.text;
    std::string out;
    for (const auto& t : model.topics) {
        nlohmann::json j;
        j["topic_id"] = t.topic_id;
        j["sentences"] = nlohmann::json::array();
        for (const auto& r : t.representatives) {
            auto it = text_of.find(r);
            j["sentences"].push_back({{"doc_id", r.doc_id},
                                      {"index", r.index},
                                      {"text", it == text_of.end() ? std::string() : std::string(it->second)}});
        }
        out += j.dump() + "\n";
    }
    return out;
}

std::string assignments_csv(const TopicModel& model) {
    std::string out = "doc_id,sentence_index,topic_id\n";
    for (const auto& a : model.assignments)
        out += csv_escape(a.sentence.doc_id) + "," + std::to_string(a.sentence.index) + "," +
               std::to_string(a.topic_id) + "\n";
    return out;
}

}  // namespace oneirotax
