#include "oneirotax/themes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "oneirotax/error.hpp"
#include "oneirotax/kmeans.hpp"
#include "oneirotax/util.hpp"

namespace oneirotax {

using json = nlohmann::json;

std::string_view to_string(ThemeCategory c) {
    switch (c) {
        case ThemeCategory::dream_content: return "dream_content";
        case ThemeCategory::dream_type: return "dream_type";
        case ThemeCategory::interface: return "interface";
        case ThemeCategory::waking: return "waking";
        case ThemeCategory::social_artifact: return "social_artifact";
    }
    return "unknown";
}

ThemeCategory parse_theme_category(std::string_view s) {
    for (auto c : {ThemeCategory::dream_content, ThemeCategory::dream_type, ThemeCategory::interface,
                   ThemeCategory::waking, ThemeCategory::social_artifact})
        if (to_string(c) == s) return c;
    throw ValidationError("unknown theme category '" + std::string(s) + "'");
}

TopicEmbedding topic_embedding(const Topic& topic, EmbeddingProvider& provider, EmbeddingCache* cache) {
    if (topic.words.empty()) throw PreconditionError("topic " + std::to_string(topic.topic_id) + " has no words");
    double total = 0.0;
    for (const auto& w : topic.words) total += w.weight;
    if (std::abs(total - 1.0) > 1e-9)
        throw PreconditionError("topic " + std::to_string(topic.topic_id) + ": weights sum to " +
                                format_double(total) + ", expected 1");
    std::vector<const TopicWord*> words;
    for (const auto& w : topic.words) words.push_back(&w);
    std::sort(words.begin(), words.end(), [](const TopicWord* a, const TopicWord* b) {
        if (a->term != b->term) return a->term < b->term;
        return a->weight < b->weight;
    });
    std::vector<std::string> texts;
    for (const auto* w : words) {
        std::string spaced = w->term;
        std::replace(spaced.begin(), spaced.end(), '-', ' ');
        texts.push_back(std::move(spaced));
    }
    const EmbeddingMatrix m = embed_texts(provider, texts, cache);
    TopicEmbedding out{topic.topic_id, std::vector<double>(m.dim, 0.0)};
    for (std::size_t i = 0; i < words.size(); ++i) {
        auto row = m.row(i);
        for (std::size_t j = 0; j < m.dim; ++j) out.vector[j] += static_cast<double>(row[j]) * words[i]->weight;
    }
    return out;
}

ThemeClustering cluster_topics(std::span<const TopicEmbedding> embeddings, const ThemeClusteringParams& params) {
    const std::size_t n = embeddings.size();
    if (params.k == 0) throw ValidationError("themes.k must be positive");
    if (params.k > n)
        throw PreconditionError("cluster_topics: k = " + std::to_string(params.k) + " exceeds " + std::to_string(n) +
                                " topics");
    std::vector<std::vector<double>> rows;
    rows.reserve(n);
    for (const auto& e : embeddings) rows.push_back(e.vector);
    auto standardized = standardize(rows);

    const std::size_t dim = standardized.front().size();
    std::size_t target = std::min(params.reduce_to, dim);
    if (params.reduce_method == ReduceMethod::pca && target > n) {
        spdlog::warn("cluster_topics: only {} topics; reducing to {} dims instead of {}", n, n, target);
        target = n;
    }
    std::vector<std::vector<double>> points;
    if (target < dim) {
        EmbeddingMatrix m;
        m.dim = dim;
        m.row_keys.resize(n);
        m.values.reserve(n * dim);
        for (const auto& r : standardized)
            for (double v : r) m.values.push_back(static_cast<float>(v));
        const EmbeddingMatrix red = reduce(m, target, params.reduce_method, params.seed);
        for (std::size_t i = 0; i < n; ++i) {
            auto row = red.row(i);
            points.emplace_back(row.begin(), row.end());
        }
    } else {
        points = std::move(standardized);
    }

    KMeansParams kp;
    kp.k = params.k;
    kp.restarts = params.restarts;
    kp.max_iterations = params.max_iterations;
    kp.tolerance = params.tolerance;
    kp.seed = params.seed;
    const KMeansResult km = kmeans(points, kp);

    std::map<int, std::set<int>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[km.labels[i]].insert(embeddings[i].topic_id);
    std::vector<std::set<int>> ordered;
    for (auto& [label, topics] : groups) ordered.push_back(std::move(topics));
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return *a.begin() < *b.begin(); });

    ThemeClustering out;
    out.inertia = km.inertia;
    out.inertia_history = km.inertia_history;
    for (std::size_t t = 0; t < ordered.size(); ++t) {
        Theme th;
        th.theme_id = static_cast<int>(t);
        th.name = "theme " + std::to_string(t);
        th.topic_ids = std::move(ordered[t]);
        out.themes.push_back(std::move(th));
    }
    return out;
}

void name_themes(std::vector<Theme>& themes, const TopicModel& model) {
    for (auto& th : themes) {
        std::vector<const Topic*> members;
        for (int id : th.topic_ids) members.push_back(&model.topic(id));
        std::stable_sort(members.begin(), members.end(),
                         [](const Topic* a, const Topic* b) { return a->n_sentences > b->n_sentences; });
        std::string name;
        for (std::size_t i = 0; i < std::min<std::size_t>(3, members.size()); ++i) {
            if (members[i]->words.empty()) continue;
            if (!name.empty()) name += ", ";
            name += members[i]->words.front().term;
        }
        th.name = name.empty() ? "theme " + std::to_string(th.theme_id) : name;
    }
}

// ---------------------------------------------------------------------------

namespace {

int int_arg(const json& j, const char* key, std::size_t line) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer())
        throw ValidationError("adjustment line " + std::to_string(line) + ": '" + key + "' must be an integer");
    return it->get<int>();
}

std::string str_arg(const json& j, const char* key, std::size_t line) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string())
        throw ValidationError("adjustment line " + std::to_string(line) + ": '" + key + "' must be a string");
    return it->get<std::string>();
}

}  // namespace

AdjustmentScript AdjustmentScript::parse(std::string_view text) {
    std::vector<AdjustmentAction> actions;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string_view::npos || line[first] == '#') continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError("adjustment line " + std::to_string(line_no) + ": " + e.what());
        }
        const std::string kind = str_arg(j, "action", line_no);
        if (kind == "rename") {
            actions.emplace_back(action::Rename{int_arg(j, "theme", line_no), str_arg(j, "name", line_no)});
        } else if (kind == "set_category") {
            std::optional<int> theme;
            if (auto it = j.find("theme"); it != j.end() && it->is_string() && it->get<std::string>() == "*") {
                theme = std::nullopt;
            } else {
                theme = int_arg(j, "theme", line_no);
            }
            actions.emplace_back(action::SetCategory{theme, parse_theme_category(str_arg(j, "category", line_no))});
        } else if (kind == "move_topic") {
            actions.emplace_back(action::MoveTopic{int_arg(j, "topic", line_no), int_arg(j, "from", line_no),
                                                   int_arg(j, "to", line_no)});
        } else if (kind == "split") {
            action::Split s{int_arg(j, "theme", line_no), {}, {}};
            auto parts = j.find("parts");
            auto names = j.find("names");
            if (parts == j.end() || !parts->is_array() || names == j.end() || !names->is_array())
                throw ValidationError("adjustment line " + std::to_string(line_no) +
                                      ": split needs 'parts' and 'names' arrays");
            for (const auto& p : *parts) s.parts.push_back(p.get<std::set<int>>());
            for (const auto& n : *names) s.names.push_back(n.get<std::string>());
            actions.emplace_back(std::move(s));
        } else if (kind == "drop_topic") {
            actions.emplace_back(action::DropTopic{int_arg(j, "topic", line_no)});
        } else {
            throw ValidationError("adjustment line " + std::to_string(line_no) + ": unknown action '" + kind + "'");
        }
    }
    return AdjustmentScript(std::move(actions));
}

AdjustmentScript AdjustmentScript::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ValidationError("adjustments file not found: " + path.string());
    return parse(read_file(path));
}

void AdjustmentScript::consume() {
    if (consumed_) throw PreconditionError("adjustment script has already been applied in this run");
    consumed_ = true;
}

namespace {

std::size_t partition_size(const std::vector<Theme>& themes) {
    std::size_t s = 0;
    for (const auto& t : themes) s += t.topic_ids.size();
    return s;
}

}  // namespace

AdjustmentResult apply_adjustments(std::vector<Theme> themes, AdjustmentScript& script, std::size_t n_topics) {
    script.consume();
    AdjustmentResult res;
    if (partition_size(themes) != n_topics)
        throw PreconditionError("apply_adjustments: themes hold " + std::to_string(partition_size(themes)) +
                                " topics, expected " + std::to_string(n_topics));

    // Fresh ids never reuse one that existed earlier in the run.
    int next_id = 0;
    for (const auto& t : themes) next_id = std::max(next_id, t.theme_id + 1);

    auto find_theme = [&](int id) -> Theme* {
        for (auto& t : themes)
            if (t.theme_id == id) return &t;
        return nullptr;
    };
    auto holder_of = [&](int topic) -> Theme* {
        for (auto& t : themes)
            if (t.topic_ids.contains(topic)) return &t;
        return nullptr;
    };
    auto prune_empty = [&](std::size_t idx) {
        std::erase_if(themes, [&](const Theme& t) {
            if (!t.topic_ids.empty()) return false;
            res.audit.push_back("#" + std::to_string(idx) + " theme " + std::to_string(t.theme_id) +
                                " is empty and was removed");
            return true;
        });
    };

    const auto& actions = script.actions();
    for (std::size_t idx = 0; idx < actions.size(); ++idx) {
        auto fail = [&](const std::string& what) {
            throw ValidationError("adjustment action #" + std::to_string(idx) + ": " + what);
        };
        auto need_theme = [&](int id) {
            Theme* t = find_theme(id);
            if (!t) fail("theme " + std::to_string(id) + " does not exist");
            return t;
        };
        std::visit(
            [&](const auto& a) {
                using A = std::decay_t<decltype(a)>;
                if constexpr (std::is_same_v<A, action::Rename>) {
                    Theme* t = need_theme(a.theme);
                    res.audit.push_back("#" + std::to_string(idx) + " rename theme " + std::to_string(a.theme) +
                                        " '" + t->name + "' -> '" + a.name + "'");
                    t->name = a.name;
                } else if constexpr (std::is_same_v<A, action::SetCategory>) {
                    if (a.theme) {
                        need_theme(*a.theme)->category = a.category;
                        res.audit.push_back("#" + std::to_string(idx) + " set_category theme " +
                                            std::to_string(*a.theme) + " = " + std::string(to_string(a.category)));
                    } else {
                        std::string ids;
                        for (auto& t : themes) {
                            if (t.category) continue;
                            t.category = a.category;
                            ids += (ids.empty() ? "" : ",") + std::to_string(t.theme_id);
                        }
                        res.audit.push_back("#" + std::to_string(idx) + " set_category uncategorized [" + ids +
                                            "] = " + std::string(to_string(a.category)));
                    }
                } else if constexpr (std::is_same_v<A, action::MoveTopic>) {
                    Theme* from = need_theme(a.from);
                    Theme* to = need_theme(a.to);
                    if (!from->topic_ids.contains(a.topic))
                        fail("topic " + std::to_string(a.topic) + " is not in theme " + std::to_string(a.from));
                    from->topic_ids.erase(a.topic);
                    to->topic_ids.insert(a.topic);
                    res.audit.push_back("#" + std::to_string(idx) + " move topic " + std::to_string(a.topic) +
                                        " from theme " + std::to_string(a.from) + " to theme " +
                                        std::to_string(a.to));
                    prune_empty(idx);
                } else if constexpr (std::is_same_v<A, action::Split>) {
                    Theme* t = need_theme(a.theme);
                    if (a.parts.empty() || a.parts.size() != a.names.size())
                        fail("split needs one name per part");
                    std::set<int> covered;
                    std::size_t total = 0;
                    for (const auto& p : a.parts) {
                        if (p.empty()) fail("split has an empty part");
                        total += p.size();
                        covered.insert(p.begin(), p.end());
                    }
                    if (covered != t->topic_ids || total != covered.size())
                        fail("split parts do not partition the topics of theme " + std::to_string(a.theme));
                    const auto category = t->category;
                    t->topic_ids = a.parts[0];
                    t->name = a.names[0];
                    std::string created;
                    for (std::size_t p = 1; p < a.parts.size(); ++p) {
                        Theme fresh{next_id, a.names[p], a.parts[p], category};
                        created += (created.empty() ? "" : ",") + std::to_string(next_id);
                        ++next_id;
                        themes.push_back(std::move(fresh));
                    }
                    res.audit.push_back("#" + std::to_string(idx) + " split theme " + std::to_string(a.theme) +
                                        " into " + std::to_string(a.parts.size()) + " parts (new ids [" + created +
                                        "])");
                } else if constexpr (std::is_same_v<A, action::DropTopic>) {
                    Theme* t = holder_of(a.topic);
                    if (!t) fail("topic " + std::to_string(a.topic) + " is not in any theme");
                    t->topic_ids.erase(a.topic);
                    res.dropped_topics.insert(a.topic);
                    res.audit.push_back("#" + std::to_string(idx) + " drop topic " + std::to_string(a.topic) +
                                        " from theme " + std::to_string(t->theme_id));
                    prune_empty(idx);
                }
            },
            actions[idx]);
        if (partition_size(themes) + res.dropped_topics.size() != n_topics)
            throw Error("apply_adjustments: partition invariant broken after action #" + std::to_string(idx));
    }
    std::sort(themes.begin(), themes.end(), [](const Theme& a, const Theme& b) { return a.theme_id < b.theme_id; });
    res.themes = std::move(themes);
    return res;
}

FilterResult filter_dream_content(const std::vector<Theme>& themes) {
    FilterResult res;
    for (const auto& t : themes) {
        if (!t.category) throw ValidationError("theme " + std::to_string(t.theme_id) + " ('" + t.name + "') has no category");
        if (*t.category == ThemeCategory::dream_content) {
            res.themes.push_back(t);
        } else {
            res.excluded_themes.push_back(t.theme_id);
            res.excluded_topics.insert(t.topic_ids.begin(), t.topic_ids.end());
        }
    }
    if (!res.excluded_themes.empty()) {
        std::string ids;
        for (int id : res.excluded_themes) ids += (ids.empty() ? "" : ",") + std::to_string(id);
        spdlog::info("excluded non-dream themes [{}] ({} topics)", ids, res.excluded_topics.size());
    }
    return res;
}

std::map<int, std::string> review_packets(const std::vector<Theme>& themes, const TopicModel& model,
                                          std::span<const Sentence> sentences, std::uint64_t seed,
                                          std::size_t n_random) {
    std::map<SentenceRef, std::string_view> text_of;
    for (const auto& s : sentences) text_of[{s.doc_id, s.index}] = s.text;
    std::map<int, std::vector<std::string_view>> by_topic;
    for (const auto& a : model.assignments) {
        if (a.topic_id == kOutlierTopic) continue;
        if (auto it = text_of.find(a.sentence); it != text_of.end()) by_topic[a.topic_id].push_back(it->second);
    }

    std::map<int, std::string> packets;
    for (const auto& th : themes) {
        std::string out;
        out += "Theme " + std::to_string(th.theme_id) + ": " + th.name + "\n";
        out += "Category: " + std::string(th.category ? to_string(*th.category) : "uncategorized") + "\n";
        out += "Topics: " + std::to_string(th.topic_ids.size()) + "\n";
        for (int id : th.topic_ids) {
            const Topic& t = model.topic(id);
            out += "\n== Topic " + std::to_string(id) + " (" + std::to_string(t.n_sentences) + " sentences)\n";
            out += "Words:";
            for (const auto& w : t.words) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.4f", w.weight);
                out += " " + w.term + " (" + buf + ")";
            }
            out += "\nRepresentative sentences:\n";
            for (const auto& r : t.representatives) {
                auto it = text_of.find(r);
                out += "  - " + std::string(it == text_of.end() ? std::string_view("<missing>") : it->second) + "\n";
            }
            auto pool = by_topic[id];
            // Partial Fisher-Yates on splitmix64, seeded per topic.
            std::uint64_t state = seed ^ (0xA5A5A5A5ULL * static_cast<std::uint64_t>(id + 1));
            auto next = [&state] {
                std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
                z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
                z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
                return z ^ (z >> 31);
            };
            const std::size_t take = std::min(n_random, pool.size());
            for (std::size_t i = 0; i < take; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(next() % (pool.size() - i));
                std::swap(pool[i], pool[j]);
            }
            out += "Random sentences (" + std::to_string(take) + "):\n";
            for (std::size_t i = 0; i < take; ++i) out += "  - " + std::string(pool[i]) + "\n";
        }
        packets[th.theme_id] = std::move(out);
    }
    return packets;
}

std::string themes_to_json(const std::vector<Theme>& themes) {
    json arr = json::array();
    for (const auto& t : themes) {
        json j;
        j["theme_id"] = t.theme_id;
        j["name"] = t.name;
        j["category"] = t.category ? json(std::string(to_string(*t.category))) : json(nullptr);
        j["topic_ids"] = t.topic_ids;
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

std::vector<Theme> themes_from_json(std::string_view text) {
    std::vector<Theme> out;
    try {
        for (const auto& j : json::parse(text)) {
            Theme t;
            t.theme_id = j.at("theme_id").get<int>();
            t.name = j.at("name").get<std::string>();
            if (!j.at("category").is_null()) t.category = parse_theme_category(j.at("category").get<std::string>());
            t.topic_ids = j.at("topic_ids").get<std::set<int>>();
            out.push_back(std::move(t));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("themes file: ") + e.what());
    }
    return out;
}

}  // namespace oneirotax
