#include "oneirotax/profile.hpp"

#include <algorithm>
#include <unordered_map>

#include "oneirotax/error.hpp"

namespace oneirotax {

std::string_view to_string(Level l) { return l == Level::topic ? "topic" : "theme"; }

Level parse_level(std::string_view s) {
    if (s == "topic") return Level::topic;
    if (s == "theme") return Level::theme;
    throw ValidationError("unknown level '" + std::string(s) + "' (expected topic or theme)");
}

EntityMap EntityMap::for_topics(const std::vector<Theme>& themes) {
    EntityMap m;
    m.level = Level::topic;
    for (const auto& th : themes)
        for (int t : th.topic_ids) m.of_topic[t] = t;
    for (const auto& [t, e] : m.of_topic) m.entities.push_back(e);
    return m;
}

EntityMap EntityMap::for_themes(const std::vector<Theme>& themes) {
    EntityMap m;
    m.level = Level::theme;
    for (const auto& th : themes) {
        m.entities.push_back(th.theme_id);
        for (int t : th.topic_ids) m.of_topic[t] = th.theme_id;
    }
    std::sort(m.entities.begin(), m.entities.end());
    return m;
}

const int* EntityMap::find(int topic_id) const {
    auto it = of_topic.find(topic_id);
    return it == of_topic.end() ? nullptr : &it->second;
}

Profiles build_profiles(std::span<const Document> docs, std::span<const SentenceAssignment> assignments,
                        const EntityMap& map) {
    Profiles out;
    std::unordered_map<std::string_view, std::size_t> index;
    out.docs.reserve(docs.size());
    for (const auto& d : docs) {
        index.emplace(d.doc_id, out.docs.size());
        out.docs.push_back({d.doc_id, d.author_id, d.created_at, assign_dream_types(d), 0, {}});
    }
    for (const auto& a : assignments) {
        auto it = index.find(a.sentence.doc_id);
        if (it == index.end())
            throw PreconditionError("assignment refers to unknown document '" + a.sentence.doc_id + "'");
        DocProfile& p = out.docs[it->second];
        ++p.n_sentences;
        if (a.topic_id == kOutlierTopic) continue;
        if (const int* e = map.find(a.topic_id)) ++p.hits[*e];
    }
    std::erase_if(out.docs, [&](const DocProfile& p) {
        if (p.n_sentences > 0) return false;
        out.audit.push_back("document " + p.doc_id + " has no surviving sentences; excluded from analytics");
        return true;
    });
    return out;
}

}  // namespace oneirotax
