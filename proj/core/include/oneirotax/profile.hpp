#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oneirotax/corpus.hpp"
#include "oneirotax/themes.hpp"
#include "oneirotax/topics.hpp"

namespace oneirotax {

enum class Level { topic, theme };
std::string_view to_string(Level l);
Level parse_level(std::string_view s);

/// Which entity (topic or theme id) each topic counts toward. Only topics
/// of the given themes are mapped; everything else is ignored.
struct EntityMap {
    Level level = Level::topic;
    std::vector<int> entities;  // ascending
    std::map<int, int> of_topic;

    static EntityMap for_topics(const std::vector<Theme>& themes);
    static EntityMap for_themes(const std::vector<Theme>& themes);

    /// Entity of `topic_id`, or nullptr when unmapped.
    const int* find(int topic_id) const;
};

struct DocProfile {
    std::string doc_id;
    std::string author_id;
    Timestamp created_at{};
    DreamTypeSet types;
    std::size_t n_sentences = 0;          // surviving sentences, outliers included
    std::map<int, std::size_t> hits;      // entity -> sentences carrying it
};

struct Profiles {
    std::vector<DocProfile> docs;         // corpus order
    std::vector<std::string> audit;       // documents excluded for having no sentences
};

Profiles build_profiles(std::span<const Document> docs, std::span<const SentenceAssignment> assignments,
                        const EntityMap& map);

}  // namespace oneirotax
