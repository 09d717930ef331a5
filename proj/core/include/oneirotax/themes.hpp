#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "oneirotax/embedding.hpp"
#include "oneirotax/reduce.hpp"
#include "oneirotax/topics.hpp"

namespace oneirotax {

enum class ThemeCategory { dream_content, dream_type, interface, waking, social_artifact };
std::string_view to_string(ThemeCategory c);
ThemeCategory parse_theme_category(std::string_view s);

struct TopicEmbedding {
    int topic_id = 0;
    std::vector<double> vector;
};

struct Theme {
    int theme_id = 0;
    std::string name;
    std::set<int> topic_ids;
    std::optional<ThemeCategory> category;
};

/// Weighted sum of the term embeddings of a topic's words. Terms are
/// summed in lexicographic order so the result does not depend on the
/// order of `topic.words`. Requires the weights to sum to 1 (within 1e-9).
TopicEmbedding topic_embedding(const Topic& topic, EmbeddingProvider& provider, EmbeddingCache* cache = nullptr);

struct ThemeClusteringParams {
    std::size_t k = 20;
    std::size_t reduce_to = 10;
    ReduceMethod reduce_method = ReduceMethod::pca;
    std::size_t restarts = 100;
    std::size_t max_iterations = 300;
    double tolerance = 1e-6;
    std::uint64_t seed = 0;
};

struct ThemeClustering {
    std::vector<Theme> themes;  // uncategorized, numbered by smallest member topic
    double inertia = 0.0;
    std::vector<double> inertia_history;
};

/// Standardize, reduce and k-means the topic embeddings.
ThemeClustering cluster_topics(std::span<const TopicEmbedding> embeddings, const ThemeClusteringParams& params);

/// Names each theme by the leading terms of its (up to) three largest
/// topics, joined with ", ".
void name_themes(std::vector<Theme>& themes, const TopicModel& model);

// --- human adjustments ---------------------------------------------------------

namespace action {
struct Rename {
    int theme;
    std::string name;
};
/// theme == nullopt stands for "*": every currently uncategorized theme.
struct SetCategory {
    std::optional<int> theme;
    ThemeCategory category;
};
struct MoveTopic {
    int topic;
    int from;
    int to;
};
/// The first part keeps the theme id; later parts get fresh ids.
struct Split {
    int theme;
    std::vector<std::set<int>> parts;
    std::vector<std::string> names;
};
struct DropTopic {
    int topic;
};
}  // namespace action

using AdjustmentAction =
    std::variant<action::Rename, action::SetCategory, action::MoveTopic, action::Split, action::DropTopic>;

class AdjustmentScript {
public:
    AdjustmentScript() = default;
    explicit AdjustmentScript(std::vector<AdjustmentAction> actions) : actions_(std::move(actions)) {}

    /// One JSON object per line, e.g. {"action":"move_topic","topic":0,"from":2,"to":5}.
    /// Blank lines and lines starting with '#' are skipped.
    static AdjustmentScript parse(std::string_view jsonl);
    static AdjustmentScript load(const std::filesystem::path& path);

    const std::vector<AdjustmentAction>& actions() const noexcept { return actions_; }
    bool consumed() const noexcept { return consumed_; }
    /// Marks the script used; throws PreconditionError the second time.
    void consume();

private:
    std::vector<AdjustmentAction> actions_;
    bool consumed_ = false;
};

struct AdjustmentResult {
    std::vector<Theme> themes;
    std::set<int> dropped_topics;
    std::vector<std::string> audit;
};

/// Applies the script in order. A reference to a missing theme/topic throws
/// ValidationError naming the action index; a consumed script throws
/// PreconditionError. Themes emptied by moves or drops are removed (and
/// audited). `n_topics` is used to check the partition invariant.
AdjustmentResult apply_adjustments(std::vector<Theme> themes, AdjustmentScript& script, std::size_t n_topics);

struct FilterResult {
    std::vector<Theme> themes;  // dream_content only
    std::vector<int> excluded_themes;
    std::set<int> excluded_topics;
};

/// Keeps dream_content themes. Throws ValidationError on an uncategorized theme.
FilterResult filter_dream_content(const std::vector<Theme>& themes);

/// Per-theme review text: topic words, three representative sentences and
/// up to `n_random` seeded random sentences per topic.
std::map<int, std::string> review_packets(const std::vector<Theme>& themes, const TopicModel& model,
                                          std::span<const Sentence> sentences, std::uint64_t seed,
                                          std::size_t n_random = 20);

std::string themes_to_json(const std::vector<Theme>& themes);
std::vector<Theme> themes_from_json(std::string_view json_text);

}  // namespace oneirotax
