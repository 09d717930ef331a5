#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oneirotax/analytics.hpp"
#include "oneirotax/embedding.hpp"
#include "oneirotax/taxonomy.hpp"
#include "oneirotax/themes.hpp"
#include "oneirotax/topics.hpp"

namespace oneirotax {

inline constexpr std::string_view kToolName = "oneirotax";
inline constexpr std::string_view kToolVersion = "0.1.0";

struct RunConfig {
    std::filesystem::path corpus;
    std::optional<std::filesystem::path> adjustments;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 0;
    std::size_t boilerplate_n = 10000;
    ProviderConfig provider;
    ClusteringParams topics;
    ThemeClusteringParams themes;
    double backbone_delta = 3.8;
    BackboneMethod backbone_method = BackboneMethod::noise_corrected;
    OddsMethod odds_method = OddsMethod::importance;
    std::size_t min_monthly_docs = 300;
    std::size_t smoothing_window = 5;
    std::size_t review_sentences = 20;

    /// Relative paths are resolved against `base_dir`. Unknown keys and
    /// bad values throw ValidationError naming the field path.
    static RunConfig from_json(std::string_view text, const std::filesystem::path& base_dir = {});
    static RunConfig load(const std::filesystem::path& path);

    /// Checks value ranges and that referenced input files exist.
    void validate() const;
    /// Stable JSON of every parameter except the output directory.
    std::string canonical_json() const;
    std::string hash() const;
};

enum class Stage { ingest, embed, topics, themes, taxonomy, odds, trends, report, review_packet };
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);
/// Stages that must have completed (with the current configuration) first.
std::vector<Stage> dependencies(Stage s);
inline constexpr Stage kAllStages[] = {Stage::ingest, Stage::embed,  Stage::topics, Stage::themes,
                                       Stage::taxonomy, Stage::odds, Stage::trends, Stage::report};

/// Holds the output-directory lock for its lifetime.
class OutputLock {
public:
    explicit OutputLock(const std::filesystem::path& dir);
    ~OutputLock();
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    std::filesystem::path path_;
};

class Pipeline {
public:
    /// `cache_dir` defaults to <output_dir>/cache.
    Pipeline(RunConfig config, std::optional<std::filesystem::path> cache_dir = std::nullopt);

    /// Runs one stage. Throws DependencyError when a prerequisite stage is
    /// missing or stale, ValidationError/PreconditionError on bad input.
    void run(Stage stage);
    void run_all();

    const RunConfig& config() const noexcept { return config_; }
    std::filesystem::path manifest_path() const;

private:
    RunConfig config_;
    std::filesystem::path cache_dir_;
};

}  // namespace oneirotax
