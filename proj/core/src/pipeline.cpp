#include "oneirotax/pipeline.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "oneirotax/error.hpp"
#include "oneirotax/util.hpp"

namespace oneirotax {

namespace fs = std::filesystem;
using json = nlohmann::json;

// --- configuration -------------------------------------------------------------

namespace {

/// Reads fields of one JSON object, reporting problems with their path.
class Fields {
public:
    Fields(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) fail("", "must be an object");
    }

    [[noreturn]] void fail(std::string_view key, std::string_view what) const {
        std::string path = prefix_;
        if (!key.empty()) path += (path.empty() ? "" : ".") + std::string(key);
        throw ValidationError("config field '" + (path.empty() ? std::string("<root>") : path) + "': " +
                              std::string(what));
    }

    const json* find(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    void get(const std::string& key, std::size_t& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
                fail(key, "must be a non-negative integer");
            out = v->get<std::size_t>();
        }
    }
    void get_u64(const std::string& key, std::uint64_t& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
                fail(key, "must be a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    void get(const std::string& key, int& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer()) fail(key, "must be an integer");
            out = v->get<int>();
        }
    }
    void get(const std::string& key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) fail(key, "must be a number");
            out = v->get<double>();
            if (!std::isfinite(out)) fail(key, "must be finite");
        }
    }
    void get(const std::string& key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) fail(key, "must be true or false");
            out = v->get<bool>();
        }
    }
    void get(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) fail(key, "must be a string");
            out = v->get<std::string>();
        }
    }
    template <typename Parse, typename T>
    void get_enum(const std::string& key, T& out, Parse parse) {
        std::string s;
        get(key, s);
        if (s.empty()) return;
        try {
            out = parse(s);
        } catch (const ValidationError& e) {
            fail(key, e.what());
        }
    }
    Fields child(const std::string& key) {
        static const json empty = json::object();
        const json* v = find(key);
        return Fields(v ? *v : empty, prefix_.empty() ? key : prefix_ + "." + key);
    }
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.contains(it.key())) fail(it.key(), "unknown field");
    }

private:
    const json& j_;
    std::string prefix_;
    std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

RunConfig RunConfig::from_json(std::string_view text, const fs::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    RunConfig c;
    Fields root(j, "");

    std::string corpus;
    root.get("corpus", corpus);
    if (corpus.empty()) root.fail("corpus", "is required");
    c.corpus = resolve(base_dir, corpus);
    std::string adjustments;
    root.get("adjustments", adjustments);
    if (!adjustments.empty()) c.adjustments = resolve(base_dir, adjustments);
    std::string out;
    root.get("output_dir", out);
    if (!out.empty()) c.output_dir = resolve(base_dir, out);
    if (!root.find("seed")) root.fail("seed", "is required");
    root.get_u64("seed", c.seed);
    root.get("boilerplate_n", c.boilerplate_n);

    {
        Fields f = root.child("provider");
        f.get_enum("kind", c.provider.kind, parse_provider_kind);
        f.get("location", c.provider.location);
        if (c.provider.kind == ProviderKind::file && !c.provider.location.empty())
            c.provider.location = resolve(base_dir, c.provider.location).string();
        f.get("model_name", c.provider.model_name);
        f.get("expected_dim", c.provider.expected_dim);
        f.get_u64("stub_seed", c.provider.stub_seed);
        f.get("batch_size", c.provider.batch_size);
        f.get("max_retries", c.provider.max_retries);
        std::size_t backoff = static_cast<std::size_t>(c.provider.retry_backoff.count());
        f.get("retry_backoff_ms", backoff);
        c.provider.retry_backoff = std::chrono::milliseconds(backoff);
        f.finish();
    }
    {
        Fields f = root.child("clustering");
        f.get("reduce_dim", c.topics.reduce_dim);
        f.get_enum("reduce_method", c.topics.reduce_method, parse_reduce_method);
        f.get("min_topic_size", c.topics.min_topic_size);
        f.get("min_samples", c.topics.min_samples);
        f.get("min_df", c.topics.min_df);
        f.get("mmr_diversity", c.topics.mmr_diversity);
        f.get("candidate_pool", c.topics.candidate_pool);
        f.get("top_n_words", c.topics.top_n_words);
        f.get("auto_merge", c.topics.auto_merge);
        f.get("merge_threshold", c.topics.merge_threshold);
        f.finish();
    }
    {
        Fields f = root.child("themes");
        f.get("k", c.themes.k);
        f.get("reduce_to", c.themes.reduce_to);
        f.get_enum("reduce_method", c.themes.reduce_method, parse_reduce_method);
        f.get("restarts", c.themes.restarts);
        f.get("max_iterations", c.themes.max_iterations);
        f.get("tolerance", c.themes.tolerance);
        f.finish();
    }
    {
        Fields f = root.child("taxonomy");
        f.get("delta", c.backbone_delta);
        f.get_enum("method", c.backbone_method, parse_backbone_method);
        f.finish();
    }
    {
        Fields f = root.child("odds");
        f.get_enum("method", c.odds_method, parse_odds_method);
        f.finish();
    }
    {
        Fields f = root.child("trends");
        f.get("min_monthly_docs", c.min_monthly_docs);
        f.get("window", c.smoothing_window);
        f.finish();
    }
    {
        Fields f = root.child("review");
        f.get("random_sentences", c.review_sentences);
        f.finish();
    }
    root.finish();
    c.topics.seed = c.seed;
    c.themes.seed = c.seed;
    return c;
}

RunConfig RunConfig::load(const fs::path& path) {
    if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
    return from_json(read_file(path), path.parent_path());
}

void RunConfig::validate() const {
    auto bad = [](const std::string& field, const std::string& what) {
        throw ValidationError("config field '" + field + "': " + what);
    };
    if (!fs::is_regular_file(corpus)) bad("corpus", "file not found: " + corpus.string());
    if (adjustments && !fs::is_regular_file(*adjustments))
        bad("adjustments", "file not found: " + adjustments->string());
    if (provider.kind == ProviderKind::file && !fs::is_regular_file(provider.location))
        bad("provider.location", "file not found: " + provider.location);
    if (provider.kind == ProviderKind::http && provider.location.empty()) bad("provider.location", "URL required");
    if (provider.expected_dim == 0) bad("provider.expected_dim", "must be positive");
    if (provider.batch_size == 0 || provider.batch_size > 256) bad("provider.batch_size", "must lie in [1, 256]");
    if (provider.max_retries < 0) bad("provider.max_retries", "must be non-negative");
    topics.validate();
    if (themes.k == 0) bad("themes.k", "must be positive");
    if (themes.reduce_to == 0) bad("themes.reduce_to", "must be positive");
    if (themes.restarts == 0) bad("themes.restarts", "must be positive");
    if (!(themes.tolerance >= 0.0)) bad("themes.tolerance", "must be non-negative");
    if (smoothing_window == 0 || smoothing_window % 2 == 0) bad("trends.window", "must be odd and positive");
    if (min_monthly_docs == 0) bad("trends.min_monthly_docs", "must be positive");
}

std::string RunConfig::canonical_json() const {
    json j;
    j["seed"] = seed;
    j["boilerplate_n"] = boilerplate_n;
    j["provider"] = {{"kind", to_string(provider.kind)},
                     {"location", provider.kind == ProviderKind::http ? provider.location : ""},
                     {"model_name", provider.model_name},
                     {"expected_dim", provider.expected_dim},
                     {"stub_seed", provider.stub_seed}};
    j["clustering"] = {{"reduce_dim", topics.reduce_dim},
                       {"reduce_method", to_string(topics.reduce_method)},
                       {"min_topic_size", topics.min_topic_size},
                       {"min_samples", topics.min_samples},
                       {"min_df", topics.min_df},
                       {"mmr_diversity", topics.mmr_diversity},
                       {"candidate_pool", topics.candidate_pool},
                       {"top_n_words", topics.top_n_words},
                       {"auto_merge", topics.auto_merge},
                       {"merge_threshold", topics.merge_threshold}};
    j["themes"] = {{"k", themes.k},
                   {"reduce_to", themes.reduce_to},
                   {"reduce_method", to_string(themes.reduce_method)},
                   {"restarts", themes.restarts},
                   {"max_iterations", themes.max_iterations},
                   {"tolerance", themes.tolerance}};
    j["taxonomy"] = {{"delta", backbone_delta}, {"method", to_string(backbone_method)}};
    j["odds"] = {{"method", to_string(odds_method)}};
    j["trends"] = {{"min_monthly_docs", min_monthly_docs}, {"window", smoothing_window}};
    j["review"] = {{"random_sentences", review_sentences}};
    return j.dump();
}

std::string RunConfig::hash() const { return sha256_hex(canonical_json()); }

// --- stages ----------------------------------------------------------------------

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::ingest: return "ingest";
        case Stage::embed: return "embed";
        case Stage::topics: return "topics";
        case Stage::themes: return "themes";
        case Stage::taxonomy: return "taxonomy";
        case Stage::odds: return "odds";
        case Stage::trends: return "trends";
        case Stage::report: return "report";
        case Stage::review_packet: return "review-packet";
    }
    return "unknown";
}

Stage parse_stage(std::string_view s) {
    for (Stage st : {Stage::ingest, Stage::embed, Stage::topics, Stage::themes, Stage::taxonomy, Stage::odds,
                     Stage::trends, Stage::report, Stage::review_packet})
        if (to_string(st) == s) return st;
    throw ValidationError("unknown stage '" + std::string(s) + "'");
}

std::vector<Stage> dependencies(Stage s) {
    switch (s) {
        case Stage::ingest: return {};
        case Stage::embed: return {Stage::ingest};
        case Stage::topics: return {Stage::embed};
        case Stage::themes: return {Stage::topics};
        case Stage::taxonomy:
        case Stage::odds:
        case Stage::trends:
        case Stage::review_packet: return {Stage::themes};
        case Stage::report: return {Stage::taxonomy, Stage::odds, Stage::trends};
    }
    return {};
}

// --- lock ------------------------------------------------------------------------

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    for (int attempt = 0; attempt < 2; ++attempt) {
        const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
        if (fd >= 0) {
            const std::string pid = std::to_string(::getpid()) + "\n";
            [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
            ::close(fd);
            return;
        }
        if (errno != EEXIST) throw Error("cannot create lock file " + path_.string());
        long holder = 0;
        try {
            const std::string text = read_file(path_);
            std::from_chars(text.data(), text.data() + text.size(), holder);
        } catch (const std::exception&) {
        }
        if (holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM))
            throw PreconditionError("output directory " + dir.string() + " is locked by process " +
                                    std::to_string(holder));
        spdlog::warn("removing stale lock {} (holder {} is gone)", path_.string(), holder);
        fs::remove(path_);
    }
    throw PreconditionError("could not acquire lock " + path_.string());
}

OutputLock::~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

// --- serialization helpers -------------------------------------------------------

namespace {

std::string sentences_jsonl(std::span<const Sentence> sentences) {
    std::string out;
    for (const auto& s : sentences) {
        json j = {{"doc_id", s.doc_id}, {"index", s.index}, {"text", s.text}, {"char_len", s.char_len}};
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<Sentence> parse_sentences_jsonl(std::string_view text) {
    std::vector<Sentence> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        const json j = json::parse(line);
        out.push_back({j.at("doc_id").get<std::string>(), j.at("index").get<std::size_t>(),
                       j.at("text").get<std::string>(), j.at("char_len").get<std::size_t>()});
    }
    return out;
}

json words_json(const std::vector<TopicWord>& words) {
    json arr = json::array();
    for (const auto& w : words) arr.push_back({{"term", w.term}, {"weight", w.weight}, {"score", w.score}});
    return arr;
}

std::vector<TopicWord> words_from_json(const json& arr) {
    std::vector<TopicWord> out;
    for (const auto& w : arr)
        out.push_back({w.at("term").get<std::string>(), w.at("weight").get<double>(), w.at("score").get<double>()});
    return out;
}

std::string model_json(const TopicModel& m) {
    json j;
    j["n_raw_clusters"] = m.n_raw_clusters;
    j["n_merges"] = m.n_merges;
    json topics = json::array();
    for (const auto& t : m.topics) {
        json reps = json::array();
        for (const auto& r : t.representatives) reps.push_back({{"doc_id", r.doc_id}, {"index", r.index}});
        topics.push_back({{"topic_id", t.topic_id},
                          {"n_sentences", t.n_sentences},
                          {"empty_representation", t.empty_representation},
                          {"words", words_json(t.words)},
                          {"reserve", words_json(t.reserve)},
                          {"representatives", reps}});
    }
    j["topics"] = topics;
    return j.dump(1) + "\n";
}

TopicModel model_from_files(std::string_view model_text, std::string_view assignments_text) {
    TopicModel m;
    const json j = json::parse(model_text);
    m.n_raw_clusters = j.at("n_raw_clusters").get<std::size_t>();
    m.n_merges = j.at("n_merges").get<std::size_t>();
    for (const auto& t : j.at("topics")) {
        Topic topic;
        topic.topic_id = t.at("topic_id").get<int>();
        topic.n_sentences = t.at("n_sentences").get<std::size_t>();
        topic.empty_representation = t.at("empty_representation").get<bool>();
        topic.words = words_from_json(t.at("words"));
        topic.reserve = words_from_json(t.at("reserve"));
        for (const auto& r : t.at("representatives"))
            topic.representatives.push_back({r.at("doc_id").get<std::string>(), r.at("index").get<std::size_t>()});
        m.topics.push_back(std::move(topic));
    }
    std::size_t pos = 0;
    bool header = true;
    while (pos < assignments_text.size()) {
        auto nl = assignments_text.find('\n', pos);
        if (nl == std::string_view::npos) nl = assignments_text.size();
        const auto line = assignments_text.substr(pos, nl - pos);
        pos = nl + 1;
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        const auto f = csv_split(line);
        if (f.size() != 3) throw Error("malformed assignments row: " + std::string(line));
        m.assignments.push_back({{f[0], std::stoul(f[1])}, std::stoi(f[2])});
    }
    return m;
}

std::string topic_label(const Topic& t, std::size_t n = 4) {
    std::string s;
    for (std::size_t i = 0; i < std::min(n, t.words.size()); ++i) s += (i ? ", " : "") + t.words[i].term;
    return s;
}

std::string stats_csv(std::span<const Document> docs) {
    std::string out =
        "label,n_documents,n_authors,sentences_mean,sentences_sd,sentences_median,sentences_max,"
        "words_mean,words_sd,words_median,words_max,characters_mean,characters_sd,characters_median,"
        "characters_max\n";
    auto row = [&](std::string_view label, const CorpusStats& s) {
        out += std::string(label) + "," + std::to_string(s.n_documents) + "," + std::to_string(s.n_authors);
        for (const Dispersion* d : {&s.sentences, &s.words, &s.characters})
            out += "," + format_double(d->mean) + "," + format_double(d->stddev) + "," + format_double(d->median) +
                   "," + format_double(d->max);
        out += "\n";
    };
    row("all", corpus_stats(docs));
    for (DreamType t : kAllDreamTypes) {
        try {
            row(to_string(t), corpus_stats(docs, t));
        } catch (const PreconditionError&) {
            spdlog::info("corpus stats: no documents labelled {}", to_string(t));
        }
    }
    return out;
}

std::string documents_csv(std::span<const Document> docs) {
    std::string out = "doc_id,author_id,created_at,dream_types\n";
    for (const auto& d : docs) {
        std::string types;
        for (DreamType t : assign_dream_types(d)) types += (types.empty() ? "" : ";") + std::string(to_string(t));
        out += csv_escape(d.doc_id) + "," + csv_escape(d.author_id) + "," + format_timestamp(d.created_at) + "," +
               types + "\n";
    }
    return out;
}

std::string lines_text(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    return out;
}

std::string now_rfc3339() {
    return format_timestamp(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

}  // namespace

// --- pipeline --------------------------------------------------------------------

namespace {

/// Per-run state shared by the stage bodies.
class Runner {
public:
    Runner(const RunConfig& config, const fs::path& cache_dir) : config_(config), cache_dir_(cache_dir) {
        const auto mpath = config_.output_dir / "manifest.json";
        if (fs::exists(mpath)) {
            try {
                manifest_ = json::parse(read_file(mpath));
            } catch (const json::exception& e) {
                throw ValidationError("manifest " + mpath.string() + " is unreadable: " + e.what());
            }
        }
        if (!manifest_.is_object()) manifest_ = json::object();
    }

    void run(Stage stage) {
        check_dependencies(stage);
        record_ = json::object();
        outputs_ = json::object();
        summary_ = json::object();
        switch (stage) {
            case Stage::ingest: ingest(); break;
            case Stage::embed: embed(); break;
            case Stage::topics: topics(); break;
            case Stage::themes: themes(); break;
            case Stage::taxonomy: taxonomy(); break;
            case Stage::odds: odds(); break;
            case Stage::trends: trends(); break;
            case Stage::report: report(); break;
            case Stage::review_packet: review_packet(); break;
        }
        record_["key"] = stage_key(stage);
        record_["outputs"] = outputs_;
        record_["summary"] = summary_;
        manifest_["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
        manifest_["config_hash"] = config_.hash();
        manifest_["seed"] = config_.seed;
        json inputs = {{"corpus", {{"file", config_.corpus.filename().string()}, {"sha256", corpus_sha()}}}};
        inputs["adjustments"] = config_.adjustments
                                    ? json{{"file", config_.adjustments->filename().string()},
                                           {"sha256", adjustments_sha()}}
                                    : json(nullptr);
        manifest_["inputs"] = inputs;
        manifest_["stages"][std::string(to_string(stage))] = record_;
        write_file_atomic(config_.output_dir / "manifest.json", manifest_.dump(2) + "\n");
    }

private:
    // -- keys and gates

    const std::string& corpus_sha() {
        if (corpus_sha_.empty()) corpus_sha_ = file_sha256_hex(config_.corpus);
        return corpus_sha_;
    }
    std::string adjustments_sha() {
        if (!config_.adjustments) return "";
        if (adjustments_sha_.empty()) adjustments_sha_ = file_sha256_hex(*config_.adjustments);
        return adjustments_sha_;
    }

    std::string stage_key(Stage s) {
        const json cfg = json::parse(config_.canonical_json());
        json k;
        k["stage"] = to_string(s);
        switch (s) {
            case Stage::ingest:
                k["corpus"] = corpus_sha();
                k["boilerplate_n"] = cfg["boilerplate_n"];
                break;
            case Stage::embed: k["provider"] = cfg["provider"]; break;
            case Stage::topics:
                k["provider"] = cfg["provider"];
                k["clustering"] = cfg["clustering"];
                k["seed"] = cfg["seed"];
                break;
            case Stage::themes:
                k["themes"] = cfg["themes"];
                k["seed"] = cfg["seed"];
                k["adjustments"] = adjustments_sha();
                break;
            case Stage::taxonomy: k["taxonomy"] = cfg["taxonomy"]; break;
            case Stage::odds: k["odds"] = cfg["odds"]; break;
            case Stage::trends: k["trends"] = cfg["trends"]; break;
            case Stage::review_packet:
                k["review"] = cfg["review"];
                k["seed"] = cfg["seed"];
                break;
            case Stage::report: break;
        }
        for (Stage d : dependencies(s)) k["deps"][std::string(to_string(d))] = stage_key(d);
        return sha256_hex(k.dump());
    }

    void check_dependencies(Stage s) {
        for (Stage d : dependencies(s)) {
            const std::string name(to_string(d));
            auto stages = manifest_.find("stages");
            if (stages == manifest_.end() || !stages->contains(name))
                throw DependencyError(name, "stage '" + std::string(to_string(s)) + "' needs stage '" + name +
                                                "', which has not been run");
            const json& rec = (*stages)[name];
            if (rec.value("key", "") != stage_key(d))
                throw DependencyError(name, "stage '" + name +
                                                "' is stale (configuration or inputs changed); rerun it");
            for (const auto& [rel, sha] : rec.at("outputs").items()) {
                const fs::path p = config_.output_dir / rel;
                if (!fs::exists(p) || file_sha256_hex(p) != sha.get<std::string>())
                    throw DependencyError(name, "output " + rel + " of stage '" + name + "' is missing or modified");
            }
        }
    }

    void emit(const std::string& rel, std::string_view content) {
        write_file_atomic(config_.output_dir / rel, content);
        outputs_[rel] = sha256_hex(content);
    }

    std::string input(const std::string& rel) const { return read_file(config_.output_dir / rel); }

    // -- shared loaders

    Corpus& corpus() {
        if (!corpus_) corpus_ = load_corpus(config_.corpus);
        return *corpus_;
    }
    std::vector<Sentence> sentences() const { return parse_sentences_jsonl(input("ingest/sentences.jsonl")); }
    TopicModel model() const { return model_from_files(input("topics/model.json"), input("topics/assignments.csv")); }
    EmbeddingProvider& provider() {
        if (!provider_) provider_ = make_provider(config_.provider);
        return *provider_;
    }
    EmbeddingCache& cache() {
        if (!cache_) cache_.emplace(cache_dir_);
        return *cache_;
    }

    struct Analysis {
        TopicModel model;
        std::vector<Theme> themes;  // dream_content only
        EntityMap topic_map, theme_map;
        Profiles topic_profiles, theme_profiles;
        std::map<int, std::string> topic_labels, theme_labels;
    };

    Analysis analysis() {
        Analysis a;
        a.model = model();
        const auto all = themes_from_json(input("themes/themes.json"));
        a.themes = filter_dream_content(all).themes;
        if (a.themes.empty()) throw ValidationError("no theme is categorized as dream_content");
        a.topic_map = EntityMap::for_topics(a.themes);
        a.theme_map = EntityMap::for_themes(a.themes);
        const auto& docs = corpus().documents;
        a.topic_profiles = build_profiles(docs, a.model.assignments, a.topic_map);
        a.theme_profiles = build_profiles(docs, a.model.assignments, a.theme_map);
        for (const auto& t : a.model.topics) a.topic_labels[t.topic_id] = topic_label(t);
        for (const auto& th : a.themes) a.theme_labels[th.theme_id] = th.name;
        return a;
    }

    // -- stage bodies

    void ingest() {
        Corpus& c = corpus();
        if (c.documents.empty()) throw ValidationError("corpus " + config_.corpus.string() + " has no valid documents");
        std::vector<Sentence> all;
        for (const auto& d : c.documents) {
            auto s = segment(d);
            all.insert(all.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
        }
        const auto filtered = filter_boilerplate(all, config_.boilerplate_n);
        std::map<std::string_view, std::size_t> freq;
        for (const auto& s : all) ++freq[s.text];
        std::string removed = "rank,count,text\n";
        for (std::size_t i = 0; i < filtered.removed.size(); ++i)
            removed += std::to_string(i + 1) + "," + std::to_string(freq[filtered.removed[i]]) + "," +
                       csv_escape(filtered.removed[i]) + "\n";

        emit("ingest/sentences.jsonl", sentences_jsonl(filtered.retained));
        emit("ingest/boilerplate_removed.csv", removed);
        emit("ingest/rejected.jsonl", rejected_report_jsonl(c.rejected));
        emit("ingest/documents.csv", documents_csv(c.documents));
        emit("ingest/corpus_stats.csv", stats_csv(c.documents));
        summary_ = {{"documents", c.documents.size()},
                    {"rejected", c.rejected.size()},
                    {"sentences_segmented", all.size()},
                    {"sentences_retained", filtered.retained.size()},
                    {"boilerplate_strings_removed", filtered.removed.size()},
                    {"boilerplate_occurrences_removed", filtered.removed_occurrences}};
        manifest_["timestamps"] = {{"corpus_first", format_timestamp(c.documents.front().created_at)},
                                   {"corpus_last", format_timestamp(c.documents.back().created_at)}};
        if (!c.rejected.empty()) spdlog::warn("ingest: {} malformed records rejected", c.rejected.size());
    }

    void embed() {
        const auto sents = sentences();
        if (sents.empty()) throw PreconditionError("no sentences survived preprocessing");
        std::vector<std::string> texts;
        texts.reserve(sents.size());
        for (const auto& s : sents) texts.push_back(s.text);
        const EmbeddingMatrix m = embed_texts(provider(), texts, &cache(), config_.provider.batch_size);
        cache().flush();
        emit("embed/sentences.emb1", encode_emb1(m));
        summary_ = {{"rows", m.rows()}, {"dim", m.dim}, {"model", provider().model_name()}};
    }

    void topics() {
        const auto sents = sentences();
        const EmbeddingMatrix m = decode_emb1(input("embed/sentences.emb1"));
        if (m.rows() != sents.size())
            throw DependencyError("embed", "embedding rows (" + std::to_string(m.rows()) + ") do not match sentences (" +
                                               std::to_string(sents.size()) + "); rerun embed");
        const TopicModel model = extract_topics(sents, m, provider(), &cache(), config_.topics);
        cache().flush();
        std::size_t outliers = 0;
        for (const auto& a : model.assignments) outliers += a.topic_id == kOutlierTopic ? 1 : 0;
        emit("topics/topics.csv", topic_table_csv(model, config_.topics.top_n_words));
        emit("topics/representatives.jsonl", representatives_jsonl(model, sents));
        emit("topics/assignments.csv", assignments_csv(model));
        emit("topics/model.json", model_json(model));
        summary_ = {{"topics", model.topics.size()},
                    {"raw_clusters", model.n_raw_clusters},
                    {"merges", model.n_merges},
                    {"outlier_sentences", outliers}};
    }

    void themes() {
        const TopicModel m = model();
        std::vector<TopicEmbedding> embs;
        std::vector<std::string> audit;
        for (const auto& t : m.topics) {
            if (t.empty_representation || t.words.empty()) {
                audit.push_back("topic " + std::to_string(t.topic_id) + " has no words and is left out of themes");
                continue;
            }
            embs.push_back(topic_embedding(t, provider(), &cache()));
        }
        cache().flush();
        ThemeClusteringParams p = config_.themes;
        p.seed = config_.seed;
        ThemeClustering clustering = cluster_topics(embs, p);
        name_themes(clustering.themes, m);
        emit("themes/initial_themes.json", themes_to_json(clustering.themes));

        std::vector<Theme> final_themes = clustering.themes;
        std::size_t dropped = 0;
        if (config_.adjustments) {
            AdjustmentScript script = AdjustmentScript::load(*config_.adjustments);
            AdjustmentResult r = apply_adjustments(std::move(final_themes), script, embs.size());
            final_themes = std::move(r.themes);
            dropped = r.dropped_topics.size();
            audit.insert(audit.end(), r.audit.begin(), r.audit.end());
        } else {
            audit.push_back("no adjustments file; themes are uncategorized");
        }
        emit("themes/themes.json", themes_to_json(final_themes));
        emit("themes/adjustments_audit.txt", lines_text(audit));
        std::size_t dream = 0;
        for (const auto& t : final_themes)
            dream += t.category == ThemeCategory::dream_content ? 1 : 0;
        summary_ = {{"initial_themes", clustering.themes.size()},
                    {"themes", final_themes.size()},
                    {"dream_content_themes", dream},
                    {"dropped_topics", dropped},
                    {"kmeans_inertia", clustering.inertia}};
    }

    void taxonomy() {
        Analysis a = analysis();
        const auto topic_rows = frequency_table(a.topic_profiles.docs, a.topic_map);
        const auto theme_rows = frequency_table(a.theme_profiles.docs, a.theme_map);
        const WeightedGraph g = cooccurrence(a.theme_profiles.docs, a.theme_map);
        const WeightedGraph b = backbone(g, config_.backbone_delta, config_.backbone_method);

        std::string scores = "source,target,weight,expected,sdev,z\n";
        for (const auto& s : noise_corrected_scores(g))
            scores += std::to_string(s.u) + "," + std::to_string(s.v) + "," + std::to_string(s.weight) + "," +
                      format_double(s.expected) + "," + format_double(s.sdev) + "," + format_double(s.z) + "\n";
        std::map<int, GexfNodeInfo> info;
        for (const auto& r : theme_rows) info[r.entity] = {a.theme_labels[r.entity], r.n_docs};

        emit("taxonomy/topic_frequency.csv", frequency_csv(topic_rows, Level::topic, a.topic_labels));
        emit("taxonomy/theme_frequency.csv", frequency_csv(theme_rows, Level::theme, a.theme_labels));
        emit("taxonomy/cooccurrence.csv", edge_csv(g));
        emit("taxonomy/edge_scores.csv", scores);
        emit("taxonomy/backbone.csv", edge_csv(b));
        emit("taxonomy/backbone.gexf", gexf_xml(b, info));
        emit("taxonomy/audit.txt", lines_text(a.topic_profiles.audit));
        summary_ = {{"nodes", g.nodes.size()},
                    {"edges", g.edges.size()},
                    {"backbone_edges", b.edges.size()},
                    {"delta", config_.backbone_delta},
                    {"method", to_string(config_.backbone_method)}};
    }

    std::pair<std::vector<OddsRatioRecord>, std::vector<std::string>> odds_for(std::span<const DocProfile> docs,
                                                                               const EntityMap& map) {
        std::vector<OddsRatioRecord> out;
        std::vector<std::string> audit;
        for (DreamType t : kAllDreamTypes) {
            try {
                for (int e : map.entities) out.push_back(odds_ratio(t, e, docs, config_.odds_method));
            } catch (const PreconditionError& err) {
                audit.push_back(std::string(to_string(map.level)) + " level, " + std::string(to_string(t)) +
                                ": skipped (" + err.what() + ")");
            }
        }
        return {out, audit};
    }

    void odds() {
        Analysis a = analysis();
        auto [topic_or, audit_t] = odds_for(a.topic_profiles.docs, a.topic_map);
        auto [theme_or, audit_th] = odds_for(a.theme_profiles.docs, a.theme_map);
        audit_t.insert(audit_t.end(), audit_th.begin(), audit_th.end());
        emit("odds/odds_topics.csv", odds_csv(topic_or, a.topic_labels));
        emit("odds/odds_themes.csv", odds_csv(theme_or, a.theme_labels));
        emit("odds/audit.txt", lines_text(audit_t));
        std::size_t undefined = 0;
        for (const auto& r : topic_or) undefined += r.defined() ? 0 : 1;
        for (const auto& r : theme_or) undefined += r.defined() ? 0 : 1;
        summary_ = {{"records", topic_or.size() + theme_or.size()},
                    {"undefined", undefined},
                    {"method", to_string(config_.odds_method)}};
    }

    void trends() {
        Analysis a = analysis();
        const auto mt = monthly_importance(a.topic_profiles.docs, a.topic_map.entities, config_.min_monthly_docs);
        const auto mth = monthly_importance(a.theme_profiles.docs, a.theme_map.entities, config_.min_monthly_docs);
        std::vector<TrendSeries> ts, tth;
        for (int e : a.topic_map.entities) ts.push_back(trend_series(e, mt, config_.smoothing_window));
        for (int e : a.theme_map.entities) tth.push_back(trend_series(e, mth, config_.smoothing_window));
        std::string months = "month,n_docs\n";
        for (std::size_t i = 0; i < mt.months.size(); ++i)
            months += mt.months[i].str() + "," + std::to_string(mt.n_docs[i]) + "\n";
        emit("trends/months.csv", months);
        emit("trends/trends_topics.csv", trend_long_csv(ts));
        emit("trends/trends_themes.csv", trend_long_csv(tth));
        emit("trends/trend_matrix_topics.csv", trend_matrix_csv(ts));
        emit("trends/trend_matrix_themes.csv", trend_matrix_csv(tth));
        emit("trends/audit.txt", lines_text(mt.audit));
        summary_ = {{"months", mt.months.size()},
                    {"excluded_months", mt.audit.size()},
                    {"first_month", mt.months.front().str()},
                    {"last_month", mt.months.back().str()}};
    }

    void review_packet() {
        const TopicModel m = model();
        const auto initial = themes_from_json(input("themes/initial_themes.json"));
        const auto sents = sentences();
        const auto packets = review_packets(initial, m, sents, config_.seed, config_.review_sentences);
        for (const auto& [id, text] : packets) {
            char name[64];
            std::snprintf(name, sizeof name, "review/theme_%02d.txt", id);
            emit(name, text);
        }
        summary_ = {{"packets", packets.size()}};
    }

    void report() {
        const json& stages = manifest_.at("stages");
        std::string s;
        s += std::string(kToolName) + " " + std::string(kToolVersion) + " report\n";
        s += "config_hash: " + config_.hash() + "\n";
        s += "seed: " + std::to_string(config_.seed) + "\n";
        s += "corpus: " + config_.corpus.filename().string() + " (sha256 " + corpus_sha() + ")\n";
        if (manifest_.contains("timestamps"))
            s += "corpus span: " + manifest_["timestamps"].value("corpus_first", "") + " .. " +
                 manifest_["timestamps"].value("corpus_last", "") + "\n";
        for (const char* name : {"ingest", "embed", "topics", "themes", "taxonomy", "odds", "trends"}) {
            if (!stages.contains(name)) continue;
            s += "\n[" + std::string(name) + "]\n";
            for (const auto& [k, v] : stages[name].at("summary").items())
                s += "  " + k + ": " + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
        }
        emit("report/summary.txt", s);
        for (const char* name : {"ingest", "topics", "taxonomy", "odds", "trends"}) {
            if (!stages.contains(name)) continue;
            for (const auto& [rel, sha] : stages[name].at("outputs").items()) {
                if (fs::path(rel).extension() != ".csv") continue;
                emit("report/" + std::string(name) + "_" + fs::path(rel).filename().string(), input(rel));
            }
        }
        summary_ = {{"files", outputs_.size()}};
    }

    const RunConfig& config_;
    fs::path cache_dir_;
    json manifest_;
    json record_, outputs_, summary_;
    std::string corpus_sha_, adjustments_sha_;
    std::optional<Corpus> corpus_;
    std::unique_ptr<EmbeddingProvider> provider_;
    std::optional<EmbeddingCache> cache_;
};

}  // namespace

Pipeline::Pipeline(RunConfig config, std::optional<fs::path> cache_dir)
    : config_(std::move(config)), cache_dir_(cache_dir ? *cache_dir : config_.output_dir / "cache") {}

fs::path Pipeline::manifest_path() const { return config_.output_dir / "manifest.json"; }

void Pipeline::run(Stage stage) {
    config_.validate();
    OutputLock lock(config_.output_dir);
    const auto started = std::chrono::steady_clock::now();
    const std::string started_at = now_rfc3339();
    auto log = [&](const std::string& status) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        const json entry = {{"stage", to_string(stage)}, {"started", started_at}, {"finished", now_rfc3339()},
                            {"seconds", secs}, {"status", status}};
        if (std::FILE* f = std::fopen((config_.output_dir / "run_log.jsonl").c_str(), "a")) {
            std::fputs((entry.dump() + "\n").c_str(), f);
            std::fclose(f);
        }
        return secs;
    };
    try {
        Runner(config_, cache_dir_).run(stage);
    } catch (const std::exception& e) {
        log(std::string("failed: ") + e.what());
        throw;
    }
    spdlog::info("stage {} finished in {:.2f}s", to_string(stage), log("ok"));
}

void Pipeline::run_all() {
    for (Stage s : kAllStages) run(s);
}

}  // namespace oneirotax
