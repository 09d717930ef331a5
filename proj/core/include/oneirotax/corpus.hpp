#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace oneirotax {

using Timestamp = std::chrono::sys_seconds;

/// Parses an RFC-3339 instant ("2021-03-04T05:06:07Z", offsets and
/// fractional seconds accepted; fractions are truncated).
Timestamp parse_timestamp(std::string_view text);
/// Formats as "YYYY-MM-DDTHH:MM:SSZ".
std::string format_timestamp(Timestamp t);

/// One report: the analysed text is the title followed by the body.
struct Document {
    std::string doc_id;
    std::string author_id;
    std::string title;
    std::string body;
    Timestamp created_at{};
    std::vector<std::string> flairs;

    /// Title and body joined by a newline (either may be empty).
    std::string text() const;
};

struct Sentence {
    std::string doc_id;
    std::size_t index = 0;  // position within the document, from 0
    std::string text;
    std::size_t char_len = 0;  // Unicode code points
};

enum class DreamType { nightmare, recurring, lucid, vivid };
inline constexpr DreamType kAllDreamTypes[] = {DreamType::nightmare, DreamType::recurring,
                                               DreamType::lucid, DreamType::vivid};
std::string_view to_string(DreamType t);
std::optional<DreamType> parse_dream_type(std::string_view s);
using DreamTypeSet = std::set<DreamType>;

struct RejectedRecord {
    std::size_t line_number = 0;  // 1-based
    std::string raw;
    std::string error;
};

struct Corpus {
    std::vector<Document> documents;  // sorted by created_at, then doc_id
    std::vector<RejectedRecord> rejected;
};

/// Reads line-delimited JSON records. Malformed lines are collected in
/// `Corpus::rejected`; a duplicate doc_id throws ValidationError.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::string_view jsonl);
/// One JSON object per rejected line, the original fields plus "error".
std::string rejected_report_jsonl(std::span<const RejectedRecord> rejected);

std::size_t utf8_length(std::string_view s);

/// Rule-based splitter: breaks after runs of '.', '!' or '?' followed by
/// whitespace, and at newlines. A period glued to the next character
/// ("5.30", "e.g.") or ending a guarded abbreviation ("Dr.") never splits.
std::vector<std::string> split_sentences(std::string_view text);
std::vector<Sentence> segment(const Document& doc);

struct BoilerplateResult {
    std::vector<Sentence> retained;
    std::vector<std::string> removed;  // selected strings, in rank order
    std::size_t removed_occurrences = 0;
    bool exhausted = false;  // n covered every distinct string
};

/// Drops every occurrence of the n distinct sentence strings ranked by
/// (frequency desc, length asc, text asc). Order of retained sentences is
/// preserved.
BoilerplateResult filter_boilerplate(std::span<const Sentence> sentences, std::size_t n = 10000);

/// Keyword stems on the lowercased title+body, plus the nightmare and
/// recurring flairs (compared case-insensitively).
DreamTypeSet assign_dream_types(const Document& doc);

struct Dispersion {
    double mean = 0.0;
    double stddev = 0.0;  // population
    double median = 0.0;
    double max = 0.0;
};

struct CorpusStats {
    std::size_t n_documents = 0;
    std::size_t n_authors = 0;
    Dispersion sentences;
    Dispersion words;
    Dispersion characters;
};

/// Statistics over documents carrying `label`, or over all documents.
/// Sentences are counted before boilerplate filtering; words are
/// whitespace-separated tokens; characters are code points of text().
CorpusStats corpus_stats(std::span<const Document> documents,
                         std::optional<DreamType> label = std::nullopt);

}  // namespace oneirotax
