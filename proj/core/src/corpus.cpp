#include "oneirotax/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "oneirotax/error.hpp"
#include "oneirotax/util.hpp"

namespace oneirotax {

using json = nlohmann::json;

namespace {

int parse_digits(std::string_view s, std::size_t pos, std::size_t count) {
    if (pos + count > s.size()) throw ValidationError("timestamp too short");
    int v = 0;
    for (std::size_t i = pos; i < pos + count; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i])))
            throw ValidationError("timestamp: expected digit at offset " + std::to_string(i));
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

void expect_char(std::string_view s, std::size_t pos, std::string_view allowed) {
    if (pos >= s.size() || allowed.find(s[pos]) == std::string_view::npos)
        throw ValidationError("timestamp: unexpected character at offset " + std::to_string(pos));
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\v' || c == '\f' || c == '\r' || c == '\n'; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string lower_ascii(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

Timestamp parse_timestamp(std::string_view s) {
    using namespace std::chrono;
    s = trim(s);
    const int yr = parse_digits(s, 0, 4);
    expect_char(s, 4, "-");
    const int mo = parse_digits(s, 5, 2);
    expect_char(s, 7, "-");
    const int dy = parse_digits(s, 8, 2);
    expect_char(s, 10, "Tt ");
    const int hh = parse_digits(s, 11, 2);
    expect_char(s, 13, ":");
    const int mm = parse_digits(s, 14, 2);
    expect_char(s, 16, ":");
    const int ss = parse_digits(s, 17, 2);
    std::size_t pos = 19;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        const std::size_t start = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos == start) throw ValidationError("timestamp: empty fraction");
    }
    if (pos >= s.size()) throw ValidationError("timestamp: missing zone designator");
    int offset_sec = 0;
    if (s[pos] == 'Z' || s[pos] == 'z') {
        ++pos;
    } else {
        expect_char(s, pos, "+-");
        const int sign = s[pos] == '-' ? -1 : 1;
        const int oh = parse_digits(s, pos + 1, 2);
        expect_char(s, pos + 3, ":");
        const int om = parse_digits(s, pos + 4, 2);
        if (oh > 23 || om > 59) throw ValidationError("timestamp: bad offset");
        offset_sec = sign * (oh * 3600 + om * 60);
        pos += 6;
    }
    if (pos != s.size()) throw ValidationError("timestamp: trailing characters");

    const year_month_day ymd{year{yr}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(dy)}};
    if (!ymd.ok()) throw ValidationError("timestamp: invalid calendar date");
    if (hh > 23 || mm > 59 || ss > 60) throw ValidationError("timestamp: invalid time of day");
    const sys_seconds local = sys_days{ymd} + hours{hh} + minutes{mm} + seconds{std::min(ss, 59)};
    return local - seconds{offset_sec};
}

std::string format_timestamp(Timestamp t) {
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss tod{t - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                  static_cast<int>(tod.seconds().count()));
    return buf;
}

std::string Document::text() const {
    if (title.empty()) return body;
    if (body.empty()) return title;
    return title + "\n" + body;
}

std::string_view to_string(DreamType t) {
    switch (t) {
        case DreamType::nightmare: return "nightmare";
        case DreamType::recurring: return "recurring";
        case DreamType::lucid: return "lucid";
        case DreamType::vivid: return "vivid";
    }
    return "unknown";
}

std::optional<DreamType> parse_dream_type(std::string_view s) {
    for (auto t : kAllDreamTypes)
        if (to_string(t) == s) return t;
    return std::nullopt;
}

namespace {

Document document_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("record is not a JSON object");
    auto str_field = [&](const char* key) -> std::string {
        auto it = j.find(key);
        if (it == j.end()) throw ValidationError(std::string("missing field '") + key + "'");
        if (!it->is_string()) throw ValidationError(std::string("field '") + key + "' is not a string");
        return it->get<std::string>();
    };
    Document d;
    d.doc_id = str_field("doc_id");
    d.author_id = str_field("author_id");
    d.title = str_field("title");
    d.body = str_field("body");
    d.created_at = parse_timestamp(str_field("created_at"));
    if (auto it = j.find("flairs"); it != j.end()) {
        if (!it->is_array()) throw ValidationError("field 'flairs' is not an array");
        for (const auto& f : *it) {
            if (!f.is_string()) throw ValidationError("field 'flairs' holds a non-string");
            d.flairs.push_back(f.get<std::string>());
        }
    } else {
        throw ValidationError("missing field 'flairs'");
    }
    if (trim(d.doc_id).empty()) throw ValidationError("empty doc_id");
    if (trim(d.title).empty() && trim(d.body).empty()) throw ValidationError("title and body are empty");
    return d;
}

}  // namespace

Corpus parse_corpus(std::string_view jsonl) {
    Corpus corpus;
    std::unordered_set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < jsonl.size()) {
        auto nl = jsonl.find('\n', pos);
        if (nl == std::string_view::npos) nl = jsonl.size();
        std::string_view line = jsonl.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        std::optional<Document> doc;
        try {
            doc = document_from_json(json::parse(line));
        } catch (const json::exception& e) {
            corpus.rejected.push_back({line_no, std::string(line), std::string("malformed JSON: ") + e.what()});
        } catch (const ValidationError& e) {
            corpus.rejected.push_back({line_no, std::string(line), e.what()});
        }
        if (!doc) continue;
        if (!seen.insert(doc->doc_id).second)
            throw ValidationError("duplicate doc_id '" + doc->doc_id + "' at line " + std::to_string(line_no));
        corpus.documents.push_back(std::move(*doc));
    }
    for (const auto& r : corpus.rejected)
        spdlog::warn("corpus line {}: {}", r.line_number, r.error);
    if (!corpus.rejected.empty()) spdlog::warn("{} corpus line(s) rejected", corpus.rejected.size());
    std::stable_sort(corpus.documents.begin(), corpus.documents.end(),
                     [](const Document& a, const Document& b) {
                         if (a.created_at != b.created_at) return a.created_at < b.created_at;
                         return a.doc_id < b.doc_id;
                     });
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw PreconditionError("corpus file not found: " + path.string());
    return parse_corpus(read_file(path));
}

std::string rejected_report_jsonl(std::span<const RejectedRecord> rejected) {
    std::string out;
    for (const auto& r : rejected) {
        json j;
        try {
            j = json::parse(r.raw);
            if (!j.is_object()) j = json{{"raw", r.raw}};
        } catch (const json::exception&) {
            j = json{{"raw", r.raw}};
        }
        j["line"] = r.line_number;
        j["error"] = r.error;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::size_t utf8_length(std::string_view s) {
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

namespace {

// Lowercased tokens that end in a period without ending the sentence.
constexpr std::array<std::string_view, 16> kAbbreviations = {
    "mr", "mrs", "ms", "dr", "st", "jr", "sr", "vs", "prof", "mt", "e.g", "i.e", "a.m", "p.m", "approx", "no"};

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

// Length of a closing quote/bracket at position i, or 0.
std::size_t closer_length(std::string_view s, std::size_t i) {
    const char c = s[i];
    if (c == '"' || c == '\'' || c == ')' || c == ']') return 1;
    // U+2019 and U+201D
    if (i + 2 < s.size() && static_cast<unsigned char>(c) == 0xE2 &&
        static_cast<unsigned char>(s[i + 1]) == 0x80 &&
        (static_cast<unsigned char>(s[i + 2]) == 0x99 || static_cast<unsigned char>(s[i + 2]) == 0x9D))
        return 3;
    return 0;
}

bool guarded_abbreviation(std::string_view text, std::size_t dot) {
    std::size_t start = dot;
    while (start > 0 && !is_space(text[start - 1]) && text[start - 1] != '(' && text[start - 1] != '"') --start;
    const std::string word = lower_ascii(text.substr(start, dot - start));
    // "no." only guards a following number ("No. 5").
    if (word == "no") {
        std::size_t k = dot + 1;
        while (k < text.size() && text[k] == ' ') ++k;
        return k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]));
    }
    return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    auto flush = [&](std::size_t from, std::size_t to) {
        auto piece = trim(text.substr(from, to - from));
        if (!piece.empty()) out.emplace_back(piece);
    };
    std::size_t start = 0;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const char c = text[i];
        if (c == '\n' || c == '\r') {
            flush(start, i);
            while (i < n && (text[i] == '\n' || text[i] == '\r')) ++i;
            start = i;
            continue;
        }
        if (is_terminator(c)) {
            std::size_t j = i;
            while (j < n && is_terminator(text[j])) ++j;
            const bool single_period = (j - i == 1) && c == '.';
            while (j < n) {
                const auto len = closer_length(text, j);
                if (len == 0) break;
                j += len;
            }
            bool boundary = j == n || is_space(text[j]);
            if (boundary && single_period && guarded_abbreviation(text, i)) boundary = false;
            if (boundary) {
                flush(start, j);
                start = j;
            }
            i = j;
            continue;
        }
        ++i;
    }
    flush(start, n);
    return out;
}

std::vector<Sentence> segment(const Document& doc) {
    std::vector<Sentence> out;
    auto pieces = split_sentences(doc.text());
    out.reserve(pieces.size());
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        Sentence s;
        s.doc_id = doc.doc_id;
        s.index = i;
        s.char_len = utf8_length(pieces[i]);
        s.text = std::move(pieces[i]);
        out.push_back(std::move(s));
    }
    return out;
}

BoilerplateResult filter_boilerplate(std::span<const Sentence> sentences, std::size_t n) {
    BoilerplateResult result;
    if (n == 0) {
        result.retained.assign(sentences.begin(), sentences.end());
        return result;
    }
    struct Entry {
        std::string_view text;
        std::size_t freq = 0;
        std::size_t len = 0;
    };
    std::unordered_map<std::string_view, std::size_t> index;
    std::vector<Entry> entries;
    for (const auto& s : sentences) {
        auto [it, inserted] = index.try_emplace(s.text, entries.size());
        if (inserted) entries.push_back({s.text, 0, s.char_len});
        ++entries[it->second].freq;
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.freq != b.freq) return a.freq > b.freq;
        if (a.len != b.len) return a.len < b.len;
        return a.text < b.text;
    });
    if (n >= entries.size()) {
        result.exhausted = true;
        spdlog::warn("boilerplate filter: n={} covers all {} distinct sentences; every sentence is removed", n,
                     entries.size());
    }
    const std::size_t take = std::min(n, entries.size());
    std::unordered_set<std::string_view> selected;
    for (std::size_t i = 0; i < take; ++i) {
        selected.insert(entries[i].text);
        result.removed.emplace_back(entries[i].text);
    }
    for (const auto& s : sentences) {
        if (selected.contains(s.text)) ++result.removed_occurrences;
        else result.retained.push_back(s);
    }
    return result;
}

DreamTypeSet assign_dream_types(const Document& doc) {
    DreamTypeSet labels;
    const std::string hay = lower_ascii(doc.title) + "\n" + lower_ascii(doc.body);
    auto has = [&](std::string_view stem) { return hay.find(stem) != std::string::npos; };
    if (has("nightmar")) labels.insert(DreamType::nightmare);
    if (has("recurring") || has("re-occurring")) labels.insert(DreamType::recurring);
    if (has("lucid")) labels.insert(DreamType::lucid);
    if (has("vivid")) labels.insert(DreamType::vivid);
    for (const auto& f : doc.flairs) {
        const std::string flair = lower_ascii(trim(f));
        if (flair == "nightmare") labels.insert(DreamType::nightmare);
        else if (flair == "recurring dream") labels.insert(DreamType::recurring);
    }
    return labels;
}

namespace {

Dispersion dispersion(std::vector<double> v) {
    Dispersion d;
    if (v.empty()) return d;
    const double n = static_cast<double>(v.size());
    d.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - d.mean) * (x - d.mean);
    d.stddev = std::sqrt(ss / n);
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    d.median = v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2.0;
    d.max = v.back();
    return d;
}

std::size_t word_count(std::string_view s) {
    std::size_t count = 0;
    bool in_word = false;
    for (char c : s) {
        if (is_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++count;
        }
    }
    return count;
}

}  // namespace

CorpusStats corpus_stats(std::span<const Document> documents, std::optional<DreamType> label) {
    std::vector<double> sentences, words, chars;
    std::unordered_set<std::string_view> authors;
    for (const auto& d : documents) {
        if (label && !assign_dream_types(d).contains(*label)) continue;
        const std::string text = d.text();
        sentences.push_back(static_cast<double>(split_sentences(text).size()));
        words.push_back(static_cast<double>(word_count(text)));
        chars.push_back(static_cast<double>(utf8_length(text)));
        authors.insert(d.author_id);
    }
    if (sentences.empty()) {
        throw PreconditionError(label ? "no documents carry label '" + std::string(to_string(*label)) + "'"
                                      : std::string("corpus is empty"));
    }
    CorpusStats st;
    st.n_documents = sentences.size();
    st.n_authors = authors.size();
    st.sentences = dispersion(std::move(sentences));
    st.words = dispersion(std::move(words));
    st.characters = dispersion(std::move(chars));
    return st;
}

}  // namespace oneirotax
