#include "oneirotax/analytics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "oneirotax/error.hpp"
#include "oneirotax/util.hpp"

namespace oneirotax {

double importance(const DocProfile& doc, int entity) {
    if (doc.n_sentences == 0) throw PreconditionError("document " + doc.doc_id + " has no sentences");
    auto it = doc.hits.find(entity);
    if (it == doc.hits.end()) return 0.0;
    return static_cast<double>(it->second) / static_cast<double>(doc.n_sentences);
}

std::string_view to_string(OddsMethod m) { return m == OddsMethod::importance ? "importance" : "counts"; }

OddsMethod parse_odds_method(std::string_view s) {
    if (s == "importance") return OddsMethod::importance;
    if (s == "counts") return OddsMethod::counts;
    throw ValidationError("unknown odds method '" + std::string(s) + "'");
}

OddsRatioRecord odds_ratio(DreamType type, int entity, std::span<const DocProfile> docs, OddsMethod method) {
    double in_sum = 0.0, out_sum = 0.0;
    std::size_t in_absent = 0, out_absent = 0, in_total = 0, out_total = 0;
    for (const auto& d : docs) {
        const double imp = importance(d, entity);
        const bool present = imp > 0.0;
        const double term = method == OddsMethod::importance ? imp : (present ? 1.0 : 0.0);
        if (d.types.contains(type)) {
            ++in_total;
            in_sum += term;
            in_absent += present ? 0 : 1;
        } else {
            ++out_total;
            out_sum += term;
            out_absent += present ? 0 : 1;
        }
    }
    const std::string label(to_string(type));
    if (in_total == 0) throw PreconditionError("odds ratio: no documents of type " + label);
    if (out_total == 0) throw PreconditionError("odds ratio: every document is of type " + label);

    OddsRatioRecord r{type, entity, std::nullopt, {}};
    const char* sum_in = method == OddsMethod::importance ? "importance_sum_in_type" : "present_in_type";
    const char* sum_out = method == OddsMethod::importance ? "importance_sum_outside_type" : "present_outside_type";
    if (in_sum == 0.0) r.undefined_term = sum_in;
    else if (in_absent == 0) r.undefined_term = "absent_in_type";
    else if (out_sum == 0.0) r.undefined_term = sum_out;
    else if (out_absent == 0) r.undefined_term = "absent_outside_type";
    else r.value = (in_sum / static_cast<double>(in_absent)) / (out_sum / static_cast<double>(out_absent));
    return r;
}

std::vector<OddsRatioRecord> odds_table(std::span<const DocProfile> docs, const EntityMap& map, OddsMethod method) {
    std::vector<OddsRatioRecord> out;
    for (DreamType t : kAllDreamTypes)
        for (int e : map.entities) out.push_back(odds_ratio(t, e, docs, method));
    return out;
}

std::string odds_csv(std::span<const OddsRatioRecord> records, const std::map<int, std::string>& labels) {
    std::vector<OddsRatioRecord> sorted(records.begin(), records.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const OddsRatioRecord& a, const OddsRatioRecord& b) {
        if (a.dream_type != b.dream_type) return a.dream_type < b.dream_type;
        if (a.defined() != b.defined()) return a.defined();
        if (a.defined() && *a.value != *b.value) return *a.value > *b.value;
        return a.entity < b.entity;
    });
    std::string out = "dream_type,entity,label,or_value,flags\n";
    for (const auto& r : sorted) {
        auto it = labels.find(r.entity);
        out += std::string(to_string(r.dream_type)) + "," + std::to_string(r.entity) + "," +
               csv_escape(it == labels.end() ? std::string_view{} : std::string_view(it->second)) + "," +
               (r.defined() ? format_double(*r.value) : std::string()) + "," +
               (r.defined() ? std::string() : "undefined:" + r.undefined_term) + "\n";
    }
    return out;
}

std::string YearMonth::str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u", year, month);
    return buf;
}

YearMonth year_month_of(Timestamp t) {
    const std::chrono::year_month_day ymd{std::chrono::floor<std::chrono::days>(t)};
    return {static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month())};
}

MonthlyImportance monthly_importance(std::span<const DocProfile> docs, std::span<const int> entities,
                                     std::size_t min_monthly_docs) {
    using namespace std::chrono;
    if (docs.empty()) throw PreconditionError("monthly importance: no documents");
    auto [lo, hi] = std::minmax_element(docs.begin(), docs.end(), [](const DocProfile& a, const DocProfile& b) {
        return a.created_at < b.created_at;
    });
    const sys_days first_day = floor<days>(lo->created_at);
    const sys_days last_day = floor<days>(hi->created_at);

    std::map<YearMonth, std::vector<const DocProfile*>> by_month;
    for (const auto& d : docs) by_month[year_month_of(d.created_at)].push_back(&d);

    MonthlyImportance out;
    std::string counts;
    for (const auto& [ym, members] : by_month) {
        counts += (counts.empty() ? "" : ", ") + ym.str() + "=" + std::to_string(members.size());
        const year_month cal{year{ym.year}, month{ym.month}};
        const sys_days month_first{cal / 1};
        const sys_days month_last{cal / last};
        if (month_first < first_day || month_last > last_day) {
            out.audit.push_back("month " + ym.str() + " excluded: not fully covered by the corpus date range");
            continue;
        }
        if (members.size() < min_monthly_docs) {
            out.audit.push_back("month " + ym.str() + " excluded: " + std::to_string(members.size()) +
                                " documents < " + std::to_string(min_monthly_docs));
            continue;
        }
        out.months.push_back(ym);
        out.n_docs.push_back(members.size());
        for (int e : entities) {
            double sum = 0.0;
            for (const DocProfile* d : members) sum += importance(*d, e);
            out.values[e].push_back(sum / static_cast<double>(members.size()));
        }
    }
    if (out.months.empty())
        throw PreconditionError("no month has at least " + std::to_string(min_monthly_docs) +
                                " documents and full coverage; per-month counts: " + counts);
    for (int e : entities) out.values.try_emplace(e);
    return out;
}

std::vector<double> zscore_series(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 2) throw PreconditionError("z-score needs at least 2 values, got " + std::to_string(n));
    std::vector<double> out(n, 0.0);
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) return out;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    if (sd == 0.0) return out;
    for (std::size_t i = 0; i < n; ++i) out[i] = (values[i] - mean) / sd;
    return out;
}

std::vector<double> smooth_centered(std::span<const double> values, std::size_t window) {
    if (window == 0 || window % 2 == 0)
        throw ValidationError("smoothing window must be odd and positive, got " + std::to_string(window));
    const std::size_t half = window / 2;
    const std::size_t n = values.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = i >= half ? i - half : 0;
        const std::size_t b = std::min(n - 1, i + half);
        double s = 0.0;
        for (std::size_t j = a; j <= b; ++j) s += values[j];
        out[i] = s / static_cast<double>(b - a + 1);
    }
    return out;
}

TrendSeries trend_series(int entity, const MonthlyImportance& monthly, std::size_t window) {
    auto it = monthly.values.find(entity);
    if (it == monthly.values.end()) throw PreconditionError("no monthly values for entity " + std::to_string(entity));
    TrendSeries t;
    t.entity = entity;
    t.months = monthly.months;
    t.importance = it->second;
    t.z = zscore_series(t.importance);
    t.smoothed = smooth_centered(t.z, window);
    return t;
}

std::string trend_long_csv(std::span<const TrendSeries> series) {
    std::string out = "entity,month,importance,z,z_smoothed\n";
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.months.size(); ++i)
            out += std::to_string(s.entity) + "," + s.months[i].str() + "," + format_double(s.importance[i]) + "," +
                   format_double(s.z[i]) + "," + format_double(s.smoothed[i]) + "\n";
    return out;
}

std::string trend_matrix_csv(std::span<const TrendSeries> series) {
    std::string out = "entity";
    if (!series.empty())
        for (const auto& m : series.front().months) out += "," + m.str();
    out += "\n";
    for (const auto& s : series) {
        out += std::to_string(s.entity);
        for (double v : s.smoothed) out += "," + format_double(v);
        out += "\n";
    }
    return out;
}

}  // namespace oneirotax
