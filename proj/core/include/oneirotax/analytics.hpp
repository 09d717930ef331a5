#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oneirotax/profile.hpp"

namespace oneirotax {

/// Share of the document's sentences that carry `entity`; 0 when absent.
double importance(const DocProfile& doc, int entity);

enum class OddsMethod {
    importance,  // the displayed formula: importance sums over absence counts
    counts,      // conventional 2x2 presence/absence odds ratio
};
std::string_view to_string(OddsMethod m);
OddsMethod parse_odds_method(std::string_view s);

struct OddsRatioRecord {
    DreamType dream_type{};
    int entity = 0;
    std::optional<double> value;  // nullopt when undefined
    std::string undefined_term;   // name of the zero term when undefined

    bool defined() const noexcept { return value.has_value(); }
};

/// Requires both the dream type and its complement to be non-empty.
OddsRatioRecord odds_ratio(DreamType type, int entity, std::span<const DocProfile> docs,
                           OddsMethod method = OddsMethod::importance);

std::vector<OddsRatioRecord> odds_table(std::span<const DocProfile> docs, const EntityMap& map,
                                        OddsMethod method = OddsMethod::importance);

/// Columns: dream_type, entity, or_value, flags. Sorted per dream type by
/// value descending; undefined rows last.
std::string odds_csv(std::span<const OddsRatioRecord> records, const std::map<int, std::string>& labels = {});

struct YearMonth {
    int year = 0;
    unsigned month = 1;
    friend auto operator<=>(const YearMonth&, const YearMonth&) = default;
    std::string str() const;  // "YYYY-MM"
};
YearMonth year_month_of(Timestamp t);

struct MonthlyImportance {
    std::vector<YearMonth> months;                 // included months, ascending
    std::vector<std::size_t> n_docs;               // aligned with months
    std::map<int, std::vector<double>> values;     // entity -> I_{t,m}, aligned with months
    std::vector<std::string> audit;                // excluded months with reasons
};

/// Mean importance per calendar month (UTC). A month is excluded when it
/// has fewer than `min_monthly_docs` documents or is not fully covered by
/// the day range between the earliest and latest document.
MonthlyImportance monthly_importance(std::span<const DocProfile> docs, std::span<const int> entities,
                                     std::size_t min_monthly_docs = 300);

/// Population z-scores; a constant series maps to zeros.
std::vector<double> zscore_series(std::span<const double> values);

/// Centered moving mean; windows shrink at the ends.
std::vector<double> smooth_centered(std::span<const double> values, std::size_t window = 5);

struct TrendSeries {
    int entity = 0;
    std::vector<YearMonth> months;
    std::vector<double> importance;
    std::vector<double> z;
    std::vector<double> smoothed;
};

TrendSeries trend_series(int entity, const MonthlyImportance& monthly, std::size_t window = 5);

/// Long format: entity, month, importance, z, z_smoothed.
std::string trend_long_csv(std::span<const TrendSeries> series);
/// Wide format: entity, then one z_smoothed column per month.
std::string trend_matrix_csv(std::span<const TrendSeries> series);

}  // namespace oneirotax
