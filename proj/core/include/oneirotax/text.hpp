#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace oneirotax::text {

/// Lowercased word tokens. Words are runs of letters/digits (any non-ASCII
/// byte counts as a letter); an apostrophe or hyphen is kept only between
/// two word characters. Typographic apostrophes are folded to '\''.
std::vector<std::string> tokenize(std::string_view s);

/// The committed English stop list (scikit-learn's list plus common
/// contractions).
std::span<const std::string_view> stop_words();
bool is_stop_word(std::string_view token);

/// Vocabulary terms of one sentence: tokens of length >= 2 that are not stop
/// words, followed by bigrams of adjacent surviving tokens joined with '-'.
std::vector<std::string> sentence_terms(std::string_view sentence);

}  // namespace oneirotax::text
