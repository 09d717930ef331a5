#include "oneirotax/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace oneirotax::text {

namespace {

// Sorted; searched with binary_search.
constexpr std::array kStopWords = std::to_array<std::string_view>({
    "a", "about", "above", "across", "after", "afterwards", "again", "against", "all", "almost",
    "alone", "along", "already", "also", "although", "always", "am", "among", "amongst",
    "amoungst", "amount", "an", "and", "another", "any", "anyhow", "anyone", "anything", "anyway",
    "anywhere", "are", "aren't", "around", "as", "at", "back", "be", "became", "because", "become",
    "becomes", "becoming", "been", "before", "beforehand", "behind", "being", "below", "beside",
    "besides", "between", "beyond", "bill", "both", "bottom", "but", "by", "call", "can", "can't",
    "cannot", "cant", "co", "con", "could", "couldn't", "couldnt", "cry", "de", "describe",
    "detail", "did", "didn't", "do", "does", "doesn't", "don't", "done", "down", "due", "during",
    "each", "eg", "eight", "either", "eleven", "else", "elsewhere", "empty", "enough", "etc",
    "even", "ever", "every", "everyone", "everything", "everywhere", "except", "few", "fifteen",
    "fifty", "fill", "find", "fire", "first", "five", "for", "former", "formerly", "forty",
    "found", "four", "from", "front", "full", "further", "get", "give", "go", "got", "had",
    "hadn't", "has", "hasn't", "hasnt", "have", "haven't", "he", "he'd", "he'll", "he's", "hence",
    "her", "here", "hereafter", "hereby", "herein", "hereupon", "hers", "herself", "him",
    "himself", "his", "how", "however", "hundred", "i", "i'd", "i'll", "i'm", "i've", "ie", "if",
    "in", "inc", "indeed", "interest", "into", "is", "isn't", "it", "it'd", "it'll", "it's", "its",
    "itself", "just", "keep", "last", "latter", "latterly", "least", "less", "let's", "like",
    "ltd", "made", "many", "may", "me", "meanwhile", "might", "mill", "mine", "more", "moreover",
    "most", "mostly", "move", "much", "must", "my", "myself", "name", "namely", "neither", "never",
    "nevertheless", "next", "nine", "no", "nobody", "none", "noone", "nor", "not", "nothing",
    "now", "nowhere", "of", "off", "often", "on", "once", "one", "only", "onto", "or", "other",
    "others", "otherwise", "our", "ours", "ourselves", "out", "over", "own", "part", "per",
    "perhaps", "please", "put", "rather", "re", "really", "same", "see", "seem", "seemed",
    "seeming", "seems", "serious", "several", "she", "she'd", "she'll", "she's", "should",
    "shouldn't", "show", "side", "since", "sincere", "six", "sixty", "so", "some", "somehow",
    "someone", "something", "sometime", "sometimes", "somewhere", "still", "such", "system",
    "take", "ten", "than", "that", "that's", "the", "their", "them", "themselves", "then",
    "thence", "there", "there's", "thereafter", "thereby", "therefore", "therein", "thereupon",
    "these", "they", "they'd", "they'll", "they're", "they've", "thick", "thin", "third", "this",
    "those", "though", "three", "through", "throughout", "thru", "thus", "to", "together", "too",
    "top", "toward", "towards", "twelve", "twenty", "two", "un", "under", "until", "up", "upon",
    "us", "very", "via", "was", "wasn't", "we", "we'd", "we'll", "we're", "we've", "well", "were",
    "weren't", "what", "what's", "whatever", "when", "whence", "whenever", "where", "whereafter",
    "whereas", "whereby", "wherein", "whereupon", "wherever", "whether", "which", "while",
    "whither", "who", "whoever", "whole", "whom", "whose", "why", "will", "with", "within",
    "without", "won't", "would", "wouldn't", "yet", "you", "you'd", "you'll", "you're", "you've",
    "your", "yours", "yourself", "yourselves",
});

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

std::span<const std::string_view> stop_words() { return kStopWords; }

bool is_stop_word(std::string_view token) {
    return std::binary_search(kStopWords.begin(), kStopWords.end(), token);
}

std::vector<std::string> tokenize(std::string_view s) {
    // Fold U+2019 to an ASCII apostrophe first so it joins words.
    std::string folded;
    folded.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xE2 &&
            static_cast<unsigned char>(s[i + 1]) == 0x80 && static_cast<unsigned char>(s[i + 2]) == 0x99) {
            folded.push_back('\'');
            i += 2;
        } else {
            folded.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
        }
    }
    std::vector<std::string> tokens;
    std::string cur;
    const std::size_t n = folded.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<unsigned char>(folded[i]);
        if (is_word_byte(c)) {
            cur.push_back(static_cast<char>(c));
        } else if ((c == '\'' || c == '-') && !cur.empty() && i + 1 < n &&
                   is_word_byte(static_cast<unsigned char>(folded[i + 1]))) {
            cur.push_back(static_cast<char>(c));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::vector<std::string> sentence_terms(std::string_view sentence) {
    std::vector<std::string> kept;
    for (auto& t : tokenize(sentence)) {
        if (t.size() >= 2 && !is_stop_word(t)) kept.push_back(std::move(t));
    }
    std::vector<std::string> terms = kept;
    for (std::size_t i = 0; i + 1 < kept.size(); ++i) terms.push_back(kept[i] + "-" + kept[i + 1]);
    return terms;
}

}  // namespace oneirotax::text
