#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oneirotax/corpus.hpp"
#include "oneirotax/embedding.hpp"
#include "oneirotax/reduce.hpp"

namespace oneirotax {

inline constexpr int kOutlierTopic = -1;

struct ClusteringParams {
    std::size_t reduce_dim = 5;
    ReduceMethod reduce_method = ReduceMethod::pca;
    std::size_t min_topic_size = 100;
    std::size_t min_samples = 0;  // 0: min_topic_size
    std::size_t min_df = 10;
    std::size_t ngram_max = 2;  // unigrams and bigrams; fixed
    double mmr_diversity = 0.4;
    std::size_t candidate_pool = 30;
    std::size_t top_n_words = 10;
    bool auto_merge = true;
    double merge_threshold = 0.85;
    std::uint64_t seed = 0;

    void validate() const;  // throws ValidationError
};

struct SentenceRef {
    std::string doc_id;
    std::size_t index = 0;
    friend auto operator<=>(const SentenceRef&, const SentenceRef&) = default;
};

struct SentenceAssignment {
    SentenceRef sentence;
    int topic_id = kOutlierTopic;
};

struct TopicWord {
    std::string term;
    double weight = 0.0;  // normalized over the topic's words
    double score = 0.0;   // raw c-TF-IDF
};

struct Topic {
    int topic_id = 0;
    std::vector<TopicWord> words;    // at most top_n_words, MMR order
    std::vector<TopicWord> reserve;  // further candidates in MMR order, used to refill
    std::size_t n_sentences = 0;
    std::vector<SentenceRef> representatives;
    bool empty_representation = false;
};

// --- c-TF-IDF ---------------------------------------------------------------

struct TermScore {
    std::string term;
    double score = 0.0;
    std::size_t tf = 0;
};

struct CtfidfTable {
    std::vector<int> topic_ids;                    // ascending, outliers excluded
    std::vector<std::vector<TermScore>> ranked;    // per topic: score desc, term asc
    double mean_tokens = 0.0;                      // A
    std::vector<int> empty_topics;                 // topics without eligible terms
    std::size_t vocabulary_size = 0;

    const std::vector<TermScore>& for_topic(int topic_id) const;
};

/// score(g, c) = tf(g, c) * ln(1 + A / tf(g)), where tf(g) sums tf over
/// non-outlier topics and A is the mean per-topic count of eligible term
/// occurrences. Eligible terms (text::sentence_terms) appear in at least
/// min_df of the given sentences, outliers included.
CtfidfTable ctfidf(std::span<const int> topic_of_sentence, std::span<const std::string> sentence_texts,
                   std::size_t min_df);

// --- MMR ----------------------------------------------------------------------

struct MmrCandidate {
    std::string term;
    double score = 0.0;  // c-TF-IDF, breaks similarity ties
    std::vector<float> embedding;
};

/// Greedy maximal marginal relevance. Returns indices into `candidates` in
/// pick order. Fewer than k candidates: all of them, with a warning.
std::vector<std::size_t> mmr_diversify(std::span<const MmrCandidate> candidates, std::span<const float> centroid,
                                       double diversity, std::size_t k);

// --- representation post-processing -------------------------------------------

inline const std::set<std::string, std::less<>> kBannedTerms = {"dream", "dreams"};

/// Removes banned unigrams, refills from `reserve` (skipping banned terms) up
/// to the original word count and rescales weights by raw score to sum 1.
/// Bigrams containing a banned token are kept.
Topic strip_and_renormalize(Topic topic, const std::set<std::string, std::less<>>& banned = kBannedTerms);

/// Unique non-outlier topic ids of one document, in first-occurrence order.
std::vector<int> doc_topics(std::span<const int> sentence_topics);

// --- end-to-end extraction ------------------------------------------------------

struct TopicModel {
    std::vector<SentenceAssignment> assignments;  // aligned with the input sentences
    std::vector<Topic> topics;                    // by topic_id ascending
    std::size_t n_raw_clusters = 0;
    std::size_t n_merges = 0;

    const Topic& topic(int id) const;
    std::vector<int> topic_ids_of(std::string_view doc_id) const;
};

/// Reduce, cluster, optionally merge, rank by size, and build 10-term
/// representations. `sentence_embeddings` rows align with `sentences`;
/// term and centroid embeddings come from `provider` through `cache`.
TopicModel extract_topics(std::span<const Sentence> sentences, const EmbeddingMatrix& sentence_embeddings,
                          EmbeddingProvider& provider, EmbeddingCache* cache, const ClusteringParams& params);

/// Cluster reduced embeddings; merging needs the sentence texts.
std::vector<int> cluster_sentences(const EmbeddingMatrix& reduced, std::span<const std::string> sentence_texts,
                                   const ClusteringParams& params, std::size_t* n_raw_clusters = nullptr,
                                   std::size_t* n_merges = nullptr);

/// CSV: topic_id,rank,n_sentences,n_docs,term_1..term_N,weight_1..weight_N
std::string topic_table_csv(const TopicModel& model, std::size_t n_words = 10);
/// One JSON object per topic: topic_id and its representative sentences.
std::string representatives_jsonl(const TopicModel& model, std::span<const Sentence> sentences);
/// CSV: doc_id,sentence_index,topic_id
std::string assignments_csv(const TopicModel& model);

}  // namespace oneirotax
