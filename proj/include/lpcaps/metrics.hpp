#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lpcaps::metrics {

/// Lowercase word tokens; never empty, never containing whitespace.
using TokenSeq = std::vector<std::string>;

/// The one tokenizer shared by every metric, coverage check and token count.
/// Lowercases ASCII, deletes apostrophes (so "don't" becomes "dont"), turns
/// every other non-alphanumeric ASCII character into a separator, then splits
/// on whitespace. Bytes >= 0x80 are kept so UTF-8 words survive intact.
TokenSeq tokenize(std::string_view text);

inline std::size_t token_count(std::string_view text) { return tokenize(text).size(); }

// ---------------------------------------------------------------------------
// BLEU

/// Corpus BLEU: clipped n-gram counts pooled over the corpus, uniform weights,
/// geometric mean, brevity penalty min(1, exp(1 - r/c)). Returns 0 when any
/// pooled precision is 0. Throws on empty or mismatched corpora, or max_n
/// outside 1..4.
double bleu_corpus(std::span<const TokenSeq> cands, std::span<const TokenSeq> refs,
                   int max_n);

/// Multi-reference variant: counts clipped by the max count over references,
/// reference length is the one closest to the candidate (shorter on ties).
double bleu_corpus_multi(std::span<const TokenSeq> cands,
                         std::span<const std::vector<TokenSeq>> refs, int max_n);

/// Sentence BLEU with add-one smoothing on n >= 2 precisions.
double bleu_sentence_smoothed(const TokenSeq& cand, std::span<const TokenSeq> refs,
                              int max_n);

// ---------------------------------------------------------------------------
// ROUGE-L

inline constexpr double kDefaultRougeBeta = 1.2;

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b);

/// F-measure over the longest common subsequence; 0 for empty inputs.
double rouge_l(const TokenSeq& cand, const TokenSeq& ref, double beta = kDefaultRougeBeta);

// ---------------------------------------------------------------------------
// METEOR

/// Groups of interchangeable words, one group per line of a lexicon file.
/// Overlapping groups are merged, so synonymy is an equivalence relation.
class SynonymLexicon {
 public:
  SynonymLexicon() = default;

  /// Lines hold comma-separated entries (whitespace-separated when no comma
  /// is present). Blank lines and lines starting with '#' are skipped. Entries
  /// that tokenize to more than one word cannot match a unigram and are ignored.
  static SynonymLexicon from_lines(std::span<const std::string> lines);
  static SynonymLexicon load(const std::filesystem::path& path);

  /// Canonical group id of a token, or nullopt when it belongs to no group.
  std::optional<std::size_t> group_of(std::string_view token) const;

  bool empty() const { return groups_.empty(); }

 private:
  std::unordered_map<std::string, std::size_t> groups_;
};

enum class MatchStage { kExact, kStem, kSynonym };

struct MeteorOptions {
  /// Applied in order; later stages only see tokens left unmatched.
  std::vector<MatchStage> stages{MatchStage::kExact};
  std::shared_ptr<const SynonymLexicon> synonyms;
  /// Exact chunk minimisation gives up beyond this many memoised states per
  /// stage and falls back to a greedy left-to-right alignment.
  std::size_t search_budget = 1u << 18;
};

struct MeteorAlignment {
  /// cand_to_ref[i] is the matched reference position, or -1.
  std::vector<int> cand_to_ref;
  std::size_t matches = 0;
  std::size_t chunks = 0;
  bool exhaustive = true;
};

/// Stage-wise alignment. Each stage adds the largest possible number of
/// matches, choosing among those the alignment with the fewest chunks.
MeteorAlignment meteor_align(const TokenSeq& cand, const TokenSeq& ref,
                             const MeteorOptions& options = {});

/// Number of maximal runs of matches contiguous in both sequences.
std::size_t count_chunks(std::span<const int> cand_to_ref);

/// Fmean * (1 - 0.5 (chunks/m)^3) with Fmean = 10PR / (R + 9P); 0 when m = 0.
double meteor(const TokenSeq& cand, const TokenSeq& ref, const MeteorOptions& options = {});

/// Porter (1980) suffix-stripping stemmer for lowercase ASCII words.
std::string porter_stem(std::string_view word);

// ---------------------------------------------------------------------------
// BERT-Score matching over externally produced embeddings

struct SentenceEmbeddings {
  TokenSeq tokens;
  std::vector<std::vector<double>> vectors;

  /// Throws when the counts differ, dimensions vary, or a vector has zero norm.
  void validate() const;
};

struct BertScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Greedy max-cosine matching, no idf weighting and no baseline rescaling.
BertScore bert_score(const SentenceEmbeddings& cand, const SentenceEmbeddings& ref);

// ---------------------------------------------------------------------------
// Diversity

struct TokenStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

TokenStats token_stats(std::span<const std::string> texts);

struct Diversity {
  std::size_t vocab = 0;
  double novel_v = 0.0;  // percent of generated vocabulary absent from training
  double novel_c = 0.0;  // percent of generated captions absent from training
  TokenStats tokens;
};

Diversity diversity(std::span<const std::string> generated,
                    std::span<const std::string> training);

}  // namespace lpcaps::metrics
