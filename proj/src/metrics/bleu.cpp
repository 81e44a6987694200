#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>

#include "lpcaps/error.hpp"
#include "lpcaps/metrics.hpp"

namespace lpcaps::metrics {

namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts count_ngrams(const TokenSeq& tokens, int n) {
  NgramCounts counts;
  const auto len = static_cast<std::size_t>(n);
  if (tokens.size() < len) return counts;
  for (std::size_t i = 0; i + len <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t k = 1; k < len; ++k) {
      key.push_back('\x1f');
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

void check_order(int max_n) {
  if (max_n < 1 || max_n > 4) {
    throw validation_error("invalid_order", "BLEU order must be in 1..4, got " +
                                                std::to_string(max_n));
  }
}

std::size_t closest_ref_length(std::size_t cand_len, std::span<const TokenSeq> refs) {
  std::size_t best = refs.front().size();
  for (const auto& r : refs) {
    const auto d = [cand_len](std::size_t l) {
      return l > cand_len ? l - cand_len : cand_len - l;
    };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) {
      best = r.size();
    }
  }
  return best;
}

struct PooledStats {
  std::size_t matched[4] = {0, 0, 0, 0};
  std::size_t total[4] = {0, 0, 0, 0};
  std::size_t cand_len = 0;
  std::size_t ref_len = 0;
};

void accumulate(PooledStats& stats, const TokenSeq& cand, std::span<const TokenSeq> refs,
                int max_n) {
  stats.cand_len += cand.size();
  stats.ref_len += closest_ref_length(cand.size(), refs);
  for (int n = 1; n <= max_n; ++n) {
    NgramCounts max_ref;
    for (const auto& r : refs) {
      for (const auto& [gram, count] : count_ngrams(r, n)) {
        auto& slot = max_ref[gram];
        slot = std::max(slot, count);
      }
    }
    for (const auto& [gram, count] : count_ngrams(cand, n)) {
      const auto it = max_ref.find(gram);
      if (it != max_ref.end()) stats.matched[n - 1] += std::min(count, it->second);
      stats.total[n - 1] += count;
    }
  }
}

double brevity_penalty(std::size_t cand_len, std::size_t ref_len) {
  if (cand_len == 0) return 0.0;
  if (cand_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
}

double combine(const PooledStats& stats, int max_n) {
  double log_sum = 0.0;
  for (int n = 0; n < max_n; ++n) {
    if (stats.matched[n] == 0 || stats.total[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(stats.matched[n]) /
                        static_cast<double>(stats.total[n]));
  }
  return brevity_penalty(stats.cand_len, stats.ref_len) * std::exp(log_sum / max_n);
}

}  // namespace

double bleu_corpus_multi(std::span<const TokenSeq> cands,
                         std::span<const std::vector<TokenSeq>> refs, int max_n) {
  check_order(max_n);
  if (cands.size() != refs.size()) {
    throw validation_error("length_mismatch",
                           "candidate and reference corpora differ in length (" +
                               std::to_string(cands.size()) + " vs " +
                               std::to_string(refs.size()) + ")");
  }
  if (cands.empty()) throw validation_error("empty_corpus", "corpus is empty");
  PooledStats stats;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (refs[i].empty()) {
      throw validation_error("empty_corpus",
                             "pair " + std::to_string(i) + " has no reference");
    }
    accumulate(stats, cands[i], refs[i], max_n);
  }
  return combine(stats, max_n);
}

double bleu_corpus(std::span<const TokenSeq> cands, std::span<const TokenSeq> refs,
                   int max_n) {
  std::vector<std::vector<TokenSeq>> wrapped;
  wrapped.reserve(refs.size());
  for (const auto& r : refs) wrapped.push_back({r});
  return bleu_corpus_multi(cands, wrapped, max_n);
}

double bleu_sentence_smoothed(const TokenSeq& cand, std::span<const TokenSeq> refs,
                              int max_n) {
  check_order(max_n);
  if (refs.empty()) throw validation_error("empty_corpus", "no reference");
  PooledStats stats;
  accumulate(stats, cand, refs, max_n);
  if (stats.matched[0] == 0) return 0.0;
  double log_sum = std::log(static_cast<double>(stats.matched[0]) /
                            static_cast<double>(stats.total[0]));
  for (int n = 1; n < max_n; ++n) {
    log_sum += std::log((static_cast<double>(stats.matched[n]) + 1.0) /
                        (static_cast<double>(stats.total[n]) + 1.0));
  }
  return brevity_penalty(stats.cand_len, stats.ref_len) * std::exp(log_sum / max_n);
}

}  // namespace lpcaps::metrics
