#include <cmath>
#include <unordered_set>

#include "lpcaps/error.hpp"
#include "lpcaps/io.hpp"
#include "lpcaps/metrics.hpp"

namespace lpcaps::metrics {

TokenStats token_stats(std::span<const std::string> texts) {
  TokenStats stats;
  if (texts.empty()) return stats;
  std::vector<double> counts;
  counts.reserve(texts.size());
  for (const auto& t : texts) counts.push_back(static_cast<double>(token_count(t)));
  double sum = 0.0;
  for (double c : counts) sum += c;
  stats.mean = sum / static_cast<double>(counts.size());
  double sq = 0.0;
  for (double c : counts) sq += (c - stats.mean) * (c - stats.mean);
  stats.std = std::sqrt(sq / static_cast<double>(counts.size()));
  return stats;
}

Diversity diversity(std::span<const std::string> generated,
                    std::span<const std::string> training) {
  if (generated.empty()) {
    throw validation_error("empty_generated_set", "no generated captions");
  }
  std::unordered_set<std::string> train_vocab;
  std::unordered_set<std::string> train_texts;
  for (const auto& t : training) {
    for (auto& tok : tokenize(t)) train_vocab.insert(std::move(tok));
    train_texts.insert(io::trim(t));
  }
  std::unordered_set<std::string> gen_vocab;
  std::size_t novel_captions = 0;
  for (const auto& g : generated) {
    for (auto& tok : tokenize(g)) gen_vocab.insert(std::move(tok));
    if (train_texts.count(io::trim(g)) == 0) ++novel_captions;
  }
  std::size_t novel_words = 0;
  for (const auto& w : gen_vocab) {
    if (train_vocab.count(w) == 0) ++novel_words;
  }

  Diversity d;
  d.vocab = gen_vocab.size();
  d.novel_v = gen_vocab.empty()
                  ? 0.0
                  : 100.0 * static_cast<double>(novel_words) /
                        static_cast<double>(gen_vocab.size());
  d.novel_c = 100.0 * static_cast<double>(novel_captions) /
              static_cast<double>(generated.size());
  d.tokens = token_stats(generated);
  return d;
}

}  // namespace lpcaps::metrics
