#pragma once

// Deliberately naive reference implementations used to cross-check the
// metrics module. Nothing here shares code with src/metrics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace oracle {

using Tokens = std::vector<std::string>;

inline std::map<Tokens, int> ngram_multiset(const Tokens& s, std::size_t n) {
  std::map<Tokens, int> out;
  if (s.size() < n) return out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    out[Tokens(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(i + n))] += 1;
  }
  return out;
}

// Corpus BLEU with uniform weights; counts pooled across pairs.
inline double bleu(const std::vector<Tokens>& cands, const std::vector<Tokens>& refs,
                   int max_n) {
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    long long matched = 0;
    long long total = 0;
    for (std::size_t k = 0; k < cands.size(); ++k) {
      const auto c = ngram_multiset(cands[k], static_cast<std::size_t>(n));
      const auto r = ngram_multiset(refs[k], static_cast<std::size_t>(n));
      for (const auto& [gram, count] : c) {
        total += count;
        const auto it = r.find(gram);
        if (it != r.end()) matched += std::min(count, it->second);
      }
    }
    if (matched == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
  }
  double c_len = 0.0;
  double r_len = 0.0;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    c_len += static_cast<double>(cands[k].size());
    r_len += static_cast<double>(refs[k].size());
  }
  const double bp = c_len >= r_len ? 1.0 : std::exp(1.0 - r_len / c_len);
  return bp * std::exp(log_sum / max_n);
}

inline std::size_t lcs(const Tokens& a, const Tokens& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i,
                                                                std::size_t j) -> std::size_t {
    if (i == a.size() || j == b.size()) return 0;
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = a[i] == b[j] ? 1 + go(i + 1, j + 1) : std::max(go(i + 1, j), go(i, j + 1));
    memo[key] = best;
    return best;
  };
  return go(0, 0);
}

inline double rouge_l(const Tokens& cand, const Tokens& ref, double beta) {
  const double l = static_cast<double>(lcs(cand, ref));
  if (l == 0.0 || cand.empty() || ref.empty()) return 0.0;
  const double p = l / static_cast<double>(cand.size());
  const double r = l / static_cast<double>(ref.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

struct Alignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

// Enumerates every one-to-one exact-match alignment, keeps those with the
// most matches, and among them the fewest chunks.
inline Alignment meteor_exhaustive(const Tokens& cand, const Tokens& ref) {
  Alignment best{0, std::numeric_limits<std::size_t>::max()};
  std::vector<int> link(cand.size(), -1);
  std::vector<bool> used(ref.size(), false);
  std::function<void(std::size_t)> go = [&](std::size_t i) {
    if (i == cand.size()) {
      std::size_t m = 0;
      std::size_t chunks = 0;
      int prev_i = -2;
      int prev_j = -2;
      for (std::size_t k = 0; k < cand.size(); ++k) {
        if (link[k] < 0) continue;
        ++m;
        if (!(static_cast<int>(k) == prev_i + 1 && link[k] == prev_j + 1)) ++chunks;
        prev_i = static_cast<int>(k);
        prev_j = link[k];
      }
      if (m > best.matches || (m == best.matches && chunks < best.chunks)) best = {m, chunks};
      return;
    }
    go(i + 1);
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!used[j] && cand[i] == ref[j]) {
        used[j] = true;
        link[i] = static_cast<int>(j);
        go(i + 1);
        link[i] = -1;
        used[j] = false;
      }
    }
  };
  go(0);
  if (best.matches == 0) best.chunks = 0;
  return best;
}

inline double meteor_exact(const Tokens& cand, const Tokens& ref) {
  const auto a = meteor_exhaustive(cand, ref);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(cand.size());
  const double r = m / static_cast<double>(ref.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  return fmean * (1.0 - 0.5 * frag * frag * frag);
}

}  // namespace oracle
