#include <algorithm>

#include "lpcaps/error.hpp"
#include "lpcaps/metrics.hpp"

namespace lpcaps::metrics {

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const TokenSeq& cand, const TokenSeq& ref, double beta) {
  if (!(beta > 0.0)) {
    throw validation_error("invalid_beta", "ROUGE-L beta must be positive");
  }
  if (cand.empty() || ref.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(cand, ref));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(cand.size());
  const double r = lcs / static_cast<double>(ref.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

}  // namespace lpcaps::metrics
