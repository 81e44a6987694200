#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include "lpcaps/error.hpp"
#include "lpcaps/io.hpp"
#include "lpcaps/metrics.hpp"

namespace lpcaps::metrics {

// ---------------------------------------------------------------------------
// Synonym lexicon

namespace {

class DisjointSets {
 public:
  std::size_t add() {
    parent_.push_back(parent_.size());
    return parent_.size() - 1;
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

std::vector<std::string> split_entries(const std::string& line) {
  std::vector<std::string> entries;
  const char sep = line.find(',') != std::string::npos ? ',' : ' ';
  std::size_t start = 0;
  while (start <= line.size()) {
    auto end = line.find(sep, start);
    if (end == std::string::npos) end = line.size();
    entries.push_back(line.substr(start, end - start));
    start = end + 1;
  }
  return entries;
}

}  // namespace

SynonymLexicon SynonymLexicon::from_lines(std::span<const std::string> lines) {
  DisjointSets sets;
  std::unordered_map<std::string, std::size_t> node;
  std::vector<std::string> order;
  for (const auto& raw : lines) {
    const std::string line = io::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    std::optional<std::size_t> first;
    for (const auto& entry : split_entries(line)) {
      const auto toks = tokenize(entry);
      if (toks.size() != 1) continue;
      auto [it, inserted] = node.try_emplace(toks.front(), 0);
      if (inserted) {
        it->second = sets.add();
        order.push_back(toks.front());
      }
      if (first) {
        sets.unite(*first, it->second);
      } else {
        first = it->second;
      }
    }
  }
  SynonymLexicon lex;
  for (const auto& word : order) lex.groups_[word] = sets.find(node[word]);
  return lex;
}

SynonymLexicon SynonymLexicon::load(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  try {
    lines = io::read_lines(path);
  } catch (const Error&) {
    throw validation_error("lexicon_load_error",
                           "cannot read synonym lexicon " + path.string());
  }
  return from_lines(lines);
}

std::optional<std::size_t> SynonymLexicon::group_of(std::string_view token) const {
  const auto it = groups_.find(std::string(token));
  if (it == groups_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Alignment

std::size_t count_chunks(std::span<const int> cand_to_ref) {
  std::size_t chunks = 0;
  for (std::size_t i = 0; i < cand_to_ref.size(); ++i) {
    if (cand_to_ref[i] < 0) continue;
    const bool continues = i > 0 && cand_to_ref[i - 1] >= 0 &&
                           cand_to_ref[i] == cand_to_ref[i - 1] + 1;
    if (!continues) ++chunks;
  }
  return chunks;
}

namespace {

constexpr int kUnmatched = -1;

// One stage: tokens are matchable iff their (non-empty) keys are equal. Every
// stage adds the maximum number of matches, which for key equality is
// sum over keys of min(free candidates, free references). Among those
// alignments the search maximises the number of adjacent pairs that continue
// a chunk, which is the same as minimising chunks.
class StageAligner {
 public:
  StageAligner(std::vector<std::string> cand_keys, std::vector<std::string> ref_keys,
               std::vector<int>& cand_to_ref, std::size_t budget)
      : cand_keys_(std::move(cand_keys)),
        ref_keys_(std::move(ref_keys)),
        cand_to_ref_(cand_to_ref),
        budget_(budget) {
    fixed_ = cand_to_ref_;
    std::vector<bool> ref_taken(ref_keys_.size(), false);
    for (int j : fixed_) {
      if (j >= 0) ref_taken[static_cast<std::size_t>(j)] = true;
    }
    // Free reference slots per key, in position order.
    for (std::size_t j = 0; j < ref_keys_.size(); ++j) {
      if (ref_taken[j] || ref_keys_[j].empty()) continue;
      const auto slot = free_refs_.size();
      free_refs_.push_back(static_cast<int>(j));
      slot_of_ref_[static_cast<int>(j)] = slot;
      key_slots_[ref_keys_[j]].push_back(slot);
    }
    std::map<std::string, std::size_t> cand_count;
    for (std::size_t i = 0; i < cand_keys_.size(); ++i) {
      if (eligible(i)) ++cand_count[cand_keys_[i]];
    }
    for (const auto& [key, count] : cand_count) {
      const auto refs = key_slots_[key].size();
      skips_allowed_[key] = count - std::min(count, refs);
    }
  }

  bool run() {
    if (free_refs_.empty()) return true;
    std::vector<bool> used(free_refs_.size(), false);
    std::unordered_map<std::string, std::size_t> skipped;
    bool ok = true;
    search(0, kUnmatched, used, skipped, ok);
    if (!ok) {
      greedy();
      return false;
    }
    reconstruct();
    return true;
  }

 private:
  bool eligible(std::size_t i) const {
    return fixed_[i] < 0 && !cand_keys_[i].empty() &&
           key_slots_.count(cand_keys_[i]) != 0;
  }

  std::string state_key(std::size_t i, int prev_j, const std::vector<bool>& used) const {
    std::string key = std::to_string(i) + ':' + std::to_string(prev_j) + ':';
    key.reserve(key.size() + used.size());
    for (bool u : used) key.push_back(u ? '1' : '0');
    return key;
  }

  // Best number of chunk continuations achievable from position i onward.
  int search(std::size_t i, int prev_j, std::vector<bool>& used,
             std::unordered_map<std::string, std::size_t>& skipped, bool& ok) {
    if (!ok) return 0;
    if (i == cand_keys_.size()) return 0;
    const auto link = [prev_j](int j) { return prev_j >= 0 && j == prev_j + 1 ? 1 : 0; };
    if (!eligible(i)) {
      const int j = fixed_[i];
      return link(j) + search(i + 1, j, used, skipped, ok);
    }
    // The skip tally is a function of (i, used), so it need not be in the key.
    const auto key = state_key(i, prev_j, used);
    if (const auto it = memo_.find(key); it != memo_.end()) return it->second.value;
    if (memo_.size() >= budget_) {
      ok = false;
      return 0;
    }
    const auto& cand_key = cand_keys_[i];
    int best = -1;
    int best_choice = kUnmatched;
    for (std::size_t slot : key_slots_.at(cand_key)) {
      if (used[slot]) continue;
      const int j = free_refs_[slot];
      used[slot] = true;
      const int value = link(j) + search(i + 1, j, used, skipped, ok);
      used[slot] = false;
      if (value > best) {
        best = value;
        best_choice = j;
      }
    }
    auto& skips = skipped[cand_key];
    if (best < 0 || skips < skips_allowed_.at(cand_key)) {
      ++skips;
      const int value = search(i + 1, kUnmatched, used, skipped, ok);
      --skips;
      if (value > best) {
        best = value;
        best_choice = kUnmatched;
      }
    }
    memo_.emplace(key, Memo{best, best_choice});
    return best;
  }

  void reconstruct() {
    std::vector<bool> used(free_refs_.size(), false);
    int prev_j = kUnmatched;
    for (std::size_t i = 0; i < cand_keys_.size(); ++i) {
      if (!eligible(i)) {
        prev_j = fixed_[i];
        continue;
      }
      const auto& memo = memo_.at(state_key(i, prev_j, used));
      cand_to_ref_[i] = memo.choice;
      if (memo.choice >= 0) used[slot_of_ref_.at(memo.choice)] = true;
      prev_j = memo.choice;
    }
  }

  // Matches whenever possible, preferring the slot that extends the current
  // chunk, otherwise the leftmost free one. Still attains the maximum match
  // count; chunk count may be above optimal.
  void greedy() {
    std::vector<bool> used(free_refs_.size(), false);
    int prev_j = kUnmatched;
    for (std::size_t i = 0; i < cand_keys_.size(); ++i) {
      if (!eligible(i)) {
        prev_j = fixed_[i];
        continue;
      }
      int choice = kUnmatched;
      for (std::size_t slot : key_slots_.at(cand_keys_[i])) {
        if (used[slot]) continue;
        if (choice == kUnmatched) choice = free_refs_[slot];
        if (prev_j >= 0 && free_refs_[slot] == prev_j + 1) {
          choice = free_refs_[slot];
          break;
        }
      }
      if (choice >= 0) used[slot_of_ref_.at(choice)] = true;
      cand_to_ref_[i] = choice;
      prev_j = choice;
    }
  }

  struct Memo {
    int value;
    int choice;
  };

  std::vector<std::string> cand_keys_;
  std::vector<std::string> ref_keys_;
  std::vector<int>& cand_to_ref_;
  std::vector<int> fixed_;
  std::size_t budget_;
  std::vector<int> free_refs_;
  std::unordered_map<int, std::size_t> slot_of_ref_;
  std::unordered_map<std::string, std::vector<std::size_t>> key_slots_;
  std::unordered_map<std::string, std::size_t> skips_allowed_;
  std::unordered_map<std::string, Memo> memo_;
};

std::vector<std::string> stage_keys(const TokenSeq& tokens, MatchStage stage,
                                    const SynonymLexicon* lexicon) {
  std::vector<std::string> keys;
  keys.reserve(tokens.size());
  for (const auto& t : tokens) {
    switch (stage) {
      case MatchStage::kExact:
        keys.push_back(t);
        break;
      case MatchStage::kStem:
        keys.push_back(porter_stem(t));
        break;
      case MatchStage::kSynonym: {
        const auto group = lexicon ? lexicon->group_of(t) : std::nullopt;
        keys.push_back(group ? std::to_string(*group) : std::string());
        break;
      }
    }
  }
  return keys;
}

}  // namespace

MeteorAlignment meteor_align(const TokenSeq& cand, const TokenSeq& ref,
                             const MeteorOptions& options) {
  MeteorAlignment result;
  result.cand_to_ref.assign(cand.size(), kUnmatched);
  for (const auto stage : options.stages) {
    if (stage == MatchStage::kSynonym && !options.synonyms) {
      throw validation_error("lexicon_load_error",
                             "synonym stage requested without a lexicon");
    }
    StageAligner aligner(stage_keys(cand, stage, options.synonyms.get()),
                         stage_keys(ref, stage, options.synonyms.get()),
                         result.cand_to_ref, options.search_budget);
    if (!aligner.run()) result.exhaustive = false;
  }
  result.matches = static_cast<std::size_t>(
      std::count_if(result.cand_to_ref.begin(), result.cand_to_ref.end(),
                    [](int j) { return j >= 0; }));
  result.chunks = count_chunks(result.cand_to_ref);
  return result;
}

double meteor(const TokenSeq& cand, const TokenSeq& ref, const MeteorOptions& options) {
  const auto alignment = meteor_align(cand, ref, options);
  if (alignment.matches == 0) return 0.0;
  const auto m = static_cast<double>(alignment.matches);
  const double p = m / static_cast<double>(cand.size());
  const double r = m / static_cast<double>(ref.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(alignment.chunks) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return fmean * (1.0 - penalty);
}

}  // namespace lpcaps::metrics
