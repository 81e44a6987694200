#include "lpcaps/sampler.hpp"

#include <numeric>
#include <unordered_set>

#include "lpcaps/error.hpp"
#include "lpcaps/rng.hpp"

namespace lpcaps::sampler {

TagIndex TagIndex::build(std::span<const corpus::TagRecord> records) {
  if (records.empty()) throw validation_error("empty_input", "no records to index");
  TagIndex index;
  std::map<std::string, std::unordered_set<std::string>> seen;
  for (const auto& r : records) {
    for (const auto& tag : r.tags) {
      if (seen[tag].insert(r.track_id).second) index.entries_[tag].push_back(r.track_id);
    }
  }
  for (const auto& [tag, items] : index.entries_) index.tags_.push_back(tag);
  return index;
}

const std::vector<std::string>& TagIndex::items(const std::string& tag) const {
  const auto it = entries_.find(tag);
  if (it == entries_.end()) throw validation_error("unknown_tag", "tag not in index: " + tag);
  return it->second;
}

std::vector<Draw> sample_draws(const TagIndex& index, std::size_t n, std::uint64_t seed,
                               SamplingMode mode) {
  std::vector<Draw> draws;
  if (n == 0) return draws;
  if (index.size() == 0) throw validation_error("empty_input", "tag index is empty");
  draws.reserve(n);
  Rng rng(seed);
  const auto& tags = index.tags();

  if (mode == SamplingMode::kWithReplacement) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto& anchor = tags[rng.below(tags.size())];
      const auto& items = index.items(anchor);
      draws.push_back({anchor, items[rng.below(items.size())]});
    }
    return draws;
  }

  std::vector<std::size_t> order(tags.size());
  std::size_t cursor = order.size();
  std::vector<std::vector<std::size_t>> queues(tags.size());
  while (draws.size() < n) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(order.begin(), order.end());
      cursor = 0;
    }
    const auto t = order[cursor++];
    const auto& items = index.items(tags[t]);
    auto& queue = queues[t];
    if (queue.empty()) {
      queue.resize(items.size());
      std::iota(queue.begin(), queue.end(), 0);
      rng.shuffle(queue.begin(), queue.end());
    }
    draws.push_back({tags[t], items[queue.back()]});
    queue.pop_back();
  }
  return draws;
}

std::vector<std::string> sample(const TagIndex& index, std::size_t n, std::uint64_t seed,
                                SamplingMode mode) {
  std::vector<std::string> ids;
  ids.reserve(n);
  for (auto& d : sample_draws(index, n, seed, mode)) ids.push_back(std::move(d.track_id));
  return ids;
}

}  // namespace lpcaps::sampler
