#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lpcaps/corpus.hpp"

namespace lpcaps::sampler {

/// Inverted index tag -> tracks carrying it. Tags iterate in lexicographic
/// order and items keep record order, so draws depend only on the seed.
class TagIndex {
 public:
  /// Throws empty_input.
  static TagIndex build(std::span<const corpus::TagRecord> records);

  const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }
  const std::vector<std::string>& tags() const { return tags_; }
  const std::vector<std::string>& items(const std::string& tag) const;
  std::size_t size() const { return tags_.size(); }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
  std::vector<std::string> tags_;
};

enum class SamplingMode {
  /// Every draw picks an anchor tag uniformly, then an item of that tag uniformly.
  kWithReplacement,
  /// Anchors cycle through a fresh shuffle of all tags; each tag hands out
  /// its items in shuffled order before repeating any.
  kEpoch,
};

struct Draw {
  std::string anchor;
  std::string track_id;
};

std::vector<Draw> sample_draws(const TagIndex& index, std::size_t n, std::uint64_t seed,
                               SamplingMode mode = SamplingMode::kWithReplacement);

/// Track ids of sample_draws.
std::vector<std::string> sample(const TagIndex& index, std::size_t n, std::uint64_t seed,
                                SamplingMode mode = SamplingMode::kWithReplacement);

}  // namespace lpcaps::sampler
