#include "lpcaps/instruct.hpp"

#include <algorithm>
#include <unordered_set>

#include "lpcaps/error.hpp"
#include "lpcaps/io.hpp"
#include "lpcaps/metrics.hpp"
#include "lpcaps/text.hpp"

namespace lpcaps::instruct {

namespace {

constexpr std::array<std::string_view, 4> kKindNames = {"writing", "summary", "paraphrase",
                                                        "attribute_prediction"};

constexpr std::array<std::string_view, 4> kDefaultInstructions = {
    "Write a song description sentence including the following attributes.",
    "Write a single sentence that summarizes a song with the following attributes. "
    "Don't write the artist name or album name.",
    "Write a song description sentence including the following attributes. "
    "Creative paraphrasing is acceptable.",
    "Write the answer as a Python dictionary with new_attribute and description as keys. "
    "For new_attribute, write new attributes that show high co-occurrence with the "
    "following attributes. For description, write a song description sentence including "
    "the following attributes and new attributes.",
};

std::vector<std::string> require_tags(std::span<const std::string> tags) {
  auto normalized = text::normalize_tags(tags);
  if (normalized.empty()) throw validation_error("empty_tag_list", "tag list is empty");
  return normalized;
}

}  // namespace

std::string_view to_string(InstructionKind kind) {
  return kKindNames[static_cast<std::size_t>(kind)];
}

InstructionKind kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (name == kKindNames[i]) return static_cast<InstructionKind>(i);
  }
  if (name == "attribute") return InstructionKind::kAttributePrediction;
  throw validation_error("unknown_instruction",
                         "unknown instruction kind '" + std::string(name) + "'");
}

std::vector<InstructionKind> parse_kind_list(std::string_view list) {
  const auto trimmed = io::trim(list);
  if (trimmed == "all") return {kAllKinds.begin(), kAllKinds.end()};
  std::vector<InstructionKind> kinds;
  std::size_t start = 0;
  while (start <= trimmed.size()) {
    auto end = trimmed.find(',', start);
    if (end == std::string::npos) end = trimmed.size();
    const auto item = io::trim(std::string_view(trimmed).substr(start, end - start));
    if (!item.empty()) {
      const auto kind = kind_from_string(item);
      if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) kinds.push_back(kind);
    }
    start = end + 1;
  }
  if (kinds.empty()) throw validation_error("unknown_instruction", "no instruction kinds given");
  return kinds;
}

InstructionSet::InstructionSet() {
  for (std::size_t i = 0; i < texts_.size(); ++i) texts_[i] = kDefaultInstructions[i];
}

InstructionSet InstructionSet::with_overrides(const std::filesystem::path& path) {
  InstructionSet set;
  for (auto& [key, value] : io::read_key_values(path)) {
    set.set_text(kind_from_string(key), std::move(value));
  }
  return set;
}

void InstructionSet::set_text(InstructionKind kind, std::string text) {
  if (io::trim(text).empty()) {
    throw validation_error("malformed_config",
                           "empty instruction text for " + std::string(to_string(kind)));
  }
  texts_[static_cast<std::size_t>(kind)] = std::move(text);
}

Prompt render_prompt(InstructionKind kind, std::span<const std::string> tags,
                     const InstructionSet& instructions) {
  Prompt prompt;
  prompt.kind = kind;
  prompt.tags = require_tags(tags);
  prompt.text = instructions.text(kind) + " " + text::join(prompt.tags, ", ");
  return prompt;
}

std::string tag_concat_caption(std::span<const std::string> tags) {
  const auto normalized = require_tags(tags);
  return text::join(normalized, ", ");
}

std::string template_caption(std::span<const std::string> tags) {
  return std::string(kTemplateStem) + tag_concat_caption(tags);
}

double tag_coverage(std::span<const std::string> tags, std::string_view caption,
                    CoverageMode mode) {
  if (tags.empty()) throw validation_error("empty_tag_list", "tag list is empty");
  const auto caption_tokens = metrics::tokenize(caption);
  const std::unordered_set<std::string> caption_vocab(caption_tokens.begin(),
                                                      caption_tokens.end());
  std::size_t found = 0;
  for (const auto& tag : tags) {
    const auto tag_tokens = metrics::tokenize(tag);
    bool hit = false;
    if (mode == CoverageMode::kContiguous) {
      hit = std::search(caption_tokens.begin(), caption_tokens.end(), tag_tokens.begin(),
                        tag_tokens.end()) != caption_tokens.end() ||
            tag_tokens.empty();
    } else {
      hit = std::all_of(tag_tokens.begin(), tag_tokens.end(),
                        [&](const std::string& t) { return caption_vocab.count(t) != 0; });
    }
    if (hit) ++found;
  }
  return static_cast<double>(found) / static_cast<double>(tags.size());
}

}  // namespace lpcaps::instruct
