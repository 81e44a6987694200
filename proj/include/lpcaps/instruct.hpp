#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lpcaps::instruct {

enum class InstructionKind { kWriting, kSummary, kParaphrase, kAttributePrediction };

inline constexpr std::array<InstructionKind, 4> kAllKinds = {
    InstructionKind::kWriting, InstructionKind::kSummary, InstructionKind::kParaphrase,
    InstructionKind::kAttributePrediction};

/// "writing", "summary", "paraphrase", "attribute_prediction".
std::string_view to_string(InstructionKind kind);

/// Inverse of to_string; also accepts "attribute". Throws unknown_instruction.
InstructionKind kind_from_string(std::string_view name);

/// Parses a comma-separated list such as "writing,summary" or "all".
std::vector<InstructionKind> parse_kind_list(std::string_view list);

struct Prompt {
  InstructionKind kind = InstructionKind::kWriting;
  std::string text;
  std::vector<std::string> tags;  // normalized, as embedded in text
};

/// Instruction texts per kind. Defaults are the published LP-MusicCaps
/// instructions; any of them can be replaced from a key-value file with keys
/// writing / summary / paraphrase / attribute_prediction.
class InstructionSet {
 public:
  InstructionSet();

  static InstructionSet with_overrides(const std::filesystem::path& path);

  const std::string& text(InstructionKind kind) const {
    return texts_[static_cast<std::size_t>(kind)];
  }
  void set_text(InstructionKind kind, std::string text);

 private:
  std::array<std::string, 4> texts_;
};

/// Instruction text, a space, then the normalized tags joined by ", ".
/// Throws empty_tag_list when no tag survives normalization.
Prompt render_prompt(InstructionKind kind, std::span<const std::string> tags,
                     const InstructionSet& instructions = InstructionSet());

/// Tag-concatenation baseline: tags joined by ", ".
std::string tag_concat_caption(std::span<const std::string> tags);

inline constexpr std::string_view kTemplateStem = "the music is characterized by ";

/// Prompt-template baseline: kTemplateStem followed by the concatenated tags.
std::string template_caption(std::span<const std::string> tags);

// ---------------------------------------------------------------------------
// Attribute-prediction responses

struct AttributeResponse {
  std::vector<std::string> new_attributes;
  std::string description;

  bool operator==(const AttributeResponse&) const = default;
};

/// Locates the first `{...}` in raw model output that parses under a
/// restricted Python-literal grammar: an object with string keys whose values
/// are strings or lists of strings. Single or double quotes, backslash
/// escapes and trailing commas are accepted; surrounding prose or code fences
/// are ignored. Requires "new_attribute" (or "new_attributes") and
/// "description".
///
/// Error codes: no_object_found, unterminated_string, syntax_error,
/// missing_key, type_mismatch, empty_description.
AttributeResponse parse_attribute_response(std::string_view raw);

/// Double-quoted dictionary text that parse_attribute_response reads back to
/// an equal value.
std::string serialize_attribute_response(const AttributeResponse& response);

/// Parses a bracketed list of quoted strings, e.g. "['a', \"b\"]".
/// Throws malformed_list_literal (or unterminated_string) otherwise.
std::vector<std::string> parse_string_list_literal(std::string_view literal);

// ---------------------------------------------------------------------------
// Hallucination guard

enum class CoverageMode {
  /// Tag tokens must appear as a contiguous run in the caption tokens.
  kContiguous,
  /// Every tag token must appear somewhere in the caption.
  kBagOfTokens,
};

/// Fraction of tags found in the caption under the shared tokenizer.
/// A tag that tokenizes to nothing counts as found.
double tag_coverage(std::span<const std::string> tags, std::string_view caption,
                    CoverageMode mode = CoverageMode::kContiguous);

}  // namespace lpcaps::instruct
