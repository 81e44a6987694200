#include <gtest/gtest.h>

#include <fstream>
#include <functional>
#include <random>

#include "lpcaps/error.hpp"
#include "lpcaps/instruct.hpp"
#include "lpcaps/metrics.hpp"
#include "support/fixtures.hpp"

namespace {

using namespace lpcaps::instruct;
using lpcaps::Error;
using Tags = std::vector<std::string>;

std::string code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

Tags random_tags(std::mt19937_64& gen) {
  static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789 -'&/ABC";
  std::uniform_int_distribution<int> count(1, 10);
  std::uniform_int_distribution<int> len(1, 14);
  std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
  Tags tags;
  const int n = count(gen);
  while (static_cast<int>(tags.size()) < n) {
    std::string t;
    const int l = len(gen);
    for (int i = 0; i < l; ++i) t += alphabet[ch(gen)];
    if (!lpcaps::metrics::tokenize(t).empty()) tags.push_back(t);
  }
  return tags;
}

TEST(Kinds, NamesRoundTrip) {
  for (auto k : kAllKinds) EXPECT_EQ(kind_from_string(to_string(k)), k);
  EXPECT_EQ(kind_from_string("attribute"), InstructionKind::kAttributePrediction);
  EXPECT_EQ(parse_kind_list("all").size(), 4u);
  EXPECT_EQ(parse_kind_list("writing, summary"),
            (std::vector<InstructionKind>{InstructionKind::kWriting, InstructionKind::kSummary}));
  EXPECT_EQ(code_of([] { kind_from_string("poem"); }), "unknown_instruction");
}

TEST(RenderPrompt, WritingTemplateIsExact) {
  const Tags tags{"instrumental", "groovy"};
  EXPECT_EQ(render_prompt(InstructionKind::kWriting, tags).text,
            "Write a song description sentence including the following attributes. "
            "instrumental, groovy");
}

TEST(RenderPrompt, SummaryMentionsArtistRule) {
  const Tags tags{"jazz"};
  const auto p = render_prompt(InstructionKind::kSummary, tags);
  EXPECT_NE(p.text.find("Don't write the artist name or album name."), std::string::npos);
  EXPECT_TRUE(ends_with(p.text, "jazz"));
}

TEST(RenderPrompt, AllFourInstructionTexts) {
  const InstructionSet set;
  EXPECT_EQ(set.text(InstructionKind::kWriting),
            "Write a song description sentence including the following attributes.");
  EXPECT_EQ(set.text(InstructionKind::kSummary),
            "Write a single sentence that summarizes a song with the following attributes. "
            "Don't write the artist name or album name.");
  EXPECT_NE(set.text(InstructionKind::kParaphrase).find("Creative paraphrasing is acceptable."),
            std::string::npos);
  EXPECT_EQ(set.text(InstructionKind::kAttributePrediction)
                .rfind("Write the answer as a Python dictionary with new_attribute and "
                       "description as keys.",
                       0),
            0u);
}

TEST(RenderPrompt, EmptyTagsRejected) {
  const Tags none;
  EXPECT_EQ(code_of([&] { render_prompt(InstructionKind::kWriting, none); }), "empty_tag_list");
  const Tags blanks{"  ", ""};
  EXPECT_EQ(code_of([&] { render_prompt(InstructionKind::kWriting, blanks); }), "empty_tag_list");
}

TEST(RenderPrompt, EndsWithNormalizedTagListForRandomTags) {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 300; ++trial) {
    const auto tags = random_tags(gen);
    for (auto kind : kAllKinds) {
      const auto p = render_prompt(kind, tags);
      std::string joined;
      for (const auto& t : p.tags) joined += (joined.empty() ? "" : ", ") + t;
      EXPECT_TRUE(ends_with(p.text, joined));
      for (const auto& t : p.tags) EXPECT_NE(p.text.find(t), std::string::npos);
    }
  }
}

TEST(RenderPrompt, OverridesFromFile) {
  fixtures::TempDir dir;
  {
    std::ofstream f(dir / "inst.conf");
    f << "# custom\nwriting = \"Describe this song.\"\n";
  }
  const auto set = InstructionSet::with_overrides(dir / "inst.conf");
  const Tags tags{"rock"};
  EXPECT_EQ(render_prompt(InstructionKind::kWriting, tags, set).text, "Describe this song. rock");
  EXPECT_EQ(set.text(InstructionKind::kSummary), InstructionSet().text(InstructionKind::kSummary));
}

TEST(Baselines, ConcatAndTemplate) {
  const Tags two{"rock", "guitar"};
  const Tags one{"a"};
  const Tags rock{"rock"};
  const Tags none;
  EXPECT_EQ(tag_concat_caption(two), "rock, guitar");
  EXPECT_EQ(tag_concat_caption(one), "a");
  EXPECT_EQ(template_caption(rock), "the music is characterized by rock");
  EXPECT_EQ(code_of([&] { tag_concat_caption(none); }), "empty_tag_list");
  EXPECT_EQ(code_of([&] { template_caption(none); }), "empty_tag_list");
}

TEST(Baselines, TokenArithmetic) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto tags = random_tags(gen);
    std::size_t sum = 0;
    for (const auto& t : tags) sum += lpcaps::metrics::token_count(t);
    const auto concat = lpcaps::metrics::token_count(tag_concat_caption(tags));
    EXPECT_EQ(concat, sum);
    EXPECT_EQ(lpcaps::metrics::token_count(template_caption(tags)), concat + 5);
  }
}

TEST(AttributeParser, ChiptuneExampleOutput) {
  const auto r = parse_attribute_response(fixtures::kChiptuneAttribute);
  EXPECT_EQ(r.new_attributes, (Tags{"8-bit sound", "chiptune style", "retro vibe"}));
  EXPECT_EQ(r.description, fixtures::kChiptuneDescription);
}

TEST(AttributeParser, SingleQuotesFencesAndProse) {
  EXPECT_EQ(parse_attribute_response("{'new_attribute': [], 'description': 'x'}"),
            (AttributeResponse{{}, "x"}));
  const auto fenced = parse_attribute_response(
      "Sure! Here it is:\n```python\n{'new_attributes': ['lo-fi',], 'description': "
      "'It\\'s calm',}\n```\nHope this helps.");
  EXPECT_EQ(fenced.new_attributes, (Tags{"lo-fi"}));
  EXPECT_EQ(fenced.description, "It's calm");
  const auto unicode = parse_attribute_response(R"({"new_attribute": ["café"], "description": "a\nb"})");
  EXPECT_EQ(unicode.new_attributes, (Tags{"caf\xc3\xa9"}));
  EXPECT_EQ(unicode.description, "a\nb");
}

TEST(AttributeParser, SkipsLeadingBracesThatAreNotTheObject) {
  const auto r = parse_attribute_response(
      "set {a} first, then {\"new_attribute\": [\"x\"], \"description\": \"y\"}");
  EXPECT_EQ(r.description, "y");
}

TEST(AttributeParser, Errors) {
  EXPECT_EQ(code_of([] { parse_attribute_response("no dict here"); }), "no_object_found");
  EXPECT_EQ(code_of([] { parse_attribute_response("{'description': 'abc"); }),
            "unterminated_string");
  EXPECT_EQ(code_of([] { parse_attribute_response("{'new_attribute': []}"); }), "missing_key");
  EXPECT_EQ(code_of([] { parse_attribute_response("{'new_attribute': 'x', 'description': 'y'}"); }),
            "type_mismatch");
  EXPECT_EQ(code_of([] { parse_attribute_response("{'new_attribute': [], 'description': 3}"); }),
            "type_mismatch");
  EXPECT_EQ(code_of([] { parse_attribute_response("{'new_attribute': [], 'description': '  '}"); }),
            "empty_description");
}

TEST(AttributeParser, SerializeRoundTrip) {
  std::mt19937_64 gen(4);
  const std::string alphabet = "ab c'\"\\\n\t{}[],:\xc3\xa9-";
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::uniform_int_distribution<int> len(1, 20);
  std::uniform_int_distribution<int> count(0, 5);
  const auto str = [&] {
    std::string s;
    const int n = len(gen);
    for (int i = 0; i < n; ++i) s += alphabet[pick(gen)];
    return s;
  };
  for (int trial = 0; trial < 500; ++trial) {
    AttributeResponse r;
    const int n = count(gen);
    for (int i = 0; i < n; ++i) r.new_attributes.push_back("k" + str());
    r.description = "d" + str();
    EXPECT_EQ(parse_attribute_response(serialize_attribute_response(r)), r);
  }
}

TEST(ListLiteral, AspectCells) {
  EXPECT_EQ(parse_string_list_literal("['video game theme', 'no singer']"),
            (Tags{"video game theme", "no singer"}));
  EXPECT_EQ(parse_string_list_literal("[]"), Tags{});
  EXPECT_EQ(parse_string_list_literal(R"(["it's", 'a "b"'])"), (Tags{"it's", "a \"b\""}));
  EXPECT_EQ(code_of([] { parse_string_list_literal("rock, pop"); }), "malformed_list_literal");
  EXPECT_EQ(code_of([] { parse_string_list_literal("['rock', 3]"); }), "malformed_list_literal");
}

TEST(Coverage, ChiptuneWritingIsFull) {
  EXPECT_DOUBLE_EQ(tag_coverage(fixtures::kChiptuneTags, fixtures::kChiptuneWriting), 1.0);
}

TEST(Coverage, SimpleCases) {
  const Tags jazz{"jazz"};
  const Tags jazz_metal{"jazz", "metal"};
  EXPECT_DOUBLE_EQ(tag_coverage(jazz, "pure jazz"), 1.0);
  EXPECT_DOUBLE_EQ(tag_coverage(jazz_metal, "pure jazz"), 0.5);
  const Tags phrase{"small keyboard"};
  EXPECT_DOUBLE_EQ(tag_coverage(phrase, "a keyboard that is small"), 0.0);
  EXPECT_DOUBLE_EQ(tag_coverage(phrase, "a keyboard that is small", CoverageMode::kBagOfTokens),
                   1.0);
}

TEST(Coverage, ConcatenationAlwaysCovered) {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 300; ++trial) {
    const auto tags = random_tags(gen);
    EXPECT_DOUBLE_EQ(tag_coverage(tags, tag_concat_caption(tags)), 1.0);
  }
}

TEST(Coverage, Monotone) {
  const std::string caption = "an upbeat rock song with electric guitar";
  Tags tags{"rock", "jazz"};
  const double base = tag_coverage(tags, caption);
  Tags with_present = tags;
  with_present.push_back("electric guitar");
  EXPECT_GE(tag_coverage(with_present, caption), base);
  Tags with_absent = tags;
  with_absent.push_back("violin");
  EXPECT_DOUBLE_EQ(tag_coverage(with_absent, caption) * 3.0, base * 2.0);
}

}  // namespace
