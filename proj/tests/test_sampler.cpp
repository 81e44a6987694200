#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <set>

#include "lpcaps/corpus.hpp"
#include "lpcaps/error.hpp"
#include "lpcaps/sampler.hpp"

namespace {

using namespace lpcaps::sampler;
using lpcaps::corpus::make_record;
using lpcaps::corpus::TagRecord;
using Tags = std::vector<std::string>;

TEST(Index, Build) {
  const Tags rock{"rock"};
  const Tags rock_jazz{"rock", "jazz"};
  const std::vector<TagRecord> recs{make_record("a1", rock), make_record("a2", rock_jazz)};
  const auto idx = TagIndex::build(recs);
  EXPECT_EQ(idx.size(), 2u);
  EXPECT_EQ(idx.items("rock"), (Tags{"a1", "a2"}));
  EXPECT_EQ(idx.items("jazz"), (Tags{"a2"}));
  try {
    TagIndex::build({});
    FAIL();
  } catch (const lpcaps::Error& e) {
    EXPECT_EQ(e.code(), "empty_input");
  }
}

TEST(Sample, TrivialCases) {
  const Tags one{"x"};
  const std::vector<TagRecord> recs{make_record("only", one)};
  const auto idx = TagIndex::build(recs);
  EXPECT_TRUE(sample(idx, 0, 1).empty());
  EXPECT_EQ(sample(idx, 5, 1), Tags(5, "only"));
}

std::vector<TagRecord> skewed_records() {
  // Tag 0 sits on 90% of 1000 items; 49 other tags share the rest.
  std::vector<TagRecord> recs;
  for (int i = 0; i < 1000; ++i) {
    Tags tags;
    if (i < 900) tags.push_back("tag00");
    if (i >= 900 || i % 10 == 0) tags.push_back("tag" + std::to_string(1 + i % 49));
    recs.push_back(make_record("item" + std::to_string(i), tags));
  }
  return recs;
}

TEST(Sample, DrawsAreConsistentWithIndex) {
  const auto recs = skewed_records();
  const auto idx = TagIndex::build(recs);
  for (const auto& d : sample_draws(idx, 5000, 3)) {
    const auto& items = idx.items(d.anchor);
    EXPECT_NE(std::find(items.begin(), items.end(), d.track_id), items.end());
  }
}

TEST(Sample, SameSeedSameSequence) {
  const auto recs = skewed_records();
  const auto idx = TagIndex::build(recs);
  EXPECT_EQ(sample(idx, 2000, 42), sample(idx, 2000, 42));
  EXPECT_NE(sample(idx, 2000, 42), sample(idx, 2000, 43));
}

TEST(Sample, AnchorsUniformDespiteSkew) {
  const auto recs = skewed_records();
  const auto idx = TagIndex::build(recs);
  ASSERT_EQ(idx.size(), 50u);
  std::map<std::string, int> counts;
  for (const auto& d : sample_draws(idx, 100000, 7)) ++counts[d.anchor];
  EXPECT_EQ(counts.size(), 50u);
  for (const auto& [tag, n] : counts) {
    EXPECT_GE(n, 1750) << tag;
    EXPECT_LE(n, 2250) << tag;
  }
}

TEST(Sample, EpochModeCoversEachAnchorOncePerEpoch) {
  const auto recs = skewed_records();
  const auto idx = TagIndex::build(recs);
  const auto draws = sample_draws(idx, 150, 9, SamplingMode::kEpoch);
  for (std::size_t epoch = 0; epoch < 3; ++epoch) {
    std::set<std::string> anchors;
    for (std::size_t i = epoch * 50; i < (epoch + 1) * 50; ++i) anchors.insert(draws[i].anchor);
    EXPECT_EQ(anchors.size(), 50u);
  }
}

}  // namespace
