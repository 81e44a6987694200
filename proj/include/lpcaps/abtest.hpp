#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace lpcaps::abtest {

enum class Slot { kA, kB };
enum class Choice { kA, kB, kEqual };

std::string_view to_string(Slot slot);
std::string_view to_string(Choice choice);
Slot slot_from_string(std::string_view s);
/// "A", "B" or "Equal" (case-insensitive; "both equal" also accepted).
/// Throws invalid_choice.
Choice choice_from_string(std::string_view s);

struct QuestionItem {
  std::string question_id;
  std::string sample_id;
  std::string method_name;
  Slot ground_truth_position = Slot::kA;
  std::string caption_a;
  std::string caption_b;

  bool operator==(const QuestionItem&) const = default;
};

/// Blinding slot of the ground truth, a fair coin keyed by (seed, question id).
Slot ground_truth_slot(std::uint64_t study_seed, std::string_view question_id);

/// method name -> (sample id -> caption)
using MethodCaptions = std::map<std::string, std::map<std::string, std::string>>;

/// One question per (sample, method), samples in the given order and methods
/// in name order; ids are q00001, q00002, ... Throws missing_caption.
std::vector<QuestionItem> build_study(std::span<const std::string> samples,
                                      const MethodCaptions& methods,
                                      const std::map<std::string, std::string>& ground_truth,
                                      std::uint64_t seed);

/// Seeded choice of n distinct samples (all of them, shuffled, if n >= size).
std::vector<std::string> select_samples(std::span<const std::string> samples, std::size_t n,
                                        std::uint64_t seed);

struct Study {
  std::string study_id;
  std::uint64_t seed = 0;
  std::vector<QuestionItem> questions;

  const QuestionItem* find(std::string_view question_id) const;
};

nlohmann::json to_json(const Study& study);
Study study_from_json(const nlohmann::json& j);

struct RatingResponse {
  std::string rater_id;
  std::string question_id;
  Choice q1 = Choice::kEqual;
  Choice q2 = Choice::kEqual;
  std::string submitted_at;

  bool operator==(const RatingResponse&) const = default;
};

nlohmann::json to_json(const RatingResponse& r);
/// Throws bad_request / invalid_choice.
RatingResponse response_from_json(const nlohmann::json& j);

struct Counts {
  std::size_t win = 0;
  std::size_t tie = 0;
  std::size_t lose = 0;

  std::size_t total() const { return win + tie + lose; }
  bool operator==(const Counts&) const = default;
};

enum class Outcome { kWin, kTie, kLose };

/// Outcome for the method side of a blinded question.
Outcome unblind(Slot ground_truth_position, Choice choice);

/// Per method: index 0 = Q1 (more true positives), 1 = Q2 (fewer false positives).
struct AggregateResult {
  std::map<std::string, std::array<Counts, 2>> methods;

  bool operator==(const AggregateResult&) const = default;
};

/// Pure fold over the log. Responses to unknown questions are ignored.
AggregateResult aggregate(const Study& study, std::span<const RatingResponse> responses);

/// Counts plus percentages (0 when a method has no responses).
nlohmann::json to_json(const AggregateResult& result);

/// Human-readable win/tie/lose table, one row per method and question.
std::string format_report(const AggregateResult& result);

/// A study plus its persisted state under one directory:
///   study.json       questions, written once
///   sessions.jsonl   one {rater_id, question_ids, assigned_at} per rater
///   responses.jsonl  append-only rating log
///   snapshot.json    aggregate rewritten every few responses
/// Opening replays both logs, so a restart reproduces the same state.
/// Methods are safe to call concurrently; writes are serialized.
class StudyStore {
 public:
  /// Creates (or reopens) state for a study in dir. Throws study_mismatch if
  /// dir already holds a different study.
  static std::unique_ptr<StudyStore> create(Study study, const std::filesystem::path& dir);
  /// Throws study_not_found.
  static std::unique_ptr<StudyStore> open(const std::filesystem::path& dir);

  const Study& study() const { return study_; }

  /// Returns the rater's existing session if any. Otherwise picks k questions
  /// least-answered first (ties by fewest assignments, then a seeded shuffle),
  /// persists and returns them. Throws insufficient_questions.
  std::vector<std::string> assign_session(const std::string& rater_id, std::size_t k = 20);

  std::optional<std::vector<std::string>> session_of(const std::string& rater_id) const;

  /// Throws unknown_question, not_assigned, duplicate_response.
  void record_response(RatingResponse response);

  bool answered(const std::string& rater_id, const std::string& question_id) const;
  std::vector<RatingResponse> responses() const;
  AggregateResult results() const;

  static constexpr std::size_t kSnapshotEvery = 20;

 private:
  StudyStore(Study study, std::filesystem::path dir);
  void replay();

  Study study_;
  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::vector<std::string>> sessions_;
  std::unordered_map<std::string, std::size_t> assigned_count_;
  std::unordered_map<std::string, std::size_t> answered_count_;
  std::vector<RatingResponse> log_;
  std::map<std::pair<std::string, std::string>, std::size_t> by_rater_question_;
};

}  // namespace lpcaps::abtest
