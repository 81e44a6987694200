#include <algorithm>
#include <cctype>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "lpcaps/abtest.hpp"
#include "lpcaps/error.hpp"
#include "lpcaps/io.hpp"
#include "lpcaps/log.hpp"
#include "lpcaps/rng.hpp"

namespace lpcaps::abtest {

using nlohmann::json;

std::string_view to_string(Slot slot) { return slot == Slot::kA ? "A" : "B"; }

std::string_view to_string(Choice choice) {
  switch (choice) {
    case Choice::kA: return "A";
    case Choice::kB: return "B";
    case Choice::kEqual: return "Equal";
  }
  return {};
}

Slot slot_from_string(std::string_view s) {
  if (s == "A" || s == "a") return Slot::kA;
  if (s == "B" || s == "b") return Slot::kB;
  throw validation_error("bad_request", "slot must be A or B");
}

Choice choice_from_string(std::string_view s) {
  std::string lower;
  for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "a") return Choice::kA;
  if (lower == "b") return Choice::kB;
  if (lower == "equal" || lower == "both equal" || lower == "tie") return Choice::kEqual;
  throw validation_error("invalid_choice", "choice must be A, B or Equal, got '" +
                                               std::string(s) + "'");
}

Slot ground_truth_slot(std::uint64_t study_seed, std::string_view question_id) {
  return Rng(study_seed).split(question_id).coin() ? Slot::kB : Slot::kA;
}

namespace {

std::string question_id_for(std::size_t index) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "q%05zu", index + 1);
  return buf;
}

}  // namespace

std::vector<QuestionItem> build_study(std::span<const std::string> samples,
                                      const MethodCaptions& methods,
                                      const std::map<std::string, std::string>& ground_truth,
                                      std::uint64_t seed) {
  std::vector<QuestionItem> questions;
  questions.reserve(samples.size() * methods.size());
  for (const auto& sample : samples) {
    const auto gt = ground_truth.find(sample);
    if (gt == ground_truth.end()) {
      throw validation_error("missing_caption", "no ground-truth caption for sample " + sample);
    }
    for (const auto& [method, captions] : methods) {
      const auto cap = captions.find(sample);
      if (cap == captions.end()) {
        throw validation_error("missing_caption",
                               "method " + method + " has no caption for sample " + sample);
      }
      QuestionItem q;
      q.question_id = question_id_for(questions.size());
      q.sample_id = sample;
      q.method_name = method;
      q.ground_truth_position = ground_truth_slot(seed, q.question_id);
      if (q.ground_truth_position == Slot::kA) {
        q.caption_a = gt->second;
        q.caption_b = cap->second;
      } else {
        q.caption_a = cap->second;
        q.caption_b = gt->second;
      }
      questions.push_back(std::move(q));
    }
  }
  return questions;
}

std::vector<std::string> select_samples(std::span<const std::string> samples, std::size_t n,
                                        std::uint64_t seed) {
  std::vector<std::string> pool(samples.begin(), samples.end());
  Rng rng = Rng(seed).split("select_samples");
  rng.shuffle(pool.begin(), pool.end());
  if (n < pool.size()) pool.resize(n);
  return pool;
}

const QuestionItem* Study::find(std::string_view question_id) const {
  for (const auto& q : questions) {
    if (q.question_id == question_id) return &q;
  }
  return nullptr;
}

json to_json(const Study& study) {
  json qs = json::array();
  for (const auto& q : study.questions) {
    qs.push_back({{"question_id", q.question_id},
                  {"sample_id", q.sample_id},
                  {"method_name", q.method_name},
                  {"ground_truth_position", to_string(q.ground_truth_position)},
                  {"caption_a", q.caption_a},
                  {"caption_b", q.caption_b}});
  }
  return json{{"study_id", study.study_id}, {"seed", study.seed}, {"questions", qs}};
}

Study study_from_json(const json& j) {
  Study study;
  try {
    study.study_id = j.at("study_id").get<std::string>();
    study.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& q : j.at("questions")) {
      QuestionItem item;
      item.question_id = q.at("question_id").get<std::string>();
      item.sample_id = q.at("sample_id").get<std::string>();
      item.method_name = q.at("method_name").get<std::string>();
      item.ground_truth_position = slot_from_string(q.at("ground_truth_position").get<std::string>());
      item.caption_a = q.at("caption_a").get<std::string>();
      item.caption_b = q.at("caption_b").get<std::string>();
      study.questions.push_back(std::move(item));
    }
  } catch (const json::exception& e) {
    throw validation_error("malformed_study", std::string("bad study file: ") + e.what());
  }
  return study;
}

json to_json(const RatingResponse& r) {
  return json{{"rater_id", r.rater_id},
              {"question_id", r.question_id},
              {"q1_choice", to_string(r.q1)},
              {"q2_choice", to_string(r.q2)},
              {"submitted_at", r.submitted_at}};
}

RatingResponse response_from_json(const json& j) {
  if (!j.is_object()) throw validation_error("bad_request", "response must be a JSON object");
  const auto text_field = [&](const char* name) {
    if (!j.contains(name) || !j[name].is_string() || j[name].get<std::string>().empty()) {
      throw validation_error("bad_request", std::string("missing field ") + name);
    }
    return j[name].get<std::string>();
  };
  RatingResponse r;
  r.rater_id = text_field("rater_id");
  r.question_id = text_field("question_id");
  r.q1 = choice_from_string(text_field("q1_choice"));
  r.q2 = choice_from_string(text_field("q2_choice"));
  if (j.contains("submitted_at") && j["submitted_at"].is_string()) {
    r.submitted_at = j["submitted_at"].get<std::string>();
  }
  return r;
}

Outcome unblind(Slot ground_truth_position, Choice choice) {
  if (choice == Choice::kEqual) return Outcome::kTie;
  const Slot picked = choice == Choice::kA ? Slot::kA : Slot::kB;
  return picked == ground_truth_position ? Outcome::kLose : Outcome::kWin;
}

AggregateResult aggregate(const Study& study, std::span<const RatingResponse> responses) {
  std::unordered_map<std::string, const QuestionItem*> by_id;
  AggregateResult result;
  for (const auto& q : study.questions) {
    by_id.emplace(q.question_id, &q);
    result.methods.try_emplace(q.method_name);
  }
  for (const auto& r : responses) {
    const auto it = by_id.find(r.question_id);
    if (it == by_id.end()) continue;
    auto& per_question = result.methods[it->second->method_name];
    const Choice choices[2] = {r.q1, r.q2};
    for (int k = 0; k < 2; ++k) {
      auto& c = per_question[static_cast<std::size_t>(k)];
      switch (unblind(it->second->ground_truth_position, choices[k])) {
        case Outcome::kWin: ++c.win; break;
        case Outcome::kTie: ++c.tie; break;
        case Outcome::kLose: ++c.lose; break;
      }
    }
  }
  return result;
}

namespace {

double percent(std::size_t part, std::size_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(total);
}

json counts_json(const Counts& c) {
  const auto n = c.total();
  return json{{"win", c.win},
              {"tie", c.tie},
              {"lose", c.lose},
              {"total", n},
              {"win_pct", percent(c.win, n)},
              {"tie_pct", percent(c.tie, n)},
              {"lose_pct", percent(c.lose, n)}};
}

}  // namespace

json to_json(const AggregateResult& result) {
  json methods = json::object();
  for (const auto& [name, per_question] : result.methods) {
    methods[name] = {{"q1", counts_json(per_question[0])}, {"q2", counts_json(per_question[1])}};
  }
  return json{{"methods", methods}};
}

std::string format_report(const AggregateResult& result) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %-3s %7s %7s %7s %6s\n", "method", "q", "win%",
                "tie%", "lose%", "n");
  out << line;
  for (const auto& [name, per_question] : result.methods) {
    for (int k = 0; k < 2; ++k) {
      const auto& c = per_question[static_cast<std::size_t>(k)];
      std::snprintf(line, sizeof line, "%-24s %-3s %7.1f %7.1f %7.1f %6zu\n", name.c_str(),
                    k == 0 ? "Q1" : "Q2", percent(c.win, c.total()), percent(c.tie, c.total()),
                    percent(c.lose, c.total()), c.total());
      out << line;
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// StudyStore

namespace fs = std::filesystem;

StudyStore::StudyStore(Study study, fs::path dir) : study_(std::move(study)), dir_(std::move(dir)) {}

std::unique_ptr<StudyStore> StudyStore::create(Study study, const fs::path& dir) {
  const auto study_file = dir / "study.json";
  if (fs::exists(study_file)) {
    const auto existing = study_from_json(json::parse(io::read_file(study_file)));
    if (to_json(existing) != to_json(study)) {
      throw validation_error("study_mismatch",
                             dir.string() + " already holds a different study");
    }
  } else {
    io::write_file_atomic(study_file, to_json(study).dump(2) + "\n");
  }
  std::unique_ptr<StudyStore> store(new StudyStore(std::move(study), dir));
  store->replay();
  return store;
}

std::unique_ptr<StudyStore> StudyStore::open(const fs::path& dir) {
  const auto study_file = dir / "study.json";
  if (!fs::exists(study_file)) {
    throw validation_error("study_not_found", "no study.json in " + dir.string());
  }
  json j;
  try {
    j = json::parse(io::read_file(study_file));
  } catch (const json::parse_error&) {
    throw validation_error("malformed_study", study_file.string() + " is not valid JSON");
  }
  std::unique_ptr<StudyStore> store(new StudyStore(study_from_json(j), dir));
  store->replay();
  return store;
}

void StudyStore::replay() {
  const auto read_log = [](const fs::path& path) {
    std::vector<json> entries;
    if (!fs::exists(path)) return entries;
    for (const auto& line : io::read_lines(path)) {
      if (io::trim(line).empty()) continue;
      try {
        entries.push_back(json::parse(line));
      } catch (const json::parse_error&) {
        // A crash mid-append leaves at most one torn trailing line.
        log::warn("skipping unreadable line in " + path.string());
      }
    }
    return entries;
  };
  for (const auto& j : read_log(dir_ / "sessions.jsonl")) {
    const auto rater = j.at("rater_id").get<std::string>();
    if (sessions_.count(rater) != 0) continue;
    auto ids = j.at("question_ids").get<std::vector<std::string>>();
    for (const auto& id : ids) ++assigned_count_[id];
    sessions_.emplace(rater, std::move(ids));
  }
  for (const auto& j : read_log(dir_ / "responses.jsonl")) {
    auto r = response_from_json(j);
    const auto key = std::make_pair(r.rater_id, r.question_id);
    if (by_rater_question_.count(key) != 0) continue;
    by_rater_question_.emplace(key, log_.size());
    ++answered_count_[r.question_id];
    log_.push_back(std::move(r));
  }
}

std::vector<std::string> StudyStore::assign_session(const std::string& rater_id, std::size_t k) {
  if (rater_id.empty()) throw validation_error("bad_request", "rater id is empty");
  {
    std::shared_lock lock(mutex_);
    if (const auto it = sessions_.find(rater_id); it != sessions_.end()) return it->second;
  }
  if (k == 0) return {};
  std::unique_lock lock(mutex_);
  if (const auto it = sessions_.find(rater_id); it != sessions_.end()) return it->second;

  std::vector<const QuestionItem*> pool;
  for (const auto& q : study_.questions) {
    if (by_rater_question_.count({rater_id, q.question_id}) == 0) pool.push_back(&q);
  }
  if (pool.size() < k) {
    throw validation_error("insufficient_questions",
                           "only " + std::to_string(pool.size()) + " questions available, " +
                               std::to_string(k) + " requested");
  }
  Rng rng = Rng(study_.seed).split("session:" + rater_id);
  rng.shuffle(pool.begin(), pool.end());
  const auto count_of = [](const auto& counts, const std::string& id) {
    const auto it = counts.find(id);
    return it == counts.end() ? std::size_t{0} : it->second;
  };
  std::stable_sort(pool.begin(), pool.end(), [&](const QuestionItem* a, const QuestionItem* b) {
    const auto ka = std::make_pair(count_of(answered_count_, a->question_id),
                                   count_of(assigned_count_, a->question_id));
    const auto kb = std::make_pair(count_of(answered_count_, b->question_id),
                                   count_of(assigned_count_, b->question_id));
    return ka < kb;
  });
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < k; ++i) ids.push_back(pool[i]->question_id);

  io::append_line(dir_ / "sessions.jsonl",
                  json{{"rater_id", rater_id}, {"question_ids", ids}, {"assigned_at", io::now_utc()}}
                      .dump());
  for (const auto& id : ids) ++assigned_count_[id];
  sessions_.emplace(rater_id, ids);
  return ids;
}

std::optional<std::vector<std::string>> StudyStore::session_of(const std::string& rater_id) const {
  std::shared_lock lock(mutex_);
  const auto it = sessions_.find(rater_id);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

void StudyStore::record_response(RatingResponse response) {
  std::unique_lock lock(mutex_);
  if (study_.find(response.question_id) == nullptr) {
    throw validation_error("unknown_question", "unknown question " + response.question_id);
  }
  const auto session = sessions_.find(response.rater_id);
  if (session == sessions_.end() ||
      std::find(session->second.begin(), session->second.end(), response.question_id) ==
          session->second.end()) {
    throw validation_error("not_assigned", "question " + response.question_id +
                                               " is not assigned to rater " + response.rater_id);
  }
  const auto key = std::make_pair(response.rater_id, response.question_id);
  if (by_rater_question_.count(key) != 0) {
    throw validation_error("duplicate_response", "rater " + response.rater_id +
                                                     " already answered " + response.question_id);
  }
  if (response.submitted_at.empty()) response.submitted_at = io::now_utc();
  io::append_line(dir_ / "responses.jsonl", to_json(response).dump());
  by_rater_question_.emplace(key, log_.size());
  ++answered_count_[response.question_id];
  log_.push_back(std::move(response));

  if (log_.size() % kSnapshotEvery == 0) {
    const json snapshot{{"responses", log_.size()},
                        {"written_at", io::now_utc()},
                        {"results", to_json(aggregate(study_, log_))}};
    io::write_file_atomic(dir_ / "snapshot.json", snapshot.dump(2) + "\n");
  }
}

bool StudyStore::answered(const std::string& rater_id, const std::string& question_id) const {
  std::shared_lock lock(mutex_);
  return by_rater_question_.count({rater_id, question_id}) != 0;
}

std::vector<RatingResponse> StudyStore::responses() const {
  std::shared_lock lock(mutex_);
  return log_;
}

AggregateResult StudyStore::results() const {
  std::shared_lock lock(mutex_);
  return aggregate(study_, log_);
}

}  // namespace lpcaps::abtest
