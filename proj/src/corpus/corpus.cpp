#include "lpcaps/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "lpcaps/error.hpp"
#include "lpcaps/io.hpp"
#include "lpcaps/log.hpp"
#include "lpcaps/metrics.hpp"
#include "lpcaps/text.hpp"

namespace lpcaps::corpus {

using nlohmann::json;

TagRecord make_record(std::string track_id, std::span<const std::string> raw_tags,
                      std::optional<std::string> audio_ref,
                      std::optional<double> duration_sec) {
  if (track_id.empty()) throw validation_error("invalid_record", "empty track_id");
  TagRecord record;
  record.tags = text::normalize_tags(raw_tags);
  if (record.tags.empty()) {
    throw validation_error("empty_tag_list", "track " + track_id + " has no tags");
  }
  if (duration_sec && !(*duration_sec >= 0.0)) {
    throw validation_error("invalid_record", "track " + track_id + " has a negative duration");
  }
  record.track_id = std::move(track_id);
  record.audio_ref = std::move(audio_ref);
  record.duration_sec = duration_sec;
  return record;
}

namespace {

void check_unique(const std::vector<TagRecord>& records) {
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.track_id).second) {
      throw validation_error("duplicate_track_id", "duplicate track_id " + r.track_id);
    }
  }
}

std::string id_string(const json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

std::vector<TagRecord> parse_records_jsonl(std::string_view content, std::string_view source) {
  std::vector<TagRecord> records;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    const auto line = io::trim(content.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;

    const auto malformed = [&](const std::string& why) {
      return validation_error("malformed_line", std::string(source) + ":" +
                                                    std::to_string(line_no) + ": " + why);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw malformed("not valid JSON");
    }
    if (!j.is_object() || !j.contains("track_id") || !j.contains("tags") ||
        !j["tags"].is_array()) {
      throw malformed("expected an object with track_id and a tags array");
    }
    std::vector<std::string> tags;
    for (const auto& t : j["tags"]) {
      if (!t.is_string()) throw malformed("tags must be strings");
      tags.push_back(t.get<std::string>());
    }
    std::optional<std::string> audio_ref;
    if (j.contains("audio_ref") && j["audio_ref"].is_string()) {
      audio_ref = j["audio_ref"].get<std::string>();
    }
    std::optional<double> duration;
    if (j.contains("duration_sec") && j["duration_sec"].is_number()) {
      duration = j["duration_sec"].get<double>();
    }
    auto record = make_record(id_string(j["track_id"]), tags, std::move(audio_ref), duration);
    if (!seen.insert(record.track_id).second) {
      throw validation_error("duplicate_track_id", "duplicate track_id " + record.track_id);
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<TagRecord> ingest_jsonl(const std::filesystem::path& path) {
  return parse_records_jsonl(io::read_file(path), path.string());
}

std::vector<TagRecord> ingest_aspect_csv(const std::filesystem::path& path,
                                         const CsvColumns& columns) {
  const auto table = read_csv(path);
  const auto id_col = table.column(columns.id);
  const auto aspect_col = table.column(columns.aspects);
  if (!id_col) throw validation_error("missing_column", "CSV has no column " + columns.id);
  if (!aspect_col) {
    throw validation_error("missing_column", "CSV has no column " + columns.aspects);
  }
  const auto start_col = table.column(columns.start);
  const auto end_col = table.column(columns.end);

  std::vector<TagRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t row = 0; row < table.rows.size(); ++row) {
    const auto& cells = table.rows[row];
    const auto cell = [&](std::size_t c) -> const std::string& {
      static const std::string kEmpty;
      return c < cells.size() ? cells[c] : kEmpty;
    };
    std::vector<std::string> tags;
    try {
      tags = instruct::parse_string_list_literal(cell(*aspect_col));
    } catch (const Error& e) {
      throw validation_error("malformed_aspect_list",
                             "row " + std::to_string(row + 1) + ": " + e.what());
    }
    std::optional<double> duration;
    if (start_col && end_col) {
      try {
        duration = std::stod(cell(*end_col)) - std::stod(cell(*start_col));
      } catch (const std::exception&) {
        duration.reset();
      }
    }
    records.push_back(make_record(cell(*id_col), tags, std::nullopt, duration));
  }
  check_unique(records);
  return records;
}

std::optional<std::size_t> CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

CsvTable parse_csv(std::string_view content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  if (content.substr(0, 3) == "\xEF\xBB\xBF") i = 3;  // UTF-8 BOM

  const auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  const auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row.front().empty())) rows.push_back(std::move(row));
    row.clear();
  };

  for (; i < content.size(); ++i) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started) {
          throw validation_error("malformed_csv", "stray quote inside unquoted field");
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(c);
        field_started = true;
        break;
    }
  }
  if (in_quotes) throw validation_error("malformed_csv", "unterminated quoted field");
  if (field_started || !row.empty()) end_row();

  CsvTable table;
  if (rows.empty()) return table;
  table.header = std::move(rows.front());
  table.rows.assign(std::make_move_iterator(rows.begin() + 1),
                    std::make_move_iterator(rows.end()));
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(io::read_file(path)); }

// ---------------------------------------------------------------------------

std::vector<CaptionedRecord> assemble(std::span<const TagRecord> records,
                                      std::span<const PseudoCaption> captions) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) index.emplace(records[i].track_id, i);

  std::vector<std::map<InstructionKind, PseudoCaption>> grouped(records.size());
  for (const auto& c : captions) {
    const auto it = index.find(c.track_id);
    if (it == index.end()) {
      throw validation_error("orphan_caption", "caption for unknown track " + c.track_id);
    }
    auto& slot = grouped[it->second];
    if (slot.count(c.kind) != 0) {
      log::warn("replacing earlier " + std::string(instruct::to_string(c.kind)) +
                " caption for track " + c.track_id);
    }
    slot[c.kind] = c;
  }

  std::vector<CaptionedRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (grouped[i].empty()) continue;
    CaptionedRecord r;
    r.track_id = records[i].track_id;
    r.captions = std::move(grouped[i]);
    r.source_tags = records[i].tags;
    r.audio_ref = records[i].audio_ref;
    r.duration_sec = records[i].duration_sec;
    out.push_back(std::move(r));
  }
  return out;
}

DatasetStats stats(std::span<const CaptionedRecord> dataset) {
  if (dataset.empty()) throw validation_error("empty_dataset", "dataset is empty");
  DatasetStats s;
  std::unordered_set<std::string> ids;
  std::vector<std::string> texts;
  double duration_sum = 0.0;
  bool all_durations = true;
  double tag_sum = 0.0;
  for (const auto& r : dataset) {
    ids.insert(r.track_id);
    for (const auto& [kind, caption] : r.captions) texts.push_back(caption.text);
    tag_sum += static_cast<double>(r.source_tags.size());
    if (r.duration_sec) {
      duration_sum += *r.duration_sec;
    } else {
      all_durations = false;
    }
  }
  s.n_items = ids.size();
  s.n_captions = texts.size();
  if (all_durations) s.total_duration_h = duration_sum / 3600.0;
  s.captions_per_audio = static_cast<double>(texts.size()) / static_cast<double>(s.n_items);
  s.labels_per_clip = tag_sum / static_cast<double>(dataset.size());
  const auto tokens = metrics::token_stats(texts);
  s.avg_token_mean = tokens.mean;
  s.avg_token_std = tokens.std;
  return s;
}

// ---------------------------------------------------------------------------

std::string caption_field(InstructionKind kind) {
  switch (kind) {
    case InstructionKind::kWriting: return "caption_writing";
    case InstructionKind::kSummary: return "caption_summary";
    case InstructionKind::kParaphrase: return "caption_paraphrase";
    case InstructionKind::kAttributePrediction: return "caption_attribute";
  }
  return {};
}

json to_json(const TagRecord& record) {
  json j{{"track_id", record.track_id}, {"tags", record.tags}};
  if (record.audio_ref) j["audio_ref"] = *record.audio_ref;
  if (record.duration_sec) j["duration_sec"] = *record.duration_sec;
  return j;
}

std::string serialize_records(std::span<const TagRecord> records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

json to_json(const PseudoCaption& caption) {
  return json{{"track_id", caption.track_id},
              {"kind", instruct::to_string(caption.kind)},
              {"text", caption.text},
              {"model", caption.model_id},
              {"new_attributes", caption.new_attributes},
              {"tag_coverage", caption.tag_coverage},
              {"created_at", caption.created_at}};
}

PseudoCaption caption_from_json(const json& j) {
  PseudoCaption c;
  try {
    c.track_id = id_string(j.at("track_id"));
    c.kind = instruct::kind_from_string(j.at("kind").get<std::string>());
    c.text = j.at("text").get<std::string>();
    c.model_id = j.value("model", std::string());
    c.new_attributes = j.value("new_attributes", std::vector<std::string>{});
    c.tag_coverage = j.value("tag_coverage", 0.0);
    c.created_at = j.value("created_at", std::string());
  } catch (const json::exception& e) {
    throw validation_error("malformed_line", std::string("bad caption record: ") + e.what());
  }
  return c;
}

namespace {

template <typename T, typename F>
std::vector<T> read_jsonl(const std::filesystem::path& path, F&& convert) {
  std::vector<T> out;
  std::size_t line_no = 0;
  for (const auto& line : io::read_lines(path)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw validation_error("malformed_line",
                             path.string() + ":" + std::to_string(line_no) + ": not valid JSON");
    }
    out.push_back(convert(j));
  }
  return out;
}

}  // namespace

std::vector<PseudoCaption> read_captions_jsonl(const std::filesystem::path& path) {
  return read_jsonl<PseudoCaption>(path, caption_from_json);
}

json to_json(const CaptionedRecord& record) {
  json j{{"track_id", record.track_id}, {"tags", record.source_tags}};
  std::string model;
  std::string created_at;
  json coverage = json::object();
  for (const auto kind : instruct::kAllKinds) {
    const auto it = record.captions.find(kind);
    if (it == record.captions.end()) {
      j[caption_field(kind)] = nullptr;
      continue;
    }
    const auto& c = it->second;
    j[caption_field(kind)] = c.text;
    coverage[std::string(instruct::to_string(kind))] = c.tag_coverage;
    if (model.empty()) model = c.model_id;
    created_at = std::max(created_at, c.created_at);
  }
  const auto attr = record.captions.find(InstructionKind::kAttributePrediction);
  j["new_attributes"] = attr == record.captions.end() ? std::vector<std::string>{}
                                                      : attr->second.new_attributes;
  j["model"] = model;
  j["created_at"] = created_at;
  j["coverage"] = coverage;
  if (record.audio_ref) j["audio_ref"] = *record.audio_ref;
  if (record.duration_sec) j["duration_sec"] = *record.duration_sec;
  return j;
}

CaptionedRecord captioned_from_json(const json& j) {
  CaptionedRecord r;
  try {
    r.track_id = id_string(j.at("track_id"));
    r.source_tags = j.at("tags").get<std::vector<std::string>>();
    const auto model = j.value("model", std::string());
    const auto created_at = j.value("created_at", std::string());
    const json coverage = j.value("coverage", json::object());
    for (const auto kind : instruct::kAllKinds) {
      const auto field = caption_field(kind);
      if (!j.contains(field) || j[field].is_null()) continue;
      PseudoCaption c;
      c.track_id = r.track_id;
      c.kind = kind;
      c.text = j[field].get<std::string>();
      c.model_id = model;
      c.created_at = created_at;
      c.tag_coverage = coverage.value(std::string(instruct::to_string(kind)), 0.0);
      if (kind == InstructionKind::kAttributePrediction) {
        c.new_attributes = j.value("new_attributes", std::vector<std::string>{});
      }
      r.captions.emplace(kind, std::move(c));
    }
    if (j.contains("audio_ref") && j["audio_ref"].is_string()) {
      r.audio_ref = j["audio_ref"].get<std::string>();
    }
    if (j.contains("duration_sec") && j["duration_sec"].is_number()) {
      r.duration_sec = j["duration_sec"].get<double>();
    }
  } catch (const json::exception& e) {
    throw validation_error("malformed_line", std::string("bad dataset record: ") + e.what());
  }
  return r;
}

std::string serialize_dataset(std::span<const CaptionedRecord> dataset) {
  std::string out;
  for (const auto& r : dataset) out += to_json(r).dump() + "\n";
  return out;
}

std::vector<CaptionedRecord> read_dataset_jsonl(const std::filesystem::path& path) {
  return read_jsonl<CaptionedRecord>(path, captioned_from_json);
}

json to_json(const DatasetStats& s) {
  return json{{"n_items", s.n_items},
              {"n_captions", s.n_captions},
              {"total_duration_h",
               s.total_duration_h ? json(*s.total_duration_h) : json(nullptr)},
              {"captions_per_audio", s.captions_per_audio},
              {"avg_token", {{"mean", s.avg_token_mean}, {"std", s.avg_token_std}}},
              {"labels_per_clip", s.labels_per_clip}};
}

}  // namespace lpcaps::corpus
