#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lpcaps/instruct.hpp"

namespace lpcaps::corpus {

using instruct::InstructionKind;

/// One audio item and its multi-label annotation.
struct TagRecord {
  std::string track_id;
  std::vector<std::string> tags;  // normalized, non-empty, duplicate-free
  std::optional<std::string> audio_ref;
  std::optional<double> duration_sec;

  bool operator==(const TagRecord&) const = default;
};

/// Normalizes tags and validates the record invariants.
/// Throws empty_tag_list, invalid_record.
TagRecord make_record(std::string track_id, std::span<const std::string> raw_tags,
                      std::optional<std::string> audio_ref = std::nullopt,
                      std::optional<double> duration_sec = std::nullopt);

struct PseudoCaption {
  std::string track_id;
  InstructionKind kind = InstructionKind::kWriting;
  std::string text;
  std::string model_id;
  std::vector<std::string> new_attributes;
  double tag_coverage = 0.0;
  std::string created_at;

  bool operator==(const PseudoCaption&) const = default;
};

struct CaptionedRecord {
  std::string track_id;
  std::map<InstructionKind, PseudoCaption> captions;  // at most one per kind
  std::vector<std::string> source_tags;
  std::optional<std::string> audio_ref;
  std::optional<double> duration_sec;
};

struct DatasetStats {
  std::size_t n_items = 0;
  std::optional<double> total_duration_h;  // only when every item has a duration
  double captions_per_audio = 0.0;
  double avg_token_mean = 0.0;
  double avg_token_std = 0.0;
  double labels_per_clip = 0.0;
  std::size_t n_captions = 0;
};

// ---------------------------------------------------------------------------
// Ingestion

/// One {"track_id", "tags", ["audio_ref"], ["duration_sec"]} object per line.
/// Blank lines are skipped. Throws malformed_line, duplicate_track_id,
/// empty_tag_list.
std::vector<TagRecord> ingest_jsonl(const std::filesystem::path& path);
std::vector<TagRecord> parse_records_jsonl(std::string_view content,
                                           std::string_view source = "<memory>");

struct CsvColumns {
  std::string id = "ytid";
  std::string aspects = "aspect_list";
  /// Optional clip bounds; the duration is end - start when both exist.
  std::string start = "start_s";
  std::string end = "end_s";
};

/// MusicCaps-style CSV whose aspect column holds a list literal such as
/// "['video game theme', 'no singer']". Throws missing_column,
/// malformed_aspect_list, empty_tag_list, duplicate_track_id.
std::vector<TagRecord> ingest_aspect_csv(const std::filesystem::path& path,
                                         const CsvColumns& columns = {});

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
};

/// RFC 4180 reader: quoted fields may contain commas, newlines and doubled
/// quotes. Throws malformed_csv.
CsvTable parse_csv(std::string_view content);
CsvTable read_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Assembly and statistics

/// Groups captions under their tracks, in record order. Tracks without any
/// caption are omitted. A later caption of the same kind replaces an earlier
/// one (logged). Throws orphan_caption.
std::vector<CaptionedRecord> assemble(std::span<const TagRecord> records,
                                      std::span<const PseudoCaption> captions);

/// Throws empty_dataset.
DatasetStats stats(std::span<const CaptionedRecord> dataset);

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const TagRecord& record);
std::string serialize_records(std::span<const TagRecord> records);

nlohmann::json to_json(const PseudoCaption& caption);
PseudoCaption caption_from_json(const nlohmann::json& j);
std::vector<PseudoCaption> read_captions_jsonl(const std::filesystem::path& path);

/// Output dataset line: track_id, tags, caption_writing, caption_summary,
/// caption_paraphrase, caption_attribute, new_attributes, model, created_at,
/// coverage, plus audio_ref / duration_sec when known.
nlohmann::json to_json(const CaptionedRecord& record);
CaptionedRecord captioned_from_json(const nlohmann::json& j);
std::string serialize_dataset(std::span<const CaptionedRecord> dataset);
std::vector<CaptionedRecord> read_dataset_jsonl(const std::filesystem::path& path);

nlohmann::json to_json(const DatasetStats& stats);

/// Dataset column name for a kind, e.g. "caption_attribute".
std::string caption_field(InstructionKind kind);

}  // namespace lpcaps::corpus
