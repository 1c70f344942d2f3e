#pragma once
// On-disk representation: line-delimited JSON records with a one-line
// header, RFC-3339 timestamps, and atomic file replacement.
//
// All flex file kinds (library, scenario, suite, audit) share this shape;
// the library format itself is owned here.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flex/errors.hpp"
#include "flex/experience.hpp"

namespace flex {

using Json = nlohmann::ordered_json;

// ---------- timestamps ----------

inline std::string format_rfc3339(std::chrono::system_clock::time_point tp) {
  auto secs = std::chrono::time_point_cast<std::chrono::seconds>(tp);
  std::time_t t = std::chrono::system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Timestamp source. Scripted runs default to the logical clock so that two
// identical runs serialize byte-identically; timestamps are informational.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::string now() = 0;
};

class SystemClock final : public Clock {
 public:
  std::string now() override { return format_rfc3339(std::chrono::system_clock::now()); }
};

class LogicalClock final : public Clock {
 public:
  explicit LogicalClock(int64_t base_epoch_seconds = 1767225600)  // 2026-01-01T00:00:00Z
      : base_(base_epoch_seconds) {}
  std::string now() override {
    auto tp = std::chrono::system_clock::time_point(std::chrono::seconds(base_ + tick_++));
    return format_rfc3339(tp);
  }

 private:
  int64_t base_;
  int64_t tick_ = 0;
};

// ---------- files ----------

// Write path for everything that must be replaced atomically. The stock
// sink stages into a sibling temp file and renames over the target, so a
// failure mid-write leaves the previous bytes intact. Tests substitute a
// failing sink to exercise that guarantee.
class FileSink {
 public:
  virtual ~FileSink() = default;
  virtual void write_file(const std::filesystem::path& path, const std::string& content) = 0;
};

class AtomicFileSink final : public FileSink {
 public:
  void write_file(const std::filesystem::path& path, const std::string& content) override {
    namespace fs = std::filesystem;
    fs::path tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) raise(Errc::StorageError, "cannot open " + tmp.string());
      out.write(content.data(), static_cast<std::streamsize>(content.size()));
      out.flush();
      if (!out) raise(Errc::StorageError, "short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) raise(Errc::StorageError, "rename " + tmp.string() + " -> " + path.string());
  }
};

inline FileSink& default_sink() {
  static AtomicFileSink sink;
  return sink;
}

inline std::string read_all_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::StorageError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------- line-delimited JSON ----------

struct JsonLine {
  int line_no = 0;  // 1-based
  Json value;
};

inline std::vector<JsonLine> parse_jsonl(const std::string& text, const std::string& what) {
  std::vector<JsonLine> lines;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    Json v = Json::parse(line, nullptr, false);
    if (v.is_discarded())
      raise(Errc::CorruptRecord, what + ": unparseable record at line " + std::to_string(n), n);
    lines.push_back({n, std::move(v)});
  }
  return lines;
}

// Validates the one-line header and returns the remaining records.
inline std::vector<JsonLine> parse_records(const std::string& text, const std::string& format,
                                           int supported_version) {
  auto lines = parse_jsonl(text, format);
  if (lines.empty()) raise(Errc::CorruptRecord, format + ": missing header", 1);
  const Json& h = lines.front().value;
  if (!h.is_object() || h.value("format", "") != format)
    raise(Errc::CorruptRecord, format + ": bad header record", lines.front().line_no);
  int version = h.value("version", -1);
  if (version != supported_version)
    raise(Errc::UnsupportedVersion,
          format + ": version " + std::to_string(version) + " unsupported",
          lines.front().line_no);
  lines.erase(lines.begin());
  return lines;
}

// ---------- library format ----------

inline Json source_to_json(const Source& s) {
  return Json{{"task_id", s.task_id},
              {"trajectory_index", s.trajectory_index},
              {"producer", s.producer},
              {"epoch", s.epoch}};
}

inline Source source_from_json(const Json& j, int line_no) {
  if (!j.is_object()) raise(Errc::CorruptRecord, "source must be an object", line_no);
  Source s;
  s.task_id = j.value("task_id", "");
  s.trajectory_index = j.value("trajectory_index", 0);
  s.producer = j.value("producer", "");
  s.epoch = j.value("epoch", 0);
  if (s.trajectory_index < 0 || s.epoch < 0)
    raise(Errc::CorruptRecord, "negative source counters", line_no);
  return s;
}

inline std::string serialize_library(const ExperienceLibrary& lib) {
  std::ostringstream out;
  Json header{{"format", "flex-library"},
              {"version", ExperienceLibrary::kFormatVersion},
              {"next_id", lib.next_id()}};
  out << header.dump() << '\n';
  for (const ExperienceEntry* e : lib.live_entries()) {
    Json j{{"type", "entry"},
           {"id", e->id},
           {"zone", to_string(e->zone)},
           {"level", to_string(e->level)},
           {"content", e->content},
           {"content_hash", e->content_hash},
           {"source", source_to_json(e->source)},
           {"quality", e->quality},
           {"usage_count", e->usage_count},
           {"created_at", e->created_at},
           {"updated_at", e->updated_at}};
    out << j.dump() << '\n';
  }
  for (const auto& [id, t] : lib.tombstones()) {
    Json j{{"type", "tombstone"}, {"id", t.id}, {"merged_into", t.merged_into}};
    out << j.dump() << '\n';
  }
  return out.str();
}

inline ExperienceLibrary parse_library(const std::string& text) {
  auto records = parse_records(text, "flex-library", ExperienceLibrary::kFormatVersion);
  ExperienceLibrary lib;
  for (const auto& [line_no, j] : records) {
    const std::string type = j.value("type", "");
    try {
      if (type == "entry") {
        ExperienceEntry e;
        e.id = j.value("id", 0ULL);
        e.zone = zone_from_string(j.value("zone", ""));
        e.level = level_from_string(j.value("level", ""));
        e.content = j.value("content", "");
        e.content_hash = j.value("content_hash", "");
        e.source = source_from_json(j.value("source", Json::object()), line_no);
        e.quality = j.value("quality", 0.5);
        e.usage_count = j.value("usage_count", 0ULL);
        e.created_at = j.value("created_at", "");
        e.updated_at = j.value("updated_at", "");
        if (e.id == 0) raise(Errc::CorruptRecord, "entry id must be positive", line_no);
        if (e.quality < 0.0 || e.quality > 1.0)
          raise(Errc::CorruptRecord, "quality outside [0,1]", line_no);
        std::string norm = normalize_content(e.content);  // throws if empty
        if (norm != e.content) raise(Errc::CorruptRecord, "content not normalized", line_no);
        if (sha256_hex(e.content) != e.content_hash)
          raise(Errc::CorruptRecord, "content_hash does not match content", line_no);
        lib.restore_entry(std::move(e));
      } else if (type == "tombstone") {
        Tombstone t;
        t.id = j.value("id", 0ULL);
        t.merged_into = j.value("merged_into", 0ULL);
        if (t.id == 0 || t.merged_into == 0 || t.id == t.merged_into)
          raise(Errc::CorruptRecord, "bad tombstone record", line_no);
        lib.restore_tombstone(t);
      } else {
        raise(Errc::CorruptRecord, "unknown record type '" + type + "'", line_no);
      }
    } catch (Error& e) {
      if (e.line() == 0) e.at_line(line_no);
      throw;
    }
  }
  // Tombstone pointers must land on some known id, live or merged-away.
  for (const auto& [id, t] : lib.tombstones()) {
    if (!lib.is_live(t.merged_into) && !lib.tombstones().count(t.merged_into))
      raise(Errc::CorruptRecord,
            "tombstone " + std::to_string(id) + " points at unknown id " +
                std::to_string(t.merged_into));
  }
  lib.restore_next_id(lib.next_id());
  Json header = Json::parse(text.substr(0, text.find('\n')));
  if (header.contains("next_id")) lib.restore_next_id(header["next_id"].get<EntryId>());
  return lib;
}

inline void write_library_file(const ExperienceLibrary& lib, const std::filesystem::path& path,
                               FileSink& sink = default_sink()) {
  sink.write_file(path, serialize_library(lib));
}

inline ExperienceLibrary read_library_file(const std::filesystem::path& path) {
  return parse_library(read_all_text(path));
}

}  // namespace flex
