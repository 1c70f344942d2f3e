#pragma once
// The experience library: a dual-zone, three-level store of distilled
// textual experiences. Entries are deduplicated by content hash; merged
// entries leave tombstones so provenance chains survive.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "flex/content.hpp"
#include "flex/errors.hpp"

namespace flex {

enum class Zone : uint8_t { Golden, Warning };
enum class Level : uint8_t { Strategy, Pattern, Instance };

inline const char* to_string(Zone z) { return z == Zone::Golden ? "golden" : "warning"; }

inline const char* to_string(Level l) {
  switch (l) {
    case Level::Strategy: return "strategy";
    case Level::Pattern: return "pattern";
    case Level::Instance: return "instance";
  }
  return "pattern";
}

inline Zone zone_from_string(const std::string& s) {
  if (s == "golden") return Zone::Golden;
  if (s == "warning") return Zone::Warning;
  raise(Errc::CorruptRecord, "unknown zone '" + s + "'");
}

inline Level level_from_string(const std::string& s) {
  if (s == "strategy") return Level::Strategy;
  if (s == "pattern") return Level::Pattern;
  if (s == "instance") return Level::Instance;
  raise(Errc::CorruptRecord, "unknown level '" + s + "'");
}

constexpr Zone kAllZones[] = {Zone::Golden, Zone::Warning};
constexpr Level kAllLevels[] = {Level::Strategy, Level::Pattern, Level::Instance};

// Where an experience came from.
struct Source {
  std::string task_id;
  int trajectory_index = 0;
  std::string producer;  // model identifier that distilled it
  int epoch = 0;

  bool operator==(const Source&) const = default;
};

using EntryId = uint64_t;

struct ExperienceEntry {
  EntryId id = 0;
  Zone zone = Zone::Golden;
  Level level = Level::Pattern;
  std::string content;       // normalized
  std::string content_hash;  // sha256 of normalized content
  Source source;
  double quality = 0.5;  // [0,1], neutral prior when distillation gives none
  uint64_t usage_count = 0;
  std::string created_at;  // RFC-3339; informational, excluded from equality
  std::string updated_at;
};

struct Tombstone {
  EntryId id = 0;
  EntryId merged_into = 0;
};

struct LibraryStats {
  uint64_t live_count = 0;
  uint64_t tombstone_count = 0;
  // (zone, level) -> live entries in that partition
  std::map<std::pair<Zone, Level>, uint64_t> per_zone_level;
};

// The store itself. Plain value type: copies are snapshots, and the meta
// updater stages whole steps against a copy before committing.
class ExperienceLibrary {
 public:
  static constexpr int kFormatVersion = 1;

  ExperienceLibrary() = default;

  // --- mutations (single-writer) ---

  // Appends a new entry. content is normalized here; the caller is expected
  // to have consulted find_exact first, but duplicates are rejected anyway.
  EntryId insert(Zone zone, Level level, std::string_view content, Source source,
                 double quality = 0.5, std::string timestamp = {}) {
    std::string norm = normalize_content(content);
    std::string hash = sha256_hex(norm);
    if (by_hash_.count(hash))
      raise(Errc::DuplicateContent, "live entry with identical content already exists");
    ExperienceEntry e;
    e.id = next_id_++;
    e.zone = zone;
    e.level = level;
    e.content = std::move(norm);
    e.content_hash = hash;
    e.source = std::move(source);
    e.quality = quality;
    e.created_at = timestamp;
    e.updated_at = std::move(timestamp);
    by_hash_.emplace(e.content_hash, e.id);
    index_[{zone, level}].push_back(e.id);
    order_.push_back(e.id);
    entries_.emplace(e.id, std::move(e));
    return next_id_ - 1;
  }

  std::optional<EntryId> find_exact(std::string_view content) const {
    std::string hash;
    try {
      hash = content_hash(content);
    } catch (const Error&) {
      return std::nullopt;  // empty content matches nothing
    }
    auto it = by_hash_.find(hash);
    if (it == by_hash_.end()) return std::nullopt;
    return it->second;
  }

  // Folds victim into survivor: survivor takes merged_content and the better
  // quality, usage counts are summed, victim becomes a tombstone.
  EntryId merge_into(EntryId survivor_id, EntryId victim_id, std::string_view merged_content,
                     std::string timestamp = {}) {
    if (survivor_id == victim_id) raise(Errc::SelfMerge, "survivor and victim are the same entry");
    ExperienceEntry* survivor = find_live(survivor_id);
    ExperienceEntry* victim = find_live(victim_id);
    if (!survivor) raise(Errc::UnknownId, "survivor id " + std::to_string(survivor_id));
    if (!victim) raise(Errc::UnknownId, "victim id " + std::to_string(victim_id));

    std::string norm = normalize_content(merged_content);
    std::string hash = sha256_hex(norm);
    auto clash = by_hash_.find(hash);
    if (clash != by_hash_.end() && clash->second != survivor_id && clash->second != victim_id)
      raise(Errc::DuplicateContent,
            "merged content collides with live entry " + std::to_string(clash->second));

    by_hash_.erase(survivor->content_hash);
    by_hash_.erase(victim->content_hash);
    survivor->content = std::move(norm);
    survivor->content_hash = hash;
    survivor->quality = std::max(survivor->quality, victim->quality);
    survivor->usage_count += victim->usage_count;
    if (!timestamp.empty()) survivor->updated_at = std::move(timestamp);
    by_hash_.emplace(survivor->content_hash, survivor_id);

    remove_from_index(*victim);
    tombstones_.emplace(victim_id, Tombstone{victim_id, survivor_id});
    entries_.erase(victim_id);
    for (auto it = order_.begin(); it != order_.end(); ++it) {
      if (*it == victim_id) {
        order_.erase(it);
        break;
      }
    }
    return survivor_id;
  }

  void bump_usage(EntryId id, std::string timestamp = {}) {
    if (ExperienceEntry* e = find_live(id)) {
      ++e->usage_count;
      if (!timestamp.empty()) e->updated_at = std::move(timestamp);
    }
  }

  // --- queries ---

  const ExperienceEntry* entry(EntryId id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
  }

  bool is_live(EntryId id) const { return entries_.count(id) != 0; }

  // Live entries in insertion order.
  std::vector<const ExperienceEntry*> live_entries() const {
    std::vector<const ExperienceEntry*> out;
    out.reserve(order_.size());
    for (EntryId id : order_) out.push_back(&entries_.at(id));
    return out;
  }

  std::vector<const ExperienceEntry*> entries_at(Zone zone, Level level) const {
    std::vector<const ExperienceEntry*> out;
    auto it = index_.find({zone, level});
    if (it == index_.end()) return out;
    out.reserve(it->second.size());
    for (EntryId id : it->second) out.push_back(&entries_.at(id));
    return out;
  }

  const std::map<EntryId, Tombstone>& tombstones() const { return tombstones_; }

  uint64_t live_count() const { return entries_.size(); }
  EntryId next_id() const { return next_id_; }

  LibraryStats snapshot_stats() const {
    LibraryStats s;
    s.live_count = entries_.size();
    s.tombstone_count = tombstones_.size();
    for (Zone z : kAllZones)
      for (Level l : kAllLevels) s.per_zone_level[{z, l}] = 0;
    for (const auto& [key, ids] : index_) s.per_zone_level[key] = ids.size();
    return s;
  }

  // --- used by deserialization only ---

  void restore_entry(ExperienceEntry e) {
    if (by_hash_.count(e.content_hash))
      raise(Errc::DuplicateHash, "duplicate content hash " + e.content_hash);
    if (entries_.count(e.id) || tombstones_.count(e.id))
      raise(Errc::CorruptRecord, "duplicate id " + std::to_string(e.id));
    by_hash_.emplace(e.content_hash, e.id);
    index_[{e.zone, e.level}].push_back(e.id);
    order_.push_back(e.id);
    EntryId id = e.id;
    entries_.emplace(id, std::move(e));
    if (id >= next_id_) next_id_ = id + 1;
  }

  void restore_tombstone(Tombstone t) {
    if (entries_.count(t.id) || tombstones_.count(t.id))
      raise(Errc::CorruptRecord, "duplicate id " + std::to_string(t.id));
    if (t.id >= next_id_) next_id_ = t.id + 1;
    tombstones_.emplace(t.id, t);
  }

  void restore_next_id(EntryId next) {
    if (next > next_id_) next_id_ = next;
  }

 private:
  ExperienceEntry* find_live(EntryId id) {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
  }

  void remove_from_index(const ExperienceEntry& e) {
    auto it = index_.find({e.zone, e.level});
    if (it == index_.end()) return;
    auto& ids = it->second;
    for (auto pos = ids.begin(); pos != ids.end(); ++pos) {
      if (*pos == e.id) {
        ids.erase(pos);
        break;
      }
    }
  }

  std::map<EntryId, ExperienceEntry> entries_;
  std::vector<EntryId> order_;  // insertion order of live entries
  std::unordered_map<std::string, EntryId> by_hash_;
  std::map<std::pair<Zone, Level>, std::vector<EntryId>> index_;
  std::map<EntryId, Tombstone> tombstones_;
  EntryId next_id_ = 1;
};

}  // namespace flex
