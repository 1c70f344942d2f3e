#pragma once
// Library inheritance: export, validated import, and directional merge so a
// trained library can move between agents as a plug-in module.

#include <filesystem>
#include <string>
#include <vector>

#include "flex/serialize.hpp"
#include "flex/updater.hpp"

namespace flex {

inline void export_library(const ExperienceLibrary& lib, const std::filesystem::path& path,
                           FileSink& sink = default_sink()) {
  write_library_file(lib, path, sink);
}

// Fully re-validates on load: record shapes, normalized content, hash
// consistency, duplicate freedom, id uniqueness.
inline ExperienceLibrary import_library(const std::filesystem::path& path) {
  return read_library_file(path);
}

struct MergeOutcome {
  ExperienceLibrary library;
  int inserted = 0;
  int merged = 0;
  int discarded = 0;
  std::vector<CandidateExperience> queued;  // backend-failed decisions
};

// Directional merge: base keeps its id space and wins conflicts. Each
// incoming live entry runs through the updater's discard/merge/insert rule
// against the evolving result, with incoming provenance preserved. Incoming
// tombstones never resurrect anything and are not carried over (their ids
// belong to the source library's id space).
inline MergeOutcome merge_libraries(const ExperienceLibrary& base,
                                    const ExperienceLibrary& incoming, MetaUpdater& updater,
                                    AuditLog* audit = nullptr,
                                    const std::string& merge_label = "merge") {
  MergeOutcome out;
  out.library = base;

  std::vector<CandidateExperience> candidates;
  for (const ExperienceEntry* e : incoming.live_entries()) {
    CandidateExperience c;
    c.zone = e->zone;
    c.level = e->level;
    c.content = e->content;
    c.quality = e->quality;
    c.source = e->source;
    candidates.push_back(std::move(c));
  }

  MetaStep step = updater.apply(out.library, merge_label, candidates, 0, audit);
  out.inserted = step.inserts;
  out.merged = step.merges;
  out.discarded = step.discards;
  out.queued = std::move(step.queued);
  return out;
}

}  // namespace flex
