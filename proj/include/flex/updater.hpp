#pragma once
// Meta-level MDP transition: each candidate experience is discarded (exact
// duplicate), merged with a lexically similar live entry (updater role
// decides), or inserted. Steps stage against a shadow copy and commit
// atomically; every decision lands in the audit log.

#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "flex/explorer.hpp"
#include "flex/gateway.hpp"
#include "flex/prompts.hpp"
#include "flex/retrieval.hpp"
#include "flex/task.hpp"

namespace flex {

struct UpdateDecision {
  enum class Kind : uint8_t { Discard, Merge, Insert } kind = Kind::Insert;
  EntryId target_id = 0;       // Merge: the surviving live entry
  std::string merged_content;  // Merge
};

inline const char* to_string(UpdateDecision::Kind k) {
  switch (k) {
    case UpdateDecision::Kind::Discard: return "discard";
    case UpdateDecision::Kind::Merge: return "merge";
    case UpdateDecision::Kind::Insert: return "insert";
  }
  return "insert";
}

struct DecisionRecord {
  CandidateExperience candidate;
  UpdateDecision decision;
  EntryId new_id = 0;  // id issued for the candidate (Insert, or Merge's transient entry)
};

struct MetaStep {
  std::string sample_id;
  std::vector<DecisionRecord> decisions;
  double reward = 0.0;
  uint64_t library_size_before = 0;
  uint64_t library_size_after = 0;
  int inserts = 0;
  int merges = 0;
  int discards = 0;
  // Candidates whose decide() hit an unavailable backend; they are queued
  // for a later step, never dropped.
  std::vector<CandidateExperience> queued;
};

// Append-only decision log, buffered so a failed step leaves no trace.
class AuditLog {
 public:
  static constexpr int kFormatVersion = 1;

  AuditLog() {
    Json header{{"format", "flex-audit"}, {"version", kFormatVersion}};
    header_ = header.dump() + "\n";
  }

  void append(const std::string& sample_id, const std::string& candidate_hash,
              const char* decision, EntryId target_id, uint64_t size_before, uint64_t size_after,
              int epoch) {
    Json j{{"sample_id", sample_id},
           {"candidate_hash", candidate_hash},
           {"decision", decision}};
    if (target_id != 0) j["target_id"] = target_id;
    j["size_before"] = size_before;
    j["size_after"] = size_after;
    j["epoch"] = epoch;
    body_ += j.dump() + "\n";
  }

  void append_raw(const std::string& lines) { body_ += lines; }

  std::string text() const { return header_ + body_; }
  const std::string& body() const { return body_; }

  void write(const std::filesystem::path& path, FileSink& sink = default_sink()) const {
    sink.write_file(path, text());
  }

 private:
  std::string header_;
  std::string body_;
};

struct UpdaterConfig {
  int shortlist_m = 5;  // lexically nearest live entries shown to the updater
  int retrieval_k = 5;
  LibraryMode library_mode = LibraryMode::Hierarchical;
  // Without an Updater backend, similarity at or above this token-Jaccard
  // triggers a lexical merge; below it the candidate is inserted.
  double lexical_merge_threshold = 0.6;
};

class MetaUpdater {
 public:
  MetaUpdater(Gateway& gateway, UpdaterConfig config, const PromptTemplates& prompts,
              Clock* clock = nullptr)
      : gateway_(gateway), config_(std::move(config)), prompts_(prompts), clock_(clock) {}

  // Callback invoked with the staged library before a step commits; used to
  // persist the post-step state. If it throws, the step does not apply.
  using PersistFn = std::function<void(const ExperienceLibrary&)>;

  // Three-way rule: exact duplicate -> Discard with no updater call; empty
  // library -> Insert with no call; otherwise the updater role sees the
  // shortlist and answers DISTINCT or MERGE:<id>|<merged text>. Unparseable
  // answers insert: losing an experience is worse than a near-duplicate.
  // Without an Updater backend the lexical threshold decides instead.
  UpdateDecision decide(const CandidateExperience& candidate, const ExperienceLibrary& library) {
    if (library.find_exact(candidate.content))
      return {UpdateDecision::Kind::Discard, 0, {}};
    if (library.live_count() == 0) return {UpdateDecision::Kind::Insert, 0, {}};

    std::vector<std::pair<double, EntryId>> shortlist =
        lexical_shortlist(candidate.content, library);

    if (!gateway_.is_bound(Role::Updater)) {
      const auto& [top_score, top_id] = shortlist.front();
      if (top_score < config_.lexical_merge_threshold)
        return {UpdateDecision::Kind::Insert, 0, {}};
      // Keep the higher-quality side's text, longer on ties.
      const ExperienceEntry* target = library.entry(top_id);
      std::string merged = candidate.content;
      if (target->quality > candidate.quality ||
          (target->quality == candidate.quality &&
           target->content.size() >= candidate.content.size()))
        merged = target->content;
      return {UpdateDecision::Kind::Merge, top_id, merged};
    }

    std::string shortlist_text;
    for (const auto& [score, id] : shortlist)
      shortlist_text += std::to_string(id) + " | " + library.entry(id)->content + "\n";

    ModelRequest req;
    req.role = Role::Updater;
    req.temperature = 0.0;
    req.messages = {{Speaker::System, prompts_.updater_system},
                    {Speaker::User, fill_template(prompts_.updater_decide,
                                                  {{"candidate", candidate.content},
                                                   {"shortlist", shortlist_text}})}};
    const std::string reply = gateway_.complete(req).content;

    auto merge_pos = reply.find("MERGE:");
    if (merge_pos != std::string::npos) {
      size_t bar = reply.find('|', merge_pos);
      if (bar != std::string::npos) {
        auto id_val = parse_finite(reply.substr(merge_pos + 6, bar - merge_pos - 6));
        std::string merged = reply.substr(bar + 1);
        if (auto nl = merged.find('\n'); nl != std::string::npos) merged.resize(nl);
        bool content_ok = false;
        try {
          merged = normalize_content(merged);
          content_ok = true;
        } catch (const Error&) {
        }
        if (id_val && content_ok && library.is_live(static_cast<EntryId>(*id_val)))
          return {UpdateDecision::Kind::Merge, static_cast<EntryId>(*id_val), merged};
      }
    }
    return {UpdateDecision::Kind::Insert, 0, {}};
  }

  // Applies a step's candidates in order against a shadow copy, then commits.
  // A storage failure (persist throwing) leaves the library untouched.
  MetaStep apply(ExperienceLibrary& library, const std::string& sample_id,
                 const std::vector<CandidateExperience>& candidates, int epoch = 0,
                 AuditLog* audit = nullptr, const PersistFn& persist = {}) {
    MetaStep step;
    step.sample_id = sample_id;
    step.library_size_before = library.live_count();

    ExperienceLibrary staged = library;
    AuditLog local;

    for (const auto& candidate : candidates) {
      UpdateDecision decision;
      try {
        decision = decide(candidate, staged);
      } catch (const Error& e) {
        if (e.code() != Errc::BackendUnavailable) throw;
        step.queued.push_back(candidate);
        continue;
      }
      uint64_t before = staged.live_count();
      DecisionRecord record;
      record.candidate = candidate;
      record.decision = decision;
      switch (decision.kind) {
        case UpdateDecision::Kind::Discard:
          ++step.discards;
          break;
        case UpdateDecision::Kind::Insert:
          record.new_id = staged.insert(candidate.zone, candidate.level, candidate.content,
                                        candidate.source, candidate.quality, now());
          ++step.inserts;
          break;
        case UpdateDecision::Kind::Merge: {
          record.new_id = staged.insert(candidate.zone, candidate.level, candidate.content,
                                        candidate.source, candidate.quality, now());
          try {
            staged.merge_into(decision.target_id, record.new_id, decision.merged_content, now());
          } catch (const Error& e) {
            if (e.code() != Errc::DuplicateContent) throw;
            // The merged text already lives elsewhere: fold the candidate
            // into that entry instead of duplicating it.
            EntryId owner = *staged.find_exact(decision.merged_content);
            staged.merge_into(owner, record.new_id, staged.entry(owner)->content, now());
            record.decision.target_id = owner;
          }
          ++step.merges;
          break;
        }
      }
      if (audit)
        local.append(sample_id, content_hash(candidate.content), to_string(record.decision.kind),
                     record.decision.target_id, before, staged.live_count(), epoch);
      step.decisions.push_back(std::move(record));
    }

    step.library_size_after = staged.live_count();
    if (persist) {
      try {
        persist(staged);
      } catch (const Error&) {
        throw;
      }
    }
    library = std::move(staged);
    if (audit) audit->append_raw(local.body());
    return step;
  }

  // r^m: retrieval against the post-update library, one deterministic actor
  // pass, then the task's evaluator.
  double meta_reward(const TaskInstance& sample, ExperienceLibrary& library) {
    RetrievalQuery query;
    query.query_text = sample.input_x;
    query.k = config_.retrieval_k;
    query.single_stage = config_.library_mode == LibraryMode::Flat;
    RetrievalResult retrieved = retrieve(query, library, &gateway_, prompts_, clock_);

    ModelRequest req;
    req.role = Role::Actor;
    req.temperature = 0.0;
    req.messages = {{Speaker::System, prompts_.actor_system},
                    {Speaker::User, fill_template(prompts_.actor_initial,
                                                  {{"retrieved_experiences",
                                                    retrieved.flattened_context},
                                                   {"question", sample.input_x}})}};
    ModelResponse resp = gateway_.complete_with_tools(std::move(req));
    if (resp.finish_reason == FinishReason::Error) return 0.0;
    return score_prediction(sample.evaluator, extract_answer(resp.content), sample.gold);
  }

 private:
  std::string now() { return clock_ ? clock_->now() : std::string{}; }

  // Top-m live entries by token Jaccard against the candidate, ties by id.
  std::vector<std::pair<double, EntryId>> lexical_shortlist(
      const std::string& content, const ExperienceLibrary& library) const {
    TokenSet cand = token_set(content);
    std::vector<std::pair<double, EntryId>> scored;
    for (const auto* e : library.live_entries())
      scored.emplace_back(jaccard(cand, token_set(e->content)), e->id);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    if (scored.size() > static_cast<size_t>(config_.shortlist_m))
      scored.resize(static_cast<size_t>(config_.shortlist_m));
    return scored;
  }

  Gateway& gateway_;
  UpdaterConfig config_;
  const PromptTemplates& prompts_;
  Clock* clock_;
};

// G^m: undiscounted sum of meta rewards over one episode.
inline double episode_return(const std::vector<double>& rewards) {
  return std::accumulate(rewards.begin(), rewards.end(), 0.0);
}

inline double episode_accuracy(const std::vector<double>& rewards) {
  if (rewards.empty()) return 0.0;
  return episode_return(rewards) / static_cast<double>(rewards.size());
}

}  // namespace flex
