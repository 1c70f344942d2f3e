#pragma once
// Hierarchical retrieval over the library: Strategy -> Pattern -> Instance,
// top-k per stage. Scoring is either a Retriever-role model call per stage
// or the deterministic lexical scorer (token Jaccard), which doubles as the
// test oracle's subject.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "flex/content.hpp"
#include "flex/experience.hpp"
#include "flex/gateway.hpp"
#include "flex/prompts.hpp"

namespace flex {

struct RetrievalQuery {
  std::string query_text;
  std::string reasoning_state;
  int k = 5;
  bool include_golden = true;
  bool include_warning = true;
  bool single_stage = false;  // flat libraries: one pool across all levels
};

struct ScoredEntry {
  EntryId id = 0;
  double score = 0.0;
  std::string content;
  Zone zone = Zone::Golden;
  Level level = Level::Pattern;
};

struct RetrievalResult {
  std::vector<ScoredEntry> strategies;
  std::vector<ScoredEntry> patterns;
  std::vector<ScoredEntry> instances;
  std::string flattened_context;

  std::vector<EntryId> hit_ids() const {
    std::vector<EntryId> ids;
    for (const auto* list : {&strategies, &patterns, &instances})
      for (const auto& e : *list) ids.push_back(e.id);
    return ids;
  }

  bool empty() const { return strategies.empty() && patterns.empty() && instances.empty(); }
};

namespace detail {

inline std::vector<const ExperienceEntry*> stage_pool(const ExperienceLibrary& lib,
                                                      const RetrievalQuery& q, Level level) {
  std::vector<const ExperienceEntry*> pool;
  if (q.include_golden)
    for (const auto* e : lib.entries_at(Zone::Golden, level)) pool.push_back(e);
  if (q.include_warning)
    for (const auto* e : lib.entries_at(Zone::Warning, level)) pool.push_back(e);
  std::sort(pool.begin(), pool.end(),
            [](const ExperienceEntry* a, const ExperienceEntry* b) { return a->id < b->id; });
  return pool;
}

inline std::vector<const ExperienceEntry*> all_pool(const ExperienceLibrary& lib,
                                                    const RetrievalQuery& q) {
  std::vector<const ExperienceEntry*> pool;
  for (const auto* e : lib.live_entries()) {
    if (e->zone == Zone::Golden && !q.include_golden) continue;
    if (e->zone == Zone::Warning && !q.include_warning) continue;
    pool.push_back(e);
  }
  std::sort(pool.begin(), pool.end(),
            [](const ExperienceEntry* a, const ExperienceEntry* b) { return a->id < b->id; });
  return pool;
}

// Entries sharing a token with any anchor are scored first; pure reordering,
// never filtering, so recall is unchanged.
inline void bias_pool(std::vector<const ExperienceEntry*>& pool,
                      const std::vector<ScoredEntry>& anchors) {
  if (anchors.empty()) return;
  std::vector<TokenSet> anchor_tokens;
  anchor_tokens.reserve(anchors.size());
  for (const auto& a : anchors) anchor_tokens.push_back(token_set(a.content));
  std::stable_partition(pool.begin(), pool.end(), [&](const ExperienceEntry* e) {
    TokenSet toks = token_set(e->content);
    for (const auto& at : anchor_tokens)
      if (shares_token(toks, at)) return true;
    return false;
  });
}

// Parses "SCORES: 3=0.9, 7=0.25"; nullopt means fall back to lexical.
inline std::optional<std::map<EntryId, double>> parse_scores(const std::string& reply) {
  auto pos = reply.find("SCORES:");
  if (pos == std::string::npos) return std::nullopt;
  std::map<EntryId, double> scores;
  std::string_view rest(reply.data() + pos + 7, reply.size() - pos - 7);
  size_t i = 0;
  while (i < rest.size()) {
    while (i < rest.size() && (is_ascii_space(rest[i]) || rest[i] == ',')) ++i;
    size_t eq = rest.find('=', i);
    if (eq == std::string_view::npos) break;
    auto id = parse_finite(rest.substr(i, eq - i));
    size_t end = eq + 1;
    while (end < rest.size() && rest[end] != ',' && rest[end] != '\n') ++end;
    auto val = parse_finite(rest.substr(eq + 1, end - eq - 1));
    if (id && val && *id >= 1) scores[static_cast<EntryId>(*id)] = *val;
    i = end;
  }
  if (scores.empty()) return std::nullopt;
  return scores;
}

}  // namespace detail

// Scores one stage's pool and keeps the top k (score desc, id asc on ties).
// gateway may be null or lack a Retriever binding; then the lexical scorer
// applies. The pool order only determines scoring order, not the outcome.
inline std::vector<ScoredEntry> score_stage(const std::vector<const ExperienceEntry*>& pool,
                                            const RetrievalQuery& q, Gateway* gateway,
                                            const PromptTemplates& prompts) {
  if (pool.empty()) return {};
  const std::string query_blob =
      q.reasoning_state.empty() ? q.query_text : q.query_text + "\n" + q.reasoning_state;

  std::map<EntryId, double> role_scores;
  bool have_role_scores = false;
  if (gateway && gateway->is_bound(Role::Retriever)) {
    std::string candidates;
    for (const auto* e : pool)
      candidates += std::to_string(e->id) + " | " + e->content + "\n";
    ModelRequest req;
    req.role = Role::Retriever;
    req.temperature = 0.0;
    req.messages = {{Speaker::System, prompts.retriever_system},
                    {Speaker::User, fill_template(prompts.retriever_score,
                                                  {{"query", query_blob},
                                                   {"candidates", candidates}})}};
    auto parsed = detail::parse_scores(gateway->complete(req).content);
    if (parsed) {
      role_scores = std::move(*parsed);
      have_role_scores = true;
    }
  }

  TokenSet query_tokens = token_set(query_blob);
  std::vector<ScoredEntry> scored;
  scored.reserve(pool.size());
  for (const auto* e : pool) {
    double s = have_role_scores
                   ? (role_scores.count(e->id) ? role_scores[e->id] : 0.0)
                   : jaccard(query_tokens, token_set(e->content));
    scored.push_back({e->id, s, e->content, e->zone, e->level});
  }
  std::sort(scored.begin(), scored.end(), [](const ScoredEntry& a, const ScoredEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (scored.size() > static_cast<size_t>(q.k)) scored.resize(static_cast<size_t>(q.k));
  return scored;
}

inline std::string flatten_context(const RetrievalResult& r) {
  std::string golden_sections;
  std::string warnings;
  auto emit = [&](const char* heading, const std::vector<ScoredEntry>& list) {
    std::string block;
    for (const auto& e : list) {
      if (e.zone == Zone::Warning) {
        warnings += "[W#" + std::to_string(e.id) + "] " + e.content + "\n";
      } else {
        block += "[G#" + std::to_string(e.id) + "] " + e.content + "\n";
      }
    }
    if (!block.empty()) golden_sections += std::string(heading) + "\n" + block;
  };
  emit("STRATEGIES", r.strategies);
  emit("PATTERNS", r.patterns);
  emit("INSTANCES", r.instances);
  std::string out = golden_sections;
  if (!warnings.empty()) out += "WARNINGS\n" + warnings;
  return out;
}

// Read-only retrieval against a snapshot; usage counts are not touched.
inline RetrievalResult retrieve_snapshot(const RetrievalQuery& query,
                                         const ExperienceLibrary& lib, Gateway* gateway = nullptr,
                                         const PromptTemplates& prompts = PromptTemplates{}) {
  RetrievalResult result;
  if (query.single_stage) {
    result.patterns = score_stage(detail::all_pool(lib, query), query, gateway, prompts);
  } else {
    result.strategies =
        score_stage(detail::stage_pool(lib, query, Level::Strategy), query, gateway, prompts);
    auto patterns = detail::stage_pool(lib, query, Level::Pattern);
    detail::bias_pool(patterns, result.strategies);
    result.patterns = score_stage(patterns, query, gateway, prompts);
    result.instances =
        score_stage(detail::stage_pool(lib, query, Level::Instance), query, gateway, prompts);
  }
  result.flattened_context = flatten_context(result);
  return result;
}

// The standard entry point: retrieves and bumps usage_count on every
// returned entry (the library is the single writer's copy).
inline RetrievalResult retrieve(const RetrievalQuery& query, ExperienceLibrary& lib,
                                Gateway* gateway = nullptr,
                                const PromptTemplates& prompts = PromptTemplates{},
                                Clock* clock = nullptr) {
  RetrievalResult result = retrieve_snapshot(query, lib, gateway, prompts);
  for (EntryId id : result.hit_ids()) lib.bump_usage(id, clock ? clock->now() : std::string{});
  return result;
}

// ---------- the library as a tool ----------

inline ToolDescriptor experience_lookup_descriptor() {
  ToolDescriptor d;
  d.name = "experience_lookup";
  d.description = "Look up relevant experiences from the library.";
  d.parameters = Json{{"query", Json{{"type", "string"}, {"required", true}}},
                      {"k", Json{{"type", "integer"}, {"required", false}}}};
  return d;
}

// Handler for the gateway's tool loop. Malformed arguments come back as an
// error string so the conversation can continue.
inline ToolHandler make_experience_lookup_handler(ExperienceLibrary* lib, bool single_stage,
                                                  Gateway* gateway = nullptr,
                                                  const PromptTemplates* prompts = nullptr,
                                                  Clock* clock = nullptr) {
  return [lib, single_stage, gateway, prompts, clock](const std::string& args) -> std::string {
    Json j = Json::parse(args, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("query") || !j["query"].is_string())
      return "error: MalformedToolArguments: expected {\"query\": <text>, \"k\"?: <int>}";
    RetrievalQuery q;
    q.query_text = j["query"].get<std::string>();
    q.single_stage = single_stage;
    if (j.contains("k")) {
      if (!j["k"].is_number_integer() || j["k"].get<int>() < 1)
        return "error: MalformedToolArguments: k must be a positive integer";
      q.k = j["k"].get<int>();
    }
    RetrievalResult r = retrieve(q, *lib, gateway, prompts ? *prompts : PromptTemplates{}, clock);
    return r.flattened_context;
  };
}

}  // namespace flex
