#pragma once
// Base-level MDP: per-sample exploration. Parallel trajectory sampling with
// accept/reject labeling, critic feedback, sequential refinement, and
// distillation of every terminal trajectory into a candidate experience.

#include <algorithm>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "flex/evaluators.hpp"
#include "flex/experience.hpp"
#include "flex/gateway.hpp"
#include "flex/prompts.hpp"
#include "flex/retrieval.hpp"
#include "flex/task.hpp"

namespace flex {

struct Trajectory {
  int attempt_index = 0;
  int refinement_round = 0;
  std::string prompt_context;  // flattened experiences the actor saw
  std::string reasoning;       // full model output
  std::string answer;          // extracted final answer
  double score = 0.0;
  bool accepted = false;
  bool model_error = false;
  std::optional<std::string> feedback;  // set iff the critic saw it
};

struct CandidateExperience {
  Zone zone = Zone::Warning;
  Level level = Level::Pattern;
  std::string content;
  double quality = 0.5;
  Source source;
};

struct ExploreConfig {
  int n_parallel = 4;
  int max_rounds = 3;
  double success_threshold = 1.0;
  int retrieval_k = 5;
  double actor_temperature = 0.8;  // exploration; evaluation passes use 0
  LibraryMode library_mode = LibraryMode::Hierarchical;
  std::optional<int64_t> seed;

  void validate() const {
    if (n_parallel < 1) raise(Errc::ConfigError, "n_parallel must be >= 1");
    if (max_rounds < 1) raise(Errc::ConfigError, "max_rounds must be >= 1");
    if (success_threshold <= 0.0 || success_threshold > 1.0)
      raise(Errc::ConfigError, "success_threshold must be in (0,1]");
    if (retrieval_k < 1) raise(Errc::ConfigError, "retrieval k must be >= 1");
  }
};

struct ExplorationResult {
  std::vector<Trajectory> trajectories;
  std::vector<CandidateExperience> candidates;
  std::vector<std::string> accumulated_feedback;
  bool solved = false;
  int rounds_executed = 0;
  RetrievalResult retrieved;
};

// Backend failure mid-exploration; whatever was explored so far rides along.
class ExploreError : public Error {
 public:
  ExploreError(const Error& cause, ExplorationResult partial)
      : Error(cause.code(), cause.what()), partial_(std::move(partial)) {}
  const ExplorationResult& partial() const { return partial_; }

 private:
  ExplorationResult partial_;
};

// Final answer = text after the last 'ANSWER:' marker (one line); the whole
// output, trimmed, when the marker is missing.
inline std::string extract_answer(const std::string& content) {
  constexpr const char* kMarker = "ANSWER:";
  auto pos = content.rfind(kMarker);
  std::string answer;
  if (pos == std::string::npos) {
    answer = content;
  } else {
    size_t start = pos + std::char_traits<char>::length(kMarker);
    size_t end = content.find('\n', start);
    answer = content.substr(start, end == std::string::npos ? std::string::npos : end - start);
  }
  size_t b = 0, e = answer.size();
  while (b < e && is_ascii_space(answer[b])) ++b;
  while (e > b && is_ascii_space(answer[e - 1])) --e;
  return answer.substr(b, e - b);
}

// Parses "LEVEL:Strategy|text"; malformed tags fall back to Pattern.
inline std::pair<Level, std::string> parse_distilled(const std::string& reply) {
  auto pos = reply.find("LEVEL:");
  if (pos != std::string::npos) {
    size_t bar = reply.find('|', pos);
    if (bar != std::string::npos) {
      std::string tag = reply.substr(pos + 6, bar - pos - 6);
      std::string content = reply.substr(bar + 1);
      Level level = Level::Pattern;
      if (tag == "Strategy")
        level = Level::Strategy;
      else if (tag == "Pattern")
        level = Level::Pattern;
      else if (tag == "Instance")
        level = Level::Instance;
      return {level, content};
    }
  }
  return {Level::Pattern, reply};
}

class Explorer {
 public:
  Explorer(Gateway& gateway, ExploreConfig config, const PromptTemplates& prompts,
           Clock* clock = nullptr)
      : gateway_(gateway), config_(std::move(config)), prompts_(prompts), clock_(clock) {
    config_.validate();
  }

  const ExploreConfig& config() const { return config_; }

  // One actor attempt, scored. Malformed model output is a zero-score
  // trajectory, not an error; BackendUnavailable propagates.
  Trajectory run_actor(const TaskInstance& sample, const std::string& retrieved_context,
                       const std::string& user_prompt, int attempt_index, int refinement_round,
                       double temperature) {
    ModelRequest req;
    req.role = Role::Actor;
    req.temperature = temperature;
    req.seed = config_.seed;
    req.messages = {{Speaker::System, prompts_.actor_system}, {Speaker::User, user_prompt}};

    Trajectory t;
    t.attempt_index = attempt_index;
    t.refinement_round = refinement_round;
    t.prompt_context = retrieved_context;
    try {
      ModelResponse resp = gateway_.complete_with_tools(std::move(req));
      t.reasoning = resp.content;
      t.model_error = resp.finish_reason == FinishReason::Error;
    } catch (const Error& e) {
      if (e.code() == Errc::BackendUnavailable) throw;
      t.model_error = true;
      t.reasoning = std::string("model error: ") + e.what();
    }
    t.answer = t.model_error ? "" : extract_answer(t.reasoning);
    t.score = t.model_error ? 0.0 : score_prediction(sample.evaluator, t.answer, sample.gold);
    t.accepted = t.score >= config_.success_threshold;
    return t;
  }

  // n parallel attempts against the same context; every trajectory comes
  // back labeled accepted or rejected. Rejection is labeling, not
  // discarding: failures feed the warning zone later.
  std::vector<Trajectory> parallel_sample(const TaskInstance& sample,
                                          const RetrievalResult& retrieved, int n) {
    if (n < 1) raise(Errc::ConfigError, "parallel_sample needs n >= 1");
    const std::string prompt =
        fill_template(prompts_.actor_initial,
                      {{"retrieved_experiences", retrieved.flattened_context},
                       {"question", sample.input_x}});
    std::vector<std::future<Trajectory>> futures;
    futures.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      futures.push_back(std::async(std::launch::async, [this, &sample, &retrieved, &prompt, i] {
        return run_actor(sample, retrieved.flattened_context, prompt, i, 0,
                         config_.actor_temperature);
      }));
    }
    std::vector<Trajectory> out;
    out.reserve(static_cast<size_t>(n));
    std::exception_ptr failure;
    for (auto& f : futures) {
      try {
        out.push_back(f.get());
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
  }

  // Semantic feedback on a scored trajectory. Failures get the
  // improvement-suggestion framing, successes the pattern framing.
  std::string critique(const Trajectory& trajectory, const TaskInstance& sample) {
    ModelRequest req;
    req.role = Role::Critic;
    req.temperature = 0.0;
    req.messages = {{Speaker::System, trajectory.accepted ? prompts_.critic_system_success
                                                          : prompts_.critic_system_failure},
                    {Speaker::User, fill_template(prompts_.critic_diagnose,
                                                  {{"question", sample.input_x},
                                                   {"outcome", trajectory.accepted ? "success"
                                                                                   : "failure"},
                                                   {"answer", trajectory.answer},
                                                   {"reasoning", trajectory.reasoning}})}};
    return gateway_.complete(req).content;
  }

  Trajectory refine(const TaskInstance& sample, const Trajectory& previous,
                    const std::string& feedback, const RetrievalResult& retrieved,
                    int attempt_index) {
    if (feedback.empty()) raise(Errc::ConfigError, "refine: feedback must be non-empty");
    const std::string prompt =
        fill_template(prompts_.actor_refine,
                      {{"retrieved_experiences", retrieved.flattened_context},
                       {"previous_reasoning", previous.reasoning},
                       {"feedback", feedback},
                       {"question", sample.input_x}});
    return run_actor(sample, retrieved.flattened_context, prompt, attempt_index,
                     previous.refinement_round + 1, config_.actor_temperature);
  }

  // One distillation call per trajectory. Accepted -> Golden, failed ->
  // Warning; the level tag comes from the critic, Pattern when unparseable.
  std::vector<CandidateExperience> distill(const std::vector<Trajectory>& trajectories,
                                           const TaskInstance& sample, int epoch = 0) {
    std::vector<CandidateExperience> candidates;
    const std::string producer = gateway_.model_id(Role::Actor);
    for (const auto& t : trajectories) {
      ModelRequest req;
      req.role = Role::Critic;
      req.temperature = 0.0;
      req.messages = {{Speaker::System, prompts_.distill_system},
                      {Speaker::User, fill_template(prompts_.critic_distill,
                                                    {{"question", sample.input_x},
                                                     {"outcome", t.accepted ? "success"
                                                                            : "failure"},
                                                     {"answer", t.answer}})}};
      auto [level, content] = parse_distilled(gateway_.complete(req).content);
      try {
        content = normalize_content(content);
      } catch (const Error&) {
        continue;  // nothing distillable
      }
      CandidateExperience c;
      c.zone = t.accepted ? Zone::Golden : Zone::Warning;
      c.level = config_.library_mode == LibraryMode::Flat ? Level::Pattern : level;
      c.content = std::move(content);
      c.quality = 0.5;
      c.source = {sample.task_id, t.attempt_index, producer, epoch};
      candidates.push_back(std::move(c));
    }
    return candidates;
  }

  // The full loop: retrieval, parallel sampling, then critique/refine until
  // something is accepted or the iteration limit is hit; finally distill.
  ExplorationResult explore(const TaskInstance& sample, ExperienceLibrary& library,
                            int epoch = 0) {
    ExplorationResult result;
    try {
      RetrievalQuery query;
      query.query_text = sample.input_x;
      query.k = config_.retrieval_k;
      query.single_stage = config_.library_mode == LibraryMode::Flat;
      result.retrieved = retrieve(query, library, &gateway_, prompts_, clock_);

      result.trajectories = parallel_sample(sample, result.retrieved, config_.n_parallel);
      result.solved = std::any_of(result.trajectories.begin(), result.trajectories.end(),
                                  [](const Trajectory& t) { return t.accepted; });

      int next_attempt = config_.n_parallel;
      while (!result.solved && result.rounds_executed < config_.max_rounds) {
        Trajectory* best = best_failure(result.trajectories);
        std::string feedback = critique(*best, sample);
        best->feedback = feedback;
        result.accumulated_feedback.push_back(std::move(feedback));

        std::string joined;
        for (const auto& f : result.accumulated_feedback) {
          joined += f;
          joined.push_back('\n');
        }
        Trajectory refined = refine(sample, *best, joined, result.retrieved, next_attempt++);
        ++result.rounds_executed;
        result.solved = refined.accepted;
        result.trajectories.push_back(std::move(refined));
      }

      result.candidates = distill(result.trajectories, sample, epoch);
      return result;
    } catch (const ExploreError&) {
      throw;
    } catch (const Error& e) {
      throw ExploreError(e, std::move(result));
    }
  }

 private:
  static Trajectory* best_failure(std::vector<Trajectory>& trajectories) {
    Trajectory* best = nullptr;
    for (auto& t : trajectories) {
      if (t.accepted) continue;
      if (!best || t.score > best->score ||
          (t.score == best->score && t.attempt_index < best->attempt_index))
        best = &t;
    }
    return best;  // loop only runs while some failure exists
  }

  Gateway& gateway_;
  ExploreConfig config_;
  const PromptTemplates& prompts_;
  Clock* clock_;
};

}  // namespace flex
