#pragma once
// Prompt templates for the four roles. The built-in texts are the contract;
// a templates directory with the same file names overrides them.

#include <filesystem>
#include <map>
#include <string>

#include "flex/serialize.hpp"

namespace flex {

struct PromptTemplates {
  std::string actor_system =
      "You are the actor. Solve the task using any provided experiences. Think step by step, "
      "then end with a final line formatted exactly as 'ANSWER: <final answer>'.";

  std::string actor_initial =
      "Known experiences:\n"
      "{retrieved_experiences}\n"
      "\n"
      "Question: {question}";

  std::string actor_refine =
      "Known experiences:\n"
      "{retrieved_experiences}\n"
      "\n"
      "Previous reasoning:\n"
      "{previous_reasoning}\n"
      "\n"
      "Feedback:\n"
      "{feedback}\n"
      "\n"
      "Question: {question}";

  std::string critic_system_success =
      "You are the critic. The trajectory below reached a correct outcome. Identify the "
      "reusable pattern that made it work.";

  std::string critic_system_failure =
      "You are the critic. The trajectory below failed. Identify the underlying causes of "
      "failure and summarize them into abstract, task-agnostic improvement suggestions.";

  std::string critic_diagnose =
      "Diagnose: {question}\n"
      "Outcome: {outcome}\n"
      "Answer: {answer}\n"
      "Reasoning: {reasoning}";

  std::string distill_system =
      "You are the critic, distilling one experience from a finished trajectory. Reply with "
      "one line formatted exactly as 'LEVEL:<Strategy|Pattern|Instance>|<experience text>'.";

  std::string critic_distill =
      "DistillFrom: {question}\n"
      "Outcome: {outcome}\n"
      "Answer: {answer}";

  std::string updater_system =
      "You are the library updater. Decide whether the candidate duplicates any of the "
      "similar entries. Reply exactly 'DISTINCT' or 'MERGE:<id>|<merged text>'.";

  std::string updater_decide =
      "Candidate: {candidate}\n"
      "Similar entries:\n"
      "{shortlist}";

  std::string retriever_system =
      "You are the retriever. Score each candidate's relevance to the query in [0,1]. Reply "
      "with one line 'SCORES: <id>=<score>, ...'.";

  std::string retriever_score =
      "Query: {query}\n"
      "Candidates:\n"
      "{candidates}";

  // Overrides any template whose file exists in dir (file name + .txt).
  void load_overrides(const std::filesystem::path& dir) {
    auto maybe = [&](const char* name, std::string& slot) {
      auto p = dir / (std::string(name) + ".txt");
      if (std::filesystem::exists(p)) slot = read_all_text(p);
    };
    maybe("actor_system", actor_system);
    maybe("actor_initial", actor_initial);
    maybe("actor_refine", actor_refine);
    maybe("critic_system_success", critic_system_success);
    maybe("critic_system_failure", critic_system_failure);
    maybe("critic_diagnose", critic_diagnose);
    maybe("distill_system", distill_system);
    maybe("critic_distill", critic_distill);
    maybe("updater_system", updater_system);
    maybe("updater_decide", updater_decide);
    maybe("retriever_system", retriever_system);
    maybe("retriever_score", retriever_score);
  }

  std::map<std::string, const std::string*> all() const {
    return {{"actor_system", &actor_system},
            {"actor_initial", &actor_initial},
            {"actor_refine", &actor_refine},
            {"critic_system_success", &critic_system_success},
            {"critic_system_failure", &critic_system_failure},
            {"critic_diagnose", &critic_diagnose},
            {"distill_system", &distill_system},
            {"critic_distill", &critic_distill},
            {"updater_system", &updater_system},
            {"updater_decide", &updater_decide},
            {"retriever_system", &retriever_system},
            {"retriever_score", &retriever_score}};
  }
};

// Replaces every "{name}" with its value; unknown placeholders stay put.
inline std::string fill_template(std::string_view tmpl,
                                 const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      size_t close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        std::string name(tmpl.substr(i + 1, close - i - 1));
        auto it = values.find(name);
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i]);
    ++i;
  }
  return out;
}

}  // namespace flex
