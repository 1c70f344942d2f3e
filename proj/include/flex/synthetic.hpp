#pragma once
// Deterministic scenario suites for verifying the full learning loop with
// no model access: keyed tasks (solvable iff their key string reaches the
// prompt), dependency chains that force multi-epoch learning, and Spearman
// regression tasks.

#include <random>
#include <string>
#include <vector>

#include "flex/gateway.hpp"
#include "flex/synthetic_detail.hpp"
#include "flex/task.hpp"

namespace flex {

enum class Sharing : uint8_t { Unique, Chained };

struct GeneratedSuite {
  TaskSuite suite;
  ScriptedScenario producer;  // learns: distills real keys
  ScriptedScenario consumer;  // same actor behavior, but cannot distill keys
};

// Keyed task family. The scripted actor answers correctly iff the task's
// KEY{...} string appears in the prompt before the question line, which only
// happens when retrieval surfaces the right library entry.
//
// Unique: exploring task j distills task j's own key, so every sample is
// solved by meta-reward time within its own step.
//
// Chained: exploring task j distills the key of its chain successor, with
// wraparound, and the train list is emitted in reverse chain order. Within
// epoch 1 only the last-processed task finds its key already distilled
// (accuracy 1/n); from epoch 2 every key is in the library (accuracy 1).
inline GeneratedSuite generate_keyed_suite(int n_tasks, Sharing sharing, uint64_t seed) {
  if (n_tasks < 1) raise(Errc::ConfigError, "n_tasks must be >= 1");
  std::mt19937_64 rng(seed);
  const std::string family = detail::hex_token(rng, 4);

  std::vector<std::string> names;
  names.reserve(static_cast<size_t>(n_tasks));
  for (int j = 0; j < n_tasks; ++j)
    names.push_back((sharing == Sharing::Unique ? "uniq" : "chain") + std::to_string(j) + "-" +
                    family);

  GeneratedSuite out;
  out.suite.name = (sharing == Sharing::Unique ? "keyed-unique-" : "keyed-chained-") + family;
  out.suite.library_mode = LibraryMode::Hierarchical;
  out.producer.model_id = "scripted-producer-" + family;
  out.consumer.model_id = "scripted-consumer-" + family;

  std::vector<int> file_order;
  for (int j = 0; j < n_tasks; ++j)
    file_order.push_back(sharing == Sharing::Chained ? n_tasks - 1 - j : j);

  for (int j : file_order) {
    const std::string& name = names[static_cast<size_t>(j)];
    TaskInstance t;
    t.task_id = name;
    t.input_x = "TASK{" + name + "} Solve the keyed riddle " + name + ".";
    t.gold.text = "GOLD-" + name;
    t.evaluator = Evaluator::exact();
    out.suite.train.push_back(t);
    t.task_id = name + ".test";
    out.suite.test.push_back(std::move(t));
  }

  for (int j = 0; j < n_tasks; ++j) {
    const std::string& name = names[static_cast<size_t>(j)];
    // Correct iff the key appears before the question line.
    std::string rx = "KEY\\{" + detail::regex_escape(name) + "\\}[\\s\\S]*Question: TASK\\{" +
                     detail::regex_escape(name) + "\\}";
    ModelResponse right =
        text_response("Applying the documented technique for this task.\nANSWER: GOLD-" + name);
    out.producer.add_rule(Role::Actor, rx, right, MatchKind::Regex);
    out.consumer.add_rule(Role::Actor, rx, std::move(right), MatchKind::Regex);

    int target = sharing == Sharing::Unique ? j : (j + 1) % n_tasks;
    const std::string& tname = names[static_cast<size_t>(target)];
    out.producer.add_rule(
        Role::Critic, "DistillFrom: TASK{" + name + "}",
        text_response("LEVEL:Pattern|For TASK{" + tname + "} apply KEY{" + tname + "}"));
  }

  ModelResponse wrong = text_response("No applicable experience found.\nANSWER: WRONG");
  out.producer.set_default(Role::Actor, wrong);
  out.consumer.set_default(Role::Actor, wrong);
  ModelResponse diagnose =
      text_response("The attempt ignored the documented technique for this task family.");
  out.producer.set_default(Role::Critic, diagnose);
  // The consumer's critic cannot surface keys; it only produces boilerplate.
  out.consumer.set_default(Role::Critic,
                           text_response("LEVEL:Pattern|no transferable insight"));
  out.producer.set_default(Role::Updater, text_response("DISTINCT"));
  out.consumer.set_default(Role::Updater, text_response("DISTINCT"));
  return out;
}

// Spearman regression family. Each task publishes its feature vector in the
// prompt; the scripted actor applies a fixed strictly increasing formula to
// the features, and gold is a monotone transform of the same features plus
// seeded uniform noise. With zero noise the evaluator must report rho = 1
// (or -1 when reversed).
inline GeneratedSuite generate_regression_suite(int n_points, double noise, uint64_t seed,
                                                int n_tasks = 2, bool reversed = false) {
  if (n_points < 2) raise(Errc::ConfigError, "n_points must be >= 2");
  if (noise < 0.0) raise(Errc::ConfigError, "noise must be >= 0");
  if (n_tasks < 1) raise(Errc::ConfigError, "n_tasks must be >= 1");
  std::mt19937_64 rng(seed);
  const std::string family = detail::hex_token(rng, 4);
  std::uniform_real_distribution<double> feature_dist(0.5, 10.0);
  std::uniform_real_distribution<double> noise_dist(-1.0, 1.0);

  GeneratedSuite out;
  out.suite.name = "regression-" + family;
  out.suite.library_mode = LibraryMode::Flat;
  out.producer.model_id = "scripted-producer-" + family;
  out.consumer.model_id = "scripted-consumer-" + family;

  for (int j = 0; j < n_tasks; ++j) {
    const std::string name = "reg" + std::to_string(j) + "-" + family;
    std::vector<double> features(static_cast<size_t>(n_points));
    for (auto& x : features) x = feature_dist(rng);

    std::string feature_text, answer_text;
    std::vector<double> gold(static_cast<size_t>(n_points));
    for (int i = 0; i < n_points; ++i) {
      double x = features[static_cast<size_t>(i)];
      if (i) {
        feature_text += ", ";
        answer_text += ", ";
      }
      feature_text += format_double(x);
      answer_text += format_double(x * x + 1.0);  // strictly increasing on x > 0
      double base = reversed ? -2.0 * x - 1.0 : 2.0 * x + 1.0;
      gold[static_cast<size_t>(i)] = base + noise * noise_dist(rng);
    }

    TaskInstance t;
    t.task_id = name;
    t.input_x = "REG{" + name + "} FEATURES: " + feature_text +
                ". Predict a fitness score for every variant, in order.";
    t.gold.is_reals = true;
    t.gold.reals = gold;
    t.evaluator = Evaluator::spearman();
    out.suite.train.push_back(std::move(t));

    ModelResponse formula =
        text_response("Applying the standard feature formula.\nANSWER: " + answer_text);
    out.producer.add_rule(Role::Actor, "REG{" + name + "}", formula);
    out.consumer.add_rule(Role::Actor, "REG{" + name + "}", std::move(formula));
  }

  ModelResponse fallback = text_response("ANSWER: 0");
  out.producer.set_default(Role::Actor, fallback);
  out.consumer.set_default(Role::Actor, fallback);
  ModelResponse diagnose = text_response("LEVEL:Pattern|validate feature scaling before fitting");
  out.producer.set_default(Role::Critic, diagnose);
  out.consumer.set_default(Role::Critic, diagnose);
  out.producer.set_default(Role::Updater, text_response("DISTINCT"));
  out.consumer.set_default(Role::Updater, text_response("DISTINCT"));
  return out;
}

struct GeneratedPaths {
  std::filesystem::path suite;
  std::filesystem::path producer_scenario;
  std::filesystem::path consumer_scenario;
};

inline GeneratedPaths write_generated_suite(const GeneratedSuite& g,
                                            const std::filesystem::path& dir,
                                            const std::string& base,
                                            FileSink& sink = default_sink()) {
  std::filesystem::create_directories(dir);
  GeneratedPaths paths{dir / (base + ".suite"), dir / (base + ".producer.scenario"),
                       dir / (base + ".consumer.scenario")};
  write_suite_file(g.suite, paths.suite, sink);
  write_scenario_file(g.producer, paths.producer_scenario, sink);
  write_scenario_file(g.consumer, paths.consumer_scenario, sink);
  return paths;
}

}  // namespace flex
