#pragma once
// Meta-MDP orchestration: the epoch loop over a task suite, per-epoch
// checkpoints, and the metrics series (train accuracy, test accuracy,
// library size) that the run emits as CSV.

#include <chrono>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flex/explorer.hpp"
#include "flex/gateway.hpp"
#include "flex/task.hpp"
#include "flex/updater.hpp"

namespace flex {

struct RunConfig {
  int n_parallel = 4;
  int max_rounds = 3;
  double success_threshold = 1.0;
  int retrieval_k = 5;
  int shortlist_m = 5;
  int epochs = 3;
  double actor_temperature = 0.8;
  bool test_each_epoch = false;
  bool shuffle = false;
  std::optional<int64_t> seed;
  std::string actor_backend;
  std::string critic_backend;
  std::string updater_backend;
  std::string retriever_backend;  // empty or "none": lexical scoring
  std::string template_dir;
  std::string clock = "logical";  // logical | system

  void bind_roles(Gateway& gateway) const {
    if (!actor_backend.empty()) gateway.bind(Role::Actor, actor_backend);
    if (!critic_backend.empty()) gateway.bind(Role::Critic, critic_backend);
    if (!updater_backend.empty()) gateway.bind(Role::Updater, updater_backend);
    if (!retriever_backend.empty() && retriever_backend != "none")
      gateway.bind(Role::Retriever, retriever_backend);
  }

  ExploreConfig explore_config(LibraryMode mode) const {
    ExploreConfig c;
    c.n_parallel = n_parallel;
    c.max_rounds = max_rounds;
    c.success_threshold = success_threshold;
    c.retrieval_k = retrieval_k;
    c.actor_temperature = actor_temperature;
    c.library_mode = mode;
    c.seed = seed;
    return c;
  }

  UpdaterConfig updater_config(LibraryMode mode) const {
    UpdaterConfig c;
    c.shortlist_m = shortlist_m;
    c.retrieval_k = retrieval_k;
    c.library_mode = mode;
    return c;
  }

  std::string snapshot() const {
    std::string s;
    s += "n_parallel=" + std::to_string(n_parallel) + "\n";
    s += "max_rounds=" + std::to_string(max_rounds) + "\n";
    s += "success_threshold=" + format_double(success_threshold) + "\n";
    s += "retrieval_k=" + std::to_string(retrieval_k) + "\n";
    s += "shortlist_m=" + std::to_string(shortlist_m) + "\n";
    s += "epochs=" + std::to_string(epochs) + "\n";
    s += "actor_temperature=" + format_double(actor_temperature) + "\n";
    s += std::string("test_each_epoch=") + (test_each_epoch ? "true" : "false") + "\n";
    s += std::string("shuffle=") + (shuffle ? "true" : "false") + "\n";
    if (seed) s += "seed=" + std::to_string(*seed) + "\n";
    s += "actor_backend=" + actor_backend + "\n";
    s += "critic_backend=" + critic_backend + "\n";
    s += "updater_backend=" + updater_backend + "\n";
    s += "retriever_backend=" + (retriever_backend.empty() ? "none" : retriever_backend) + "\n";
    if (!template_dir.empty()) s += "template_dir=" + template_dir + "\n";
    s += "clock=" + clock + "\n";
    return s;
  }
};

inline RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    size_t b = 0, e = s.size();
    while (b < e && is_ascii_space(s[b])) ++b;
    while (e > b && is_ascii_space(s[e - 1])) --e;
    return s.substr(b, e - b);
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      raise(Errc::ConfigError, "line " + std::to_string(line_no) + ": expected key=value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    auto as_int = [&](int& slot) {
      auto v = parse_finite(value);
      if (!v) raise(Errc::ConfigError, key + ": expected a number, got '" + value + "'");
      slot = static_cast<int>(*v);
    };
    auto as_double = [&](double& slot) {
      auto v = parse_finite(value);
      if (!v) raise(Errc::ConfigError, key + ": expected a number, got '" + value + "'");
      slot = *v;
    };
    auto as_bool = [&](bool& slot) {
      if (value == "true" || value == "1")
        slot = true;
      else if (value == "false" || value == "0")
        slot = false;
      else
        raise(Errc::ConfigError, key + ": expected true/false, got '" + value + "'");
    };
    if (key == "n_parallel")
      as_int(cfg.n_parallel);
    else if (key == "max_rounds")
      as_int(cfg.max_rounds);
    else if (key == "success_threshold")
      as_double(cfg.success_threshold);
    else if (key == "retrieval_k" || key == "k")
      as_int(cfg.retrieval_k);
    else if (key == "shortlist_m")
      as_int(cfg.shortlist_m);
    else if (key == "epochs")
      as_int(cfg.epochs);
    else if (key == "actor_temperature")
      as_double(cfg.actor_temperature);
    else if (key == "test_each_epoch")
      as_bool(cfg.test_each_epoch);
    else if (key == "shuffle")
      as_bool(cfg.shuffle);
    else if (key == "seed") {
      auto v = parse_finite(value);
      if (!v) raise(Errc::ConfigError, "seed: expected a number");
      cfg.seed = static_cast<int64_t>(*v);
    } else if (key == "actor_backend")
      cfg.actor_backend = value;
    else if (key == "critic_backend")
      cfg.critic_backend = value;
    else if (key == "updater_backend")
      cfg.updater_backend = value;
    else if (key == "retriever_backend")
      cfg.retriever_backend = value;
    else if (key == "template_dir")
      cfg.template_dir = value;
    else if (key == "clock") {
      if (value != "logical" && value != "system")
        raise(Errc::ConfigError, "clock: expected logical or system");
      cfg.clock = value;
    } else
      raise(Errc::ConfigError, "unknown config key '" + key + "'");
  }
  if (cfg.epochs < 1) raise(Errc::ConfigError, "epochs must be >= 1");
  return cfg;
}

inline RunConfig read_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_all_text(path));
}

// ---------- the per-epoch series ----------

struct EpochRecord {
  int epoch = 0;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
  uint64_t library_size = 0;
  int new_entries = 0;
  int merges = 0;
  int discards = 0;
  // Bookkeeping outside the CSV schema:
  int candidates_decided = 0;
  int backend_errors = 0;
  double wall_seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::string config_snapshot;
};

inline std::string metrics_csv(const TrainReport& report) {
  std::string out = "epoch,train_accuracy,test_accuracy,library_size,new_entries,merges,discards\n";
  for (const auto& e : report.epochs) {
    out += std::to_string(e.epoch) + "," + format_double(e.train_accuracy) + ",";
    if (e.test_accuracy) out += format_double(*e.test_accuracy);
    out += "," + std::to_string(e.library_size) + "," + std::to_string(e.new_entries) + "," +
           std::to_string(e.merges) + "," + std::to_string(e.discards) + "\n";
  }
  return out;
}

inline void emit_metrics(const TrainReport& report, const std::filesystem::path& path,
                         FileSink& sink = default_sink()) {
  if (report.epochs.empty()) raise(Errc::ConfigError, "emit_metrics: empty report");
  sink.write_file(path, metrics_csv(report));
}

inline std::vector<EpochRecord> parse_metrics(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) ||
      line != "epoch,train_accuracy,test_accuracy,library_size,new_entries,merges,discards")
    raise(Errc::CorruptRecord, "metrics: bad header", 1);
  std::vector<EpochRecord> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else
        cur.push_back(c);
    }
    fields.push_back(cur);
    if (fields.size() != 7) raise(Errc::CorruptRecord, "metrics: wrong field count", line_no);
    EpochRecord r;
    auto need = [&](const std::string& f) {
      auto v = parse_finite(f);
      if (!v) raise(Errc::CorruptRecord, "metrics: bad number '" + f + "'", line_no);
      return *v;
    };
    r.epoch = static_cast<int>(need(fields[0]));
    r.train_accuracy = need(fields[1]);
    if (!fields[2].empty()) r.test_accuracy = need(fields[2]);
    r.library_size = static_cast<uint64_t>(need(fields[3]));
    r.new_entries = static_cast<int>(need(fields[4]));
    r.merges = static_cast<int>(need(fields[5]));
    r.discards = static_cast<int>(need(fields[6]));
    rows.push_back(r);
  }
  return rows;
}

// ---------- evaluation ----------

struct EvalSample {
  std::string task_id;
  std::string answer;
  double score = 0.0;
  bool backend_error = false;
};

struct EvalResult {
  double aggregate = 0.0;  // mean score; for SpearmanRho suites, mean rho
  std::vector<EvalSample> per_sample;
};

class Trainer {
 public:
  Trainer(Gateway& gateway, RunConfig config, LibraryMode mode,
          const PromptTemplates& prompts, Clock& clock)
      : gateway_(gateway),
        config_(std::move(config)),
        mode_(mode),
        prompts_(prompts),
        clock_(clock),
        explorer_(gateway_, config_.explore_config(mode), prompts_, &clock_),
        updater_(gateway_, config_.updater_config(mode), prompts_, &clock_) {}

  // Read-only pass: retrieval + one deterministic actor call + the task's
  // evaluator, per sample. Usage counters stay untouched, so evaluating a
  // checkpoint is reproducible byte-for-byte.
  EvalResult evaluate(const std::vector<TaskInstance>& samples,
                      const ExperienceLibrary& library) {
    EvalResult out;
    double total = 0.0;
    for (const auto& sample : samples) {
      EvalSample rec;
      rec.task_id = sample.task_id;
      try {
        RetrievalQuery query;
        query.query_text = sample.input_x;
        query.k = config_.retrieval_k;
        query.single_stage = mode_ == LibraryMode::Flat;
        RetrievalResult retrieved = retrieve_snapshot(query, library, &gateway_, prompts_);

        ModelRequest req;
        req.role = Role::Actor;
        req.temperature = 0.0;
        req.messages = {{Speaker::System, prompts_.actor_system},
                        {Speaker::User, fill_template(prompts_.actor_initial,
                                                      {{"retrieved_experiences",
                                                        retrieved.flattened_context},
                                                       {"question", sample.input_x}})}};
        ModelResponse resp = gateway_.complete_with_tools(std::move(req));
        rec.answer = extract_answer(resp.content);
        rec.score = resp.finish_reason == FinishReason::Error
                        ? 0.0
                        : score_prediction(sample.evaluator, rec.answer, sample.gold);
      } catch (const Error& e) {
        if (e.code() != Errc::BackendUnavailable) throw;
        rec.backend_error = true;
        rec.score = 0.0;
      }
      total += rec.score;
      out.per_sample.push_back(std::move(rec));
    }
    out.aggregate = samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
    return out;
  }

  TrainReport train(const TaskSuite& suite, const std::filesystem::path& out_dir,
                    FileSink& sink = default_sink()) {
    ExperienceLibrary library;
    return train(suite, out_dir, library, sink);
  }

  // Full training run; library is both warm start and final state.
  // Checkpoints, the audit log, metrics CSV, and a run summary land under
  // out_dir. Storage errors fail fast; backend errors score 0 for the
  // affected sample and the run continues.
  TrainReport train(const TaskSuite& suite, const std::filesystem::path& out_dir,
                    ExperienceLibrary& library, FileSink& sink = default_sink()) {
    for (Role r : {Role::Actor, Role::Critic, Role::Updater})
      if (!gateway_.is_bound(r))
        raise(Errc::ConfigError, std::string("role not bound: ") + to_string(r));
    std::filesystem::create_directories(out_dir);

    TrainReport report;
    report.config_snapshot = config_.snapshot();
    AuditLog audit;
    std::vector<CandidateExperience> pending;

    for (int epoch = 1; epoch <= config_.epochs; ++epoch) {
      auto t0 = std::chrono::steady_clock::now();
      EpochRecord rec;
      rec.epoch = epoch;

      std::vector<size_t> order(suite.train.size());
      std::iota(order.begin(), order.end(), size_t{0});
      if (config_.shuffle) {
        std::mt19937 rng(static_cast<uint32_t>(config_.seed.value_or(0)) +
                         static_cast<uint32_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);
      }

      std::vector<double> rewards;
      rewards.reserve(order.size());
      for (size_t idx : order) {
        const TaskInstance& sample = suite.train[idx];
        std::vector<CandidateExperience> batch = std::move(pending);
        pending.clear();
        try {
          ExplorationResult res = explorer_.explore(sample, library, epoch);
          batch.insert(batch.end(), res.candidates.begin(), res.candidates.end());
        } catch (const ExploreError& e) {
          ++rec.backend_errors;
          const auto& partial = e.partial().candidates;
          batch.insert(batch.end(), partial.begin(), partial.end());
        }

        MetaStep step = updater_.apply(library, sample.task_id, batch, epoch, &audit);
        pending = step.queued;
        rec.new_entries += step.inserts;
        rec.merges += step.merges;
        rec.discards += step.discards;
        rec.candidates_decided += static_cast<int>(step.decisions.size());

        double reward = 0.0;
        try {
          reward = updater_.meta_reward(sample, library);
        } catch (const Error& e) {
          if (e.code() != Errc::BackendUnavailable) throw;
          ++rec.backend_errors;
        }
        rewards.push_back(reward);
      }

      rec.train_accuracy = episode_accuracy(rewards);
      if (config_.test_each_epoch && !suite.test.empty())
        rec.test_accuracy = evaluate(suite.test, library).aggregate;
      rec.library_size = library.live_count();

      write_library_file(library, out_dir / ("epoch_" + std::to_string(epoch) + ".library"),
                         sink);
      rec.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      report.epochs.push_back(rec);
    }

    emit_metrics(report, out_dir / "metrics.csv", sink);
    audit.write(out_dir / "audit.log", sink);
    sink.write_file(out_dir / "summary.txt", summary_text(suite, report));
    return report;
  }

 private:
  std::string summary_text(const TaskSuite& suite, const TrainReport& report) const {
    std::string s;
    s += "run: suite '" + suite.name + "', " + std::to_string(suite.train.size()) +
         " train / " + std::to_string(suite.test.size()) + " test samples, mode " +
         to_string(mode_) + "\n\nconfig:\n" + report.config_snapshot + "\nepochs:\n";
    for (const auto& e : report.epochs) {
      s += "  epoch " + std::to_string(e.epoch) + ": train_accuracy " +
           format_double(e.train_accuracy);
      if (e.test_accuracy) s += ", test_accuracy " + format_double(*e.test_accuracy);
      s += ", library " + std::to_string(e.library_size) + " (+" +
           std::to_string(e.new_entries) + " new, " + std::to_string(e.merges) + " merged, " +
           std::to_string(e.discards) + " discarded)";
      if (e.backend_errors) s += ", backend_errors " + std::to_string(e.backend_errors);
      s += ", " + format_double(e.wall_seconds) + "s\n";
    }
    return s;
  }

  Gateway& gateway_;
  RunConfig config_;
  LibraryMode mode_;
  PromptTemplates prompts_;
  Clock& clock_;
  Explorer explorer_;
  MetaUpdater updater_;
};

}  // namespace flex
