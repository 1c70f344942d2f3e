#pragma once
// Task instances and suites: one (input, gold) sample with its evaluator
// binding, plus the train/test split file format.

#include <set>
#include <string>
#include <vector>

#include "flex/evaluators.hpp"
#include "flex/serialize.hpp"

namespace flex {

struct TaskInstance {
  std::string task_id;
  std::string input_x;
  GoldValue gold;
  Evaluator evaluator;
};

enum class LibraryMode : uint8_t { Hierarchical, Flat };

inline const char* to_string(LibraryMode m) {
  return m == LibraryMode::Hierarchical ? "hierarchical" : "flat";
}

inline LibraryMode library_mode_from_string(const std::string& s) {
  if (s == "hierarchical") return LibraryMode::Hierarchical;
  if (s == "flat") return LibraryMode::Flat;
  raise(Errc::CorruptRecord, "unknown library_mode '" + s + "'");
}

struct TaskSuite {
  static constexpr int kFormatVersion = 1;

  std::string name;
  LibraryMode library_mode = LibraryMode::Hierarchical;
  std::vector<TaskInstance> train;
  std::vector<TaskInstance> test;
};

inline Json evaluator_to_json(const Evaluator& ev) {
  switch (ev.kind) {
    case EvaluatorKind::ExactMatch: return Json{{"kind", "exact_match"}};
    case EvaluatorKind::NumericTolerance: return Json{{"kind", "numeric"}, {"atol", ev.atol}};
    case EvaluatorKind::SpearmanRho: return Json{{"kind", "spearman"}};
  }
  return Json{{"kind", "exact_match"}};
}

inline Evaluator evaluator_from_json(const Json& j, int line_no) {
  if (!j.is_object()) raise(Errc::CorruptRecord, "evaluator must be an object", line_no);
  const std::string kind = j.value("kind", "");
  if (kind == "exact_match") return Evaluator::exact();
  if (kind == "numeric") {
    double atol = j.value("atol", 0.0);
    if (atol < 0.0) raise(Errc::CorruptRecord, "atol must be >= 0", line_no);
    return Evaluator::numeric(atol);
  }
  if (kind == "spearman") return Evaluator::spearman();
  raise(Errc::CorruptRecord, "unknown evaluator kind '" + kind + "'", line_no);
}

inline std::string serialize_suite(const TaskSuite& suite) {
  std::ostringstream out;
  Json header{{"format", "flex-suite"},
              {"version", TaskSuite::kFormatVersion},
              {"name", suite.name},
              {"library_mode", to_string(suite.library_mode)}};
  out << header.dump() << '\n';
  auto emit = [&](const std::vector<TaskInstance>& tasks, const char* split) {
    for (const auto& t : tasks) {
      Json j{{"type", "task"}, {"split", split}, {"task_id", t.task_id}, {"input", t.input_x}};
      if (t.gold.is_reals)
        j["gold"] = t.gold.reals;
      else
        j["gold"] = t.gold.text;
      j["evaluator"] = evaluator_to_json(t.evaluator);
      out << j.dump() << '\n';
    }
  };
  emit(suite.train, "train");
  emit(suite.test, "test");
  return out.str();
}

inline TaskSuite parse_suite(const std::string& text) {
  auto records = parse_records(text, "flex-suite", TaskSuite::kFormatVersion);
  Json header = Json::parse(text.substr(0, text.find('\n')));
  TaskSuite suite;
  suite.name = header.value("name", "");
  suite.library_mode = library_mode_from_string(header.value("library_mode", "hierarchical"));
  std::set<std::string> seen_ids;
  for (const auto& [line_no, j] : records) {
    if (j.value("type", "") != "task")
      raise(Errc::CorruptRecord, "unknown record type", line_no);
    TaskInstance t;
    t.task_id = j.value("task_id", "");
    if (t.task_id.empty()) raise(Errc::CorruptRecord, "task_id missing", line_no);
    if (!seen_ids.insert(t.task_id).second)
      raise(Errc::CorruptRecord, "duplicate task_id '" + t.task_id + "'", line_no);
    t.input_x = j.value("input", "");
    t.evaluator = evaluator_from_json(j.value("evaluator", Json::object()), line_no);
    if (!j.contains("gold")) raise(Errc::CorruptRecord, "gold missing", line_no);
    const Json& gold = j["gold"];
    if (gold.is_array()) {
      t.gold.is_reals = true;
      for (const auto& v : gold) {
        if (!v.is_number()) raise(Errc::CorruptRecord, "gold list must be numeric", line_no);
        t.gold.reals.push_back(v.get<double>());
      }
    } else if (gold.is_string()) {
      t.gold.text = gold.get<std::string>();
    } else {
      raise(Errc::CorruptRecord, "gold must be text or a list of reals", line_no);
    }
    // gold type must match the evaluator kind
    if (t.evaluator.kind == EvaluatorKind::SpearmanRho) {
      if (!t.gold.is_reals || t.gold.reals.size() < 2)
        raise(Errc::CorruptRecord, "spearman task needs >= 2 gold reals", line_no);
    } else if (t.gold.is_reals) {
      raise(Errc::CorruptRecord, "text evaluator with numeric-list gold", line_no);
    }
    const std::string split = j.value("split", "train");
    if (split == "train")
      suite.train.push_back(std::move(t));
    else if (split == "test")
      suite.test.push_back(std::move(t));
    else
      raise(Errc::CorruptRecord, "unknown split '" + split + "'", line_no);
  }
  return suite;
}

inline void write_suite_file(const TaskSuite& suite, const std::filesystem::path& path,
                             FileSink& sink = default_sink()) {
  sink.write_file(path, serialize_suite(suite));
}

inline TaskSuite read_suite_file(const std::filesystem::path& path) {
  return parse_suite(read_all_text(path));
}

}  // namespace flex
