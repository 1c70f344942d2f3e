#pragma once
// Role-based access to model backends. Every actor/critic/updater/retriever
// call goes through here, so tests can count calls and swap in the
// deterministic scripted backend.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "flex/errors.hpp"
#include "flex/serialize.hpp"

namespace flex {

enum class Role : uint8_t { Actor, Critic, Updater, Retriever };
enum class Speaker : uint8_t { System, User, Assistant, Tool };
enum class FinishReason : uint8_t { Stop, Length, ToolCall, Error };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::Actor: return "actor";
    case Role::Critic: return "critic";
    case Role::Updater: return "updater";
    case Role::Retriever: return "retriever";
  }
  return "actor";
}

inline Role role_from_string(const std::string& s) {
  if (s == "actor") return Role::Actor;
  if (s == "critic") return Role::Critic;
  if (s == "updater") return Role::Updater;
  if (s == "retriever") return Role::Retriever;
  raise(Errc::CorruptRecord, "unknown role '" + s + "'");
}

inline const char* to_string(Speaker s) {
  switch (s) {
    case Speaker::System: return "system";
    case Speaker::User: return "user";
    case Speaker::Assistant: return "assistant";
    case Speaker::Tool: return "tool";
  }
  return "user";
}

inline const char* to_string(FinishReason f) {
  switch (f) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::ToolCall: return "tool_calls";
    case FinishReason::Error: return "error";
  }
  return "stop";
}

inline FinishReason finish_from_string(const std::string& s) {
  if (s == "stop" || s.empty()) return FinishReason::Stop;
  if (s == "length") return FinishReason::Length;
  if (s == "tool_calls" || s == "tool_call") return FinishReason::ToolCall;
  return FinishReason::Error;
}

struct Message {
  Speaker speaker = Speaker::User;
  std::string content;
};

struct ModelRequest {
  Role role = Role::Actor;
  std::vector<Message> messages;  // non-empty, first is System
  double temperature = 0.0;
  int max_output = 2048;
  std::optional<int64_t> seed;
};

struct ToolCallRequest {
  std::string tool_name;
  std::string arguments;  // JSON text
};

struct ModelResponse {
  std::string content;
  std::vector<ToolCallRequest> tool_calls;
  FinishReason finish_reason = FinishReason::Stop;
};

inline std::string concat_request_text(const ModelRequest& req) {
  std::string out;
  for (const auto& m : req.messages) {
    out += m.content;
    out.push_back('\n');
  }
  return out;
}

inline void validate_request(const ModelRequest& req) {
  if (req.messages.empty()) raise(Errc::MalformedResponse, "request has no messages");
  if (req.messages.front().speaker != Speaker::System)
    raise(Errc::MalformedResponse, "first message must be System");
  if (req.temperature < 0.0) raise(Errc::MalformedResponse, "temperature must be >= 0");
  if (req.max_output <= 0) raise(Errc::MalformedResponse, "max_output must be > 0");
}

inline void normalize_response(ModelResponse& r) {
  if (!r.tool_calls.empty())
    r.finish_reason = FinishReason::ToolCall;
  else if (r.finish_reason == FinishReason::ToolCall)
    r.finish_reason = FinishReason::Stop;
}

// ---------- scripted scenario ----------

enum class MatchKind : uint8_t { Substring, Regex };

struct ScenarioRule {
  Role role = Role::Actor;
  MatchKind kind = MatchKind::Substring;
  std::string match;
  std::shared_ptr<const std::regex> compiled;  // Regex rules only
  ModelResponse response;
};

// Deterministic stand-in for a model: first matching rule wins, matching is
// over the concatenated request text, per-role defaults catch the rest.
struct ScriptedScenario {
  static constexpr int kFormatVersion = 1;

  std::string model_id = "scripted";
  std::vector<ScenarioRule> rules;
  std::map<Role, ModelResponse> defaults;

  void add_rule(Role role, std::string match, ModelResponse response,
                MatchKind kind = MatchKind::Substring) {
    ScenarioRule r;
    r.role = role;
    r.kind = kind;
    r.match = std::move(match);
    if (kind == MatchKind::Regex)
      r.compiled = std::make_shared<const std::regex>(r.match, std::regex::ECMAScript);
    r.response = std::move(response);
    normalize_response(r.response);
    rules.push_back(std::move(r));
  }

  void set_default(Role role, ModelResponse response) {
    normalize_response(response);
    defaults[role] = std::move(response);
  }
};

inline ModelResponse text_response(std::string content) {
  ModelResponse r;
  r.content = std::move(content);
  return r;
}

inline Json response_to_json(const ModelResponse& r) {
  Json j{{"content", r.content}, {"finish_reason", to_string(r.finish_reason)}};
  if (!r.tool_calls.empty()) {
    Json calls = Json::array();
    for (const auto& c : r.tool_calls)
      calls.push_back(Json{{"name", c.tool_name}, {"arguments", c.arguments}});
    j["tool_calls"] = std::move(calls);
  }
  return j;
}

inline ModelResponse response_from_json(const Json& j, int line_no = 0) {
  if (!j.is_object()) raise(Errc::CorruptRecord, "response must be an object", line_no);
  ModelResponse r;
  r.content = j.value("content", "");
  r.finish_reason = finish_from_string(j.value("finish_reason", "stop"));
  if (j.contains("tool_calls")) {
    for (const auto& c : j["tool_calls"]) {
      ToolCallRequest t;
      t.tool_name = c.value("name", c.contains("function") ? c["function"].value("name", "") : "");
      t.arguments = c.value(
          "arguments", c.contains("function") ? c["function"].value("arguments", "") : "");
      r.tool_calls.push_back(std::move(t));
    }
  }
  normalize_response(r);
  return r;
}

inline std::string serialize_scenario(const ScriptedScenario& s) {
  std::ostringstream out;
  Json header{{"format", "flex-scenario"},
              {"version", ScriptedScenario::kFormatVersion},
              {"model_id", s.model_id}};
  out << header.dump() << '\n';
  for (const auto& r : s.rules) {
    Json j{{"type", "rule"},
           {"role", to_string(r.role)},
           {"match", r.match},
           {"match_kind", r.kind == MatchKind::Regex ? "regex" : "substring"},
           {"response", response_to_json(r.response)}};
    out << j.dump() << '\n';
  }
  for (const auto& [role, resp] : s.defaults) {
    Json j{{"type", "default"}, {"role", to_string(role)}, {"response", response_to_json(resp)}};
    out << j.dump() << '\n';
  }
  return out.str();
}

inline ScriptedScenario parse_scenario(const std::string& text) {
  auto records = parse_records(text, "flex-scenario", ScriptedScenario::kFormatVersion);
  ScriptedScenario s;
  Json header = Json::parse(text.substr(0, text.find('\n')));
  s.model_id = header.value("model_id", "scripted");
  for (const auto& [line_no, j] : records) {
    const std::string type = j.value("type", "");
    if (type == "rule") {
      MatchKind kind = j.value("match_kind", "substring") == "regex" ? MatchKind::Regex
                                                                     : MatchKind::Substring;
      try {
        s.add_rule(role_from_string(j.value("role", "")), j.value("match", ""),
                   response_from_json(j.value("response", Json::object()), line_no), kind);
      } catch (const std::regex_error& e) {
        raise(Errc::CorruptRecord, std::string("bad regex: ") + e.what(), line_no);
      }
    } else if (type == "default") {
      s.set_default(role_from_string(j.value("role", "")),
                    response_from_json(j.value("response", Json::object()), line_no));
    } else {
      raise(Errc::CorruptRecord, "unknown record type '" + type + "'", line_no);
    }
  }
  return s;
}

inline void write_scenario_file(const ScriptedScenario& s, const std::filesystem::path& path,
                                FileSink& sink = default_sink()) {
  sink.write_file(path, serialize_scenario(s));
}

inline ScriptedScenario read_scenario_file(const std::filesystem::path& path) {
  return parse_scenario(read_all_text(path));
}

// ---------- backends ----------

class Backend {
 public:
  explicit Backend(int max_in_flight = 8) : slots_(max_in_flight) {}
  virtual ~Backend() = default;

  ModelResponse complete(const ModelRequest& req) {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<256>* s;
      ~Release() { s->release(); }
    } release{&slots_};
    return do_complete(req);
  }

  virtual std::string model_id() const = 0;

 protected:
  virtual ModelResponse do_complete(const ModelRequest& req) = 0;

 private:
  std::counting_semaphore<256> slots_;
};

class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(ScriptedScenario scenario, int max_in_flight = 8)
      : Backend(max_in_flight), scenario_(std::move(scenario)) {}

  std::string model_id() const override { return scenario_.model_id; }

 protected:
  ModelResponse do_complete(const ModelRequest& req) override {
    const std::string text = concat_request_text(req);
    for (const auto& rule : scenario_.rules) {
      if (rule.role != req.role) continue;
      bool hit = rule.kind == MatchKind::Substring
                     ? text.find(rule.match) != std::string::npos
                     : std::regex_search(text, *rule.compiled);
      if (hit) return rule.response;
    }
    auto it = scenario_.defaults.find(req.role);
    if (it == scenario_.defaults.end())
      raise(Errc::NoScenarioRule,
            std::string("no rule or default for role ") + to_string(req.role));
    return it->second;
  }

 private:
  ScriptedScenario scenario_;
};

struct HttpConfig {
  std::string base_url;    // scheme://host[:port][/prefix]
  std::string api_key;     // bearer token
  std::string model = "flex";
  int max_attempts = 3;
  int backoff_base_ms = 500;
  int backoff_factor = 2;
  int timeout_seconds = 120;
  int max_in_flight = 8;
};

inline HttpConfig http_config_from_env() {
  HttpConfig cfg;
  if (const char* base = std::getenv("FLEX_API_BASE")) cfg.base_url = base;
  if (const char* key = std::getenv("FLEX_API_KEY")) cfg.api_key = key;
  return cfg;
}

// Chat-completion client. Retries transport errors and 429/5xx with
// exponential backoff, then reports BackendUnavailable.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpConfig cfg) : Backend(cfg.max_in_flight), cfg_(std::move(cfg)) {
    if (cfg_.base_url.empty())
      raise(Errc::UnknownBackend, "http backend needs FLEX_API_BASE or an explicit base url");
    split_url(cfg_.base_url, host_, path_prefix_);
  }

  std::string model_id() const override { return cfg_.model; }

 protected:
  ModelResponse do_complete(const ModelRequest& req) override {
    Json body{{"model", cfg_.model}, {"messages", Json::array()},
              {"temperature", req.temperature}, {"max_tokens", req.max_output}};
    for (const auto& m : req.messages)
      body["messages"].push_back(Json{{"role", to_string(m.speaker)}, {"content", m.content}});
    if (req.seed) body["seed"] = *req.seed;
    const std::string payload = body.dump();

    std::string last_error;
    int delay_ms = cfg_.backoff_base_ms;
    for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
      if (attempt > 1) {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        delay_ms *= cfg_.backoff_factor;
      }
      httplib::Client client(host_);
      client.set_connection_timeout(cfg_.timeout_seconds, 0);
      client.set_read_timeout(cfg_.timeout_seconds, 0);
      httplib::Headers headers;
      if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
      auto res = client.Post(path_prefix_ + "/chat/completions", headers, payload,
                             "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "http status " + std::to_string(res->status);
        continue;
      }
      if (res->status < 200 || res->status >= 300)
        raise(Errc::BackendUnavailable,
              "http status " + std::to_string(res->status) + ": " + res->body);
      return parse_completion(res->body);
    }
    raise(Errc::BackendUnavailable,
          "exhausted " + std::to_string(cfg_.max_attempts) + " attempts; last: " + last_error);
  }

 private:
  static void split_url(const std::string& url, std::string& host, std::string& prefix) {
    auto scheme_end = url.find("://");
    size_t path_start = scheme_end == std::string::npos
                            ? url.find('/')
                            : url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      host = url;
      prefix.clear();
    } else {
      host = url.substr(0, path_start);
      prefix = url.substr(path_start);
      while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    }
  }

  static ModelResponse parse_completion(const std::string& body) {
    Json j = Json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() ||
        j["choices"].empty())
      raise(Errc::MalformedResponse, "completion body has no choices");
    const Json& choice = j["choices"][0];
    if (!choice.contains("message"))
      raise(Errc::MalformedResponse, "choice has no message");
    ModelResponse r = response_from_json(choice["message"]);
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
      r.finish_reason = finish_from_string(choice["finish_reason"].get<std::string>());
    normalize_response(r);
    return r;
  }

  HttpConfig cfg_;
  std::string host_;
  std::string path_prefix_;
};

// ---------- gateway ----------

struct ToolDescriptor {
  std::string name;
  std::string description;
  Json parameters;  // named-field schema

  Json to_json() const {
    return Json{{"name", name}, {"description", description}, {"parameters", parameters}};
  }
};

using ToolHandler = std::function<std::string(const std::string& arguments_json)>;

struct CallRecord {
  Role role = Role::Actor;
  double temperature = 0.0;
  bool ok = true;
};

class Gateway {
 public:
  // config: "scripted:<scenario file>" or "http" (env) or "http:<base url>"
  void bind(Role role, const std::string& config) {
    if (config.rfind("scripted:", 0) == 0) {
      bind_backend(role,
                   std::make_shared<ScriptedBackend>(read_scenario_file(config.substr(9))));
    } else if (config == "http") {
      bind_backend(role, std::make_shared<HttpBackend>(http_config_from_env()));
    } else if (config.rfind("http:", 0) == 0) {
      HttpConfig cfg = http_config_from_env();
      cfg.base_url = config.substr(5);
      bind_backend(role, std::make_shared<HttpBackend>(cfg));
    } else {
      raise(Errc::UnknownBackend, "unrecognized backend config '" + config + "'");
    }
  }

  void bind_backend(Role role, std::shared_ptr<Backend> backend) {
    std::lock_guard lock(mutex_);
    backends_[role] = std::move(backend);
  }

  void bind_all(std::shared_ptr<Backend> backend) {
    for (Role r : {Role::Actor, Role::Critic, Role::Updater, Role::Retriever})
      bind_backend(r, backend);
  }

  bool is_bound(Role role) const {
    std::lock_guard lock(mutex_);
    return backends_.count(role) != 0;
  }

  std::string model_id(Role role) const {
    auto backend = backend_for(role);
    return backend ? backend->model_id() : std::string("unbound");
  }

  ModelResponse complete(const ModelRequest& req) {
    validate_request(req);
    auto backend = backend_for(req.role);
    if (!backend)
      raise(Errc::UnknownBackend, std::string("no backend bound for role ") + to_string(req.role));
    try {
      ModelResponse resp = backend->complete(req);
      normalize_response(resp);
      log_call(req, true);
      return resp;
    } catch (...) {
      log_call(req, false);
      throw;
    }
  }

  // Runs the tool loop: while the model asks for tools, invoke the handlers,
  // splice results back as Tool messages, and re-ask.
  ModelResponse complete_with_tools(ModelRequest req, int max_tool_rounds = 4) {
    for (int round = 0; round <= max_tool_rounds; ++round) {
      ModelResponse resp = complete(req);
      if (resp.finish_reason != FinishReason::ToolCall) return resp;
      std::string assistant = resp.content;
      for (const auto& call : resp.tool_calls)
        assistant += "\n[tool_call " + call.tool_name + " " + call.arguments + "]";
      req.messages.push_back({Speaker::Assistant, assistant});
      for (const auto& call : resp.tool_calls)
        req.messages.push_back({Speaker::Tool, invoke_tool(call)});
    }
    ModelResponse out;
    out.content = "";
    out.finish_reason = FinishReason::Error;
    return out;
  }

  void register_tool(ToolDescriptor descriptor, ToolHandler handler) {
    std::lock_guard lock(mutex_);
    tools_[descriptor.name] = {std::move(descriptor), std::move(handler)};
  }

  // --- call log ---

  std::vector<CallRecord> call_log() const {
    std::lock_guard lock(mutex_);
    return log_;
  }

  uint64_t call_count(Role role) const {
    std::lock_guard lock(mutex_);
    uint64_t n = 0;
    for (const auto& rec : log_)
      if (rec.role == role) ++n;
    return n;
  }

  void clear_log() {
    std::lock_guard lock(mutex_);
    log_.clear();
  }

 private:
  struct ToolEntry {
    ToolDescriptor descriptor;
    ToolHandler handler;
  };

  std::shared_ptr<Backend> backend_for(Role role) const {
    std::lock_guard lock(mutex_);
    auto it = backends_.find(role);
    return it == backends_.end() ? nullptr : it->second;
  }

  std::string invoke_tool(const ToolCallRequest& call) {
    ToolHandler handler;
    {
      std::lock_guard lock(mutex_);
      auto it = tools_.find(call.tool_name);
      if (it != tools_.end()) handler = it->second.handler;
    }
    if (!handler) return "error: unknown tool '" + call.tool_name + "'";
    try {
      return handler(call.arguments);
    } catch (const Error& e) {
      return std::string("error: ") + e.what();
    }
  }

  void log_call(const ModelRequest& req, bool ok) {
    std::lock_guard lock(mutex_);
    log_.push_back({req.role, req.temperature, ok});
  }

  mutable std::mutex mutex_;
  std::map<Role, std::shared_ptr<Backend>> backends_;
  std::map<std::string, ToolEntry> tools_;
  std::vector<CallRecord> log_;
};

}  // namespace flex
