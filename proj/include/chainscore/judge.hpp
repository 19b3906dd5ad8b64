#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "chainscore/errors.hpp"
#include "chainscore/metrics.hpp"
#include "chainscore/text.hpp"

namespace chainscore {

struct JudgeVerdict {
  bool internal_ok = false;
  bool external_ok = false;
  int attempts = 0;
  std::string raw_response;
};

/* Deterministic stand-in model. Every response is a pure function of the
   request and this table, so scored runs replay bit for bit. */
struct MockRules {
  struct ConsistencyRule {
    std::string contains;  // matched against chain + context
    bool internal_ok = true;
    bool external_ok = true;
  };
  struct SemanticRule {
    std::string contains;  // matched against prediction + reference
    double score = 1.0;
  };
  struct ExtractRule {
    std::string contains;  // matched against the raw output
    std::string label;
  };
  struct GenerateRule {
    std::string prompt_contains;
    std::vector<std::string> completions;  // cycled when fewer than n
  };
  struct ReflectRule {
    std::string contains;  // matched against the chain
    std::string replacement;
  };

  std::vector<ConsistencyRule> consistency;
  std::vector<SemanticRule> semantic;
  std::vector<ExtractRule> extract;
  std::vector<GenerateRule> generate;
  std::vector<ReflectRule> reflect;
  double semantic_threshold = 0.5;  // word-overlap level treated as a match

  static MockRules from_json(const nlohmann::json& j) {
    MockRules r;
    for (const auto& e : j.value("consistency", nlohmann::json::array()))
      r.consistency.push_back({e.at("contains").get<std::string>(), e.value("internal_ok", true),
                               e.value("external_ok", true)});
    for (const auto& e : j.value("semantic", nlohmann::json::array()))
      r.semantic.push_back({e.at("contains").get<std::string>(), e.value("score", 1.0)});
    for (const auto& e : j.value("extract", nlohmann::json::array()))
      r.extract.push_back({e.at("contains").get<std::string>(), e.at("label").get<std::string>()});
    for (const auto& e : j.value("generate", nlohmann::json::array()))
      r.generate.push_back({e.at("prompt_contains").get<std::string>(),
                            e.at("completions").get<std::vector<std::string>>()});
    for (const auto& e : j.value("reflect", nlohmann::json::array()))
      r.reflect.push_back({e.at("contains").get<std::string>(),
                           e.at("replacement").get<std::string>()});
    r.semantic_threshold = j.value("semantic_threshold", 0.5);
    return r;
  }

  static MockRules from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mock rules file '" + path + "'");
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("mock rules file '" + path + "': " + e.what());
    }
  }
};

struct JudgeConfig {
  enum class Backend { Mock, Remote };
  Backend backend = Backend::Mock;
  std::string endpoint;             // base URL, e.g. http://127.0.0.1:8089
  std::string model = "gpt-4.1";
  double temperature = 0.0;
  int max_tokens = 512;
  int timeout_s = 30;
  int max_retries = 3;
  int backoff_ms = 200;             // doubled per retry
  std::string api_key_env = "CHAINSCORE_API_KEY";  // credentials come from the
                                                   // environment, never from files
  std::string audit_log_path;       // JSONL, appended; empty disables
  MockRules rules;
};

namespace detail {

/* Internal request: the wire body plus the typed payload the mock consumes. */
struct JudgeRequest {
  std::string op;  // consistency | semantic | extract | generate | reflect
  std::string system_prompt;
  std::string user_prompt;
  std::string payload_main;
  std::string payload_aux;
  std::vector<std::string> options;
  int index = 0;
  std::uint64_t seed = 0;

  nlohmann::json wire(const JudgeConfig& cfg) const {
    return nlohmann::json{
        {"model", cfg.model},
        {"messages",
         nlohmann::json::array({nlohmann::json{{"role", "system"}, {"content", system_prompt}},
                                nlohmann::json{{"role", "user"}, {"content", user_prompt}}})},
        {"temperature", cfg.temperature},
        {"max_tokens", cfg.max_tokens}};
  }
};

inline double word_overlap_f1(const std::string& a, const std::string& b) {
  const std::set<std::string> sa = unique_tokens(a);
  const std::set<std::string> sb = unique_tokens(b);
  if (sa.empty() && sb.empty()) return 1.0;
  if (sa.empty() || sb.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& w : sa)
    if (sb.count(w)) ++hit;
  if (hit == 0) return 0.0;
  const double p = static_cast<double>(hit) / static_cast<double>(sa.size());
  const double r = static_cast<double>(hit) / static_cast<double>(sb.size());
  return 2.0 * p * r / (p + r);
}

inline std::optional<std::pair<bool, bool>> parse_consistency_line(const std::string& text) {
  const std::string up = to_lower(text);
  const std::size_t ip = up.find("internal=");
  const std::size_t ep = up.find("external=");
  if (ip == std::string::npos || ep == std::string::npos) return std::nullopt;
  auto read_flag = [&](std::size_t pos) -> std::optional<bool> {
    const std::string rest = up.substr(pos);
    if (rest.rfind("yes", 0) == 0) return true;
    if (rest.rfind("no", 0) == 0) return false;
    return std::nullopt;
  };
  const auto i = read_flag(ip + 9);
  const auto e = read_flag(ep + 9);
  if (!i || !e) return std::nullopt;
  return std::make_pair(*i, *e);
}

inline std::optional<double> parse_score_line(const std::string& text) {
  const std::string up = to_lower(text);
  const std::size_t sp = up.find("score=");
  if (sp == std::string::npos) return std::nullopt;
  const char* begin = text.c_str() + sp + 6;
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin) return std::nullopt;
  if (!std::isfinite(v) || v < 0.0 || v > 1.0) return std::nullopt;
  return v;
}

inline std::optional<std::string> parse_label_line(const std::string& text) {
  const std::string up = to_lower(text);
  const std::size_t lp = up.find("label=");
  if (lp == std::string::npos) return std::nullopt;
  std::string rest = text.substr(lp + 6);
  const std::size_t eol = rest.find('\n');
  if (eol != std::string::npos) rest = rest.substr(0, eol);
  return trim(rest);
}

}  // namespace detail

class JudgeHandle {
 public:
  explicit JudgeHandle(JudgeConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.backend == JudgeConfig::Backend::Remote && cfg_.endpoint.empty())
      throw ConfigError("remote judge configured without an endpoint");
  }

  const JudgeConfig& config() const { return cfg_; }

  /* Two checks in one verdict: does the chain contradict itself, and does it
     contradict the input it reasons about. */
  JudgeVerdict judge_consistency(const std::string& chain_text, const std::string& input_context) {
    detail::JudgeRequest req;
    req.op = "consistency";
    req.system_prompt =
        "You check a reasoning chain for contradictions. Reply with exactly one line of the form "
        "INTERNAL=YES EXTERNAL=NO. INTERNAL is NO when the chain contradicts itself. EXTERNAL is "
        "NO when the chain contradicts the input.";
    req.user_prompt =
        "INPUT:\n---\n" + input_context + "\n---\nCHAIN:\n---\n" + chain_text + "\n---";
    req.payload_main = chain_text;
    req.payload_aux = input_context;

    JudgeVerdict v;
    const std::string response = exchange_with_reask(req, [](const std::string& text) {
      return detail::parse_consistency_line(text).has_value();
    }, v.attempts);
    const auto parsed = detail::parse_consistency_line(response);
    v.internal_ok = parsed->first;
    v.external_ok = parsed->second;
    v.raw_response = response;
    return v;
  }

  /* Semantic equivalence score in [0, 1]. */
  double judge_semantic(const std::string& prediction, const std::string& reference) {
    detail::JudgeRequest req;
    req.op = "semantic";
    req.system_prompt =
        "You rate whether a prediction expresses the same meaning as a reference. Reply with "
        "exactly one line of the form SCORE=0.0 with a value between 0 and 1.";
    req.user_prompt =
        "PREDICTION:\n---\n" + prediction + "\n---\nREFERENCE:\n---\n" + reference + "\n---";
    req.payload_main = prediction;
    req.payload_aux = reference;

    int attempts = 0;
    const std::string response = exchange_with_reask(req, [](const std::string& text) {
      return detail::parse_score_line(text).has_value();
    }, attempts);
    return *detail::parse_score_line(response);
  }

  /* Pull a label out of an output the deterministic cascade could not map. */
  std::optional<std::string> judge_extract(const std::string& raw_output,
                                           const std::vector<std::string>& label_space) {
    detail::JudgeRequest req;
    req.op = "extract";
    req.system_prompt =
        "You extract the final label from a model's raw output. Reply with exactly one line of "
        "the form LABEL=<label from the list> or LABEL=NONE when no single label is committed "
        "to.";
    std::string labels;
    for (const auto& l : label_space) {
      if (!labels.empty()) labels += ", ";
      labels += l;
    }
    req.user_prompt = "LABELS: " + labels + "\nOUTPUT:\n---\n" + raw_output + "\n---";
    req.payload_main = raw_output;
    req.options = label_space;

    int attempts = 0;
    const std::string response = exchange_with_reask(req, [](const std::string& text) {
      return detail::parse_label_line(text).has_value();
    }, attempts);
    const std::string label = *detail::parse_label_line(response);
    if (label.empty() || to_lower(label) == "none") return std::nullopt;
    return label;
  }

  /* n completions for one prompt. The mock derives them from the prompt hash
     and seed; a remote model samples them. */
  std::vector<std::string> generate_candidates(const std::string& prompt, int n,
                                               std::uint64_t seed = 0) {
    if (n < 1) throw ValueError("candidate count must be positive");
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) {
      detail::JudgeRequest req;
      req.op = "generate";
      req.system_prompt = "Follow the task instructions exactly.";
      req.user_prompt = prompt;
      req.payload_main = prompt;
      req.index = i;
      req.seed = seed;
      int attempts = 0;
      out.push_back(exchange_with_reask(req, [](const std::string&) { return true; }, attempts));
    }
    return out;
  }

  /* Rewrite a chain per the instruction; used to normalize formatting. */
  std::string reflect(const std::string& chain_text, const std::string& instruction) {
    detail::JudgeRequest req;
    req.op = "reflect";
    req.system_prompt = instruction;
    req.user_prompt = "CHAIN:\n---\n" + chain_text + "\n---";
    req.payload_main = chain_text;
    int attempts = 0;
    return exchange_with_reask(req, [](const std::string&) { return true; }, attempts);
  }

 private:
  /* One exchange; on an unparseable response, re-ask once with a stricter
     instruction, then fail. Transport failures retry with backoff inside
     transport(). */
  std::string exchange_with_reask(const detail::JudgeRequest& req,
                                  const std::function<bool(const std::string&)>& acceptable,
                                  int& attempts) {
    detail::JudgeRequest attempt = req;
    for (int round = 0; round < 2; ++round) {
      if (round == 1)
        attempt.system_prompt =
            req.system_prompt + " Output exactly one line in the required format and nothing else.";
      const std::string response = transport(attempt);
      ++attempts;
      audit(attempt, response, attempts);
      if (acceptable(response)) return response;
    }
    throw GatewayError("judge returned unusable responses for op '" + req.op + "' after re-ask");
  }

  std::string transport(const detail::JudgeRequest& req) {
    if (cfg_.backend == JudgeConfig::Backend::Mock) return mock_response(req);
    return remote_response(req);
  }

  std::string mock_response(const detail::JudgeRequest& req) const {
    const MockRules& r = cfg_.rules;
    if (req.op == "consistency") {
      const std::string haystack = req.payload_main + "\n" + req.payload_aux;
      for (const auto& rule : r.consistency) {
        if (haystack.find(rule.contains) != std::string::npos)
          return std::string("INTERNAL=") + (rule.internal_ok ? "YES" : "NO") +
                 " EXTERNAL=" + (rule.external_ok ? "YES" : "NO");
      }
      return "INTERNAL=YES EXTERNAL=YES";
    }
    if (req.op == "semantic") {
      const std::string haystack = req.payload_main + "\n" + req.payload_aux;
      for (const auto& rule : r.semantic)
        if (haystack.find(rule.contains) != std::string::npos)
          return "SCORE=" + format_score(rule.score);
      const double overlap = detail::word_overlap_f1(req.payload_main, req.payload_aux);
      return overlap >= r.semantic_threshold ? "SCORE=1.0" : "SCORE=0.0";
    }
    if (req.op == "extract") {
      for (const auto& rule : r.extract)
        if (req.payload_main.find(rule.contains) != std::string::npos)
          return "LABEL=" + rule.label;
      const auto tokens = tokenize(req.payload_main);
      std::vector<std::string> hits;
      for (const auto& l : req.options)
        if (detail::contains_token_seq(tokens, tokenize(l))) hits.push_back(l);
      return hits.size() == 1 ? "LABEL=" + hits[0] : "LABEL=NONE";
    }
    if (req.op == "generate") {
      for (const auto& rule : r.generate) {
        if (req.payload_main.find(rule.prompt_contains) != std::string::npos &&
            !rule.completions.empty())
          return rule.completions[static_cast<std::size_t>(req.index) % rule.completions.size()];
      }
      const std::uint64_t h =
          fnv1a64(req.payload_main) ^ (req.seed * 0x9e3779b97f4a7c15ull) ^
          static_cast<std::uint64_t>(req.index);
      return "<think>Variant " + std::to_string(req.index + 1) + " reasoning trace " + to_hex(h) +
             ".</think><answer>unresolved</answer>";
    }
    if (req.op == "reflect") {
      for (const auto& rule : r.reflect)
        if (req.payload_main.find(rule.contains) != std::string::npos) return rule.replacement;
      return req.payload_main;
    }
    throw GatewayError("mock backend: unknown op '" + req.op + "'");
  }

  std::string remote_response(const detail::JudgeRequest& req) {
    const nlohmann::json body = req.wire(cfg_);
    httplib::Client client(cfg_.endpoint);
    client.set_connection_timeout(cfg_.timeout_s, 0);
    client.set_read_timeout(cfg_.timeout_s, 0);
    httplib::Headers headers;
    if (!cfg_.api_key_env.empty()) {
      if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    std::string last_error;
    for (int retry = 0; retry <= cfg_.max_retries; ++retry) {
      if (retry > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms * (1 << (retry - 1))));
      auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_error = "server error: HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        throw GatewayError("judge endpoint rejected request: HTTP " + std::to_string(res->status));
      try {
        const nlohmann::json j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw GatewayError(std::string("malformed judge response body: ") + e.what());
      }
    }
    throw GatewayError("judge endpoint unreachable after " + std::to_string(cfg_.max_retries + 1) +
                       " attempts: " + last_error);
  }

  static std::string format_score(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }

  void audit(const detail::JudgeRequest& req, const std::string& response, int attempts) {
    if (cfg_.audit_log_path.empty()) return;
    const nlohmann::json line{{"op", req.op},
                              {"backend", cfg_.backend == JudgeConfig::Backend::Mock ? "mock" : "remote"},
                              {"request_digest", to_hex(fnv1a64(req.user_prompt))},
                              {"attempts", attempts},
                              {"response", response}};
    std::lock_guard<std::mutex> lock(audit_mutex_);
    std::ofstream out(cfg_.audit_log_path, std::ios::app);
    out << line.dump() << "\n";
  }

  JudgeConfig cfg_;
  std::mutex audit_mutex_;
};

inline std::shared_ptr<JudgeHandle> make_mock_judge(MockRules rules = {}) {
  JudgeConfig cfg;
  cfg.backend = JudgeConfig::Backend::Mock;
  cfg.rules = std::move(rules);
  return std::make_shared<JudgeHandle>(std::move(cfg));
}

inline std::shared_ptr<JudgeHandle> make_remote_judge(const std::string& endpoint,
                                                      const std::string& model = "gpt-4.1") {
  JudgeConfig cfg;
  cfg.backend = JudgeConfig::Backend::Remote;
  cfg.endpoint = endpoint;
  if (!model.empty()) cfg.model = model;
  return std::make_shared<JudgeHandle>(std::move(cfg));
}

}  // namespace chainscore
