#include "kgfr/llm_client.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "http_util.hpp"
#include "kgfr/error.hpp"

namespace kgfr {

ScriptedLlm ScriptedLlm::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open transcript '" + path.string() + "'");
  std::vector<Entry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("transcript: ") + e.what(), line_no);
    }
    Entry entry;
    entry.match = j.value("match", "");
    entry.reply = j.value("reply", "");
    entry.error = j.value("error", "");
    entry.repeat = j.value("repeat", false);
    if (!j.contains("reply") && entry.error.empty())
      throw ParseError("transcript entry needs 'reply' or 'error'", line_no);
    entries.push_back(std::move(entry));
  }
  return ScriptedLlm(std::move(entries));
}

std::string ScriptedLlm::complete(const std::string& prompt) {
  std::lock_guard lock(mu_);
  ++calls_;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (used_[i]) continue;
    const Entry& e = entries_[i];
    if (!e.match.empty() && prompt.find(e.match) == std::string::npos) continue;
    if (!e.repeat) used_[i] = true;
    if (!e.error.empty()) throw LlmError("scripted failure: " + e.error);
    return e.reply;
  }
  const auto first_line = prompt.substr(0, prompt.find('\n'));
  throw LlmError("scripted transcript has no reply for prompt starting '" + first_line + "'");
}

std::size_t ScriptedLlm::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t ScriptedLlm::remaining() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (!used_[i] && !entries_[i].repeat) ++n;
  return n;
}

RemoteLlm::RemoteLlm(Config config) : config_(std::move(config)), limiter_(config_.max_in_flight) {
  if (config_.base_url.empty()) throw ConfigError("remote LLM: base URL is empty");
  if (config_.model.empty()) throw ConfigError("remote LLM: model name is empty");
}

RemoteLlm::Config RemoteLlm::config_from_env() {
  Config c;
  if (const char* v = std::getenv("KGFR_LLM_BASE_URL")) c.base_url = v;
  if (const char* v = std::getenv("KGFR_LLM_MODEL")) c.model = v;
  if (const char* v = std::getenv("KGFR_LLM_API_KEY")) c.api_key = v;
  if (const char* v = std::getenv("KGFR_LLM_TIMEOUT_MS")) c.timeout = std::chrono::milliseconds(std::atol(v));
  return c;
}

std::string RemoteLlm::complete(const std::string& prompt) {
  const auto [host, base_path] = detail::split_url(config_.base_url);
  const std::string path = detail::join_path(base_path, "/chat/completions");

  nlohmann::json body;
  body["model"] = config_.model;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = 0;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  InFlightLimiter::Slot slot(limiter_);
  std::string last_error;
  auto backoff = config_.backoff;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(host);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw LlmError("chat endpoint returned HTTP " + std::to_string(res->status));
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw LlmError(std::string("malformed chat response: ") + e.what());
    }
  }
  throw LlmError("chat endpoint failed after " + std::to_string(config_.max_retries + 1) +
                 " attempts: " + last_error);
}

}  // namespace kgfr
