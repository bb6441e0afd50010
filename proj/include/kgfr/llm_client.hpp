#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

namespace kgfr {

// Chat backend used for relation descriptions, verbalization templates,
// answering and reflection. complete() throws LlmError on failure.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

// Deterministic transcript-driven client for tests and offline runs.
//
// Each call takes the first entry, in file order, whose matcher is a
// substring of the prompt (an empty matcher matches anything) and that has
// not been consumed yet. Entries marked repeat are never consumed. An entry
// with an error message makes the call fail instead of replying.
class ScriptedLlm : public LlmClient {
 public:
  struct Entry {
    std::string match;
    std::string reply;
    std::string error;  // non-empty: fail with this message
    bool repeat = false;
  };

  ScriptedLlm() = default;
  explicit ScriptedLlm(std::vector<Entry> entries) : entries_(std::move(entries)), used_(entries_.size(), false) {}
  ScriptedLlm(ScriptedLlm&& other) noexcept
      : entries_(std::move(other.entries_)), used_(std::move(other.used_)), calls_(other.calls_) {}

  // Transcript file: one JSON object per line,
  //   {"match": "...", "reply": "...", "repeat": false}
  //   {"match": "...", "error": "..."}
  static ScriptedLlm load(const std::filesystem::path& path);

  std::string complete(const std::string& prompt) override;

  std::size_t calls() const;
  std::size_t remaining() const;  // unconsumed non-repeat entries

 private:
  mutable std::mutex mu_;
  std::vector<Entry> entries_;
  std::vector<bool> used_;
  std::size_t calls_ = 0;
};

// Bounds the number of concurrent requests a remote client issues.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(std::size_t limit) : limit_(limit == 0 ? 1 : limit) {}

  class Slot {
   public:
    explicit Slot(InFlightLimiter& l) : l_(l) { l_.acquire(); }
    ~Slot() { l_.release(); }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    InFlightLimiter& l_;
  };

 private:
  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      --active_;
    }
    cv_.notify_one();
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t limit_;
  std::size_t active_ = 0;
};

// Client for an OpenAI-style chat-completion endpoint. The wire format is
// documented in docs/protocols.md.
class RemoteLlm : public LlmClient {
 public:
  struct Config {
    std::string base_url;  // e.g. https://api.example.com/v1
    std::string model;
    std::string api_key;   // sent as "Authorization: Bearer <key>" when set
    std::chrono::milliseconds timeout{60000};
    int max_retries = 2;
    std::chrono::milliseconds backoff{500};
    std::size_t max_in_flight = 4;
  };

  explicit RemoteLlm(Config config);

  // KGFR_LLM_BASE_URL, KGFR_LLM_MODEL, KGFR_LLM_API_KEY, KGFR_LLM_TIMEOUT_MS.
  static Config config_from_env();

  std::string complete(const std::string& prompt) override;

  const Config& config() const noexcept { return config_; }

 private:
  Config config_;
  InFlightLimiter limiter_;
};

}  // namespace kgfr
