#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace lexcascade {

struct LlmClientConfig {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4-1106-preview";
    std::string api_key_env = "OPENAI_API_KEY";
    double temperature = 0.0;
    int max_retries = 3;
    double backoff_initial_seconds = 1.0;
    double backoff_multiplier = 2.0;
    std::size_t token_budget = 25000;
    double token_factor = 1.3;
    double request_timeout_seconds = 120.0;
    std::size_t max_in_flight = 4;
    std::size_t requests_per_minute = 0;  // 0 = unlimited

    /// Throws ConfigError.
    void validate() const;
};

struct LlmRequest {
    std::string query_id;
    std::string query_text;
    std::vector<std::string> article_ids;
    std::string prompt;
};

/// Chat-completion transport. complete() returns the model's text and throws
/// Error(Transport) on failures worth retrying.
class LlmClient {
  public:
    virtual ~LlmClient() = default;
    virtual std::string complete(const LlmRequest& request) = 0;
};

/// Answers with a JSON object built from a scoring function; no network.
class StubLlmClient final : public LlmClient {
  public:
    /// (query id, query text, article id) -> score in [0,100]
    using ScoreFn = std::function<int(const std::string&, const std::string&, const std::string&)>;

    explicit StubLlmClient(ScoreFn fn);
    std::string complete(const LlmRequest& request) override;

  private:
    ScoreFn fn_;
};

/// POST {model, messages:[{role, content}], temperature} and read
/// choices[0].message.content. The API key comes from the environment
/// variable named in the config.
class HttpLlmClient final : public LlmClient {
  public:
    /// Throws ConfigError naming the variable when the key is not set.
    explicit HttpLlmClient(LlmClientConfig cfg);
    std::string complete(const LlmRequest& request) override;

    static std::string request_body(const LlmClientConfig& cfg, const std::string& prompt);
    /// Throws Error(Transport) when the body has no message content.
    static std::string extract_content(const std::string& response_body);

  private:
    LlmClientConfig cfg_;
    std::string api_key_;
    std::string scheme_host_port_;
    std::string path_;
};

/// Re-serves responses recorded by AuditingLlmClient, keyed by prompt text.
class ReplayLlmClient final : public LlmClient {
  public:
    /// Throws ConfigError when the log cannot be read.
    explicit ReplayLlmClient(const std::string& audit_path);
    std::string complete(const LlmRequest& request) override;
    [[nodiscard]] std::size_t size() const noexcept { return responses_.size(); }

  private:
    std::unordered_map<std::string, std::string> responses_;
};

/// Appends every request and its outcome to a JSONL audit file.
class AuditingLlmClient final : public LlmClient {
  public:
    AuditingLlmClient(std::shared_ptr<LlmClient> inner, const std::string& audit_path);
    std::string complete(const LlmRequest& request) override;

  private:
    std::shared_ptr<LlmClient> inner_;
    std::mutex mutex_;
    std::ofstream out_;
};

/// Caps concurrent calls and calls per rolling minute.
class RateLimitedLlmClient final : public LlmClient {
  public:
    RateLimitedLlmClient(std::shared_ptr<LlmClient> inner, std::size_t max_in_flight, std::size_t per_minute);
    std::string complete(const LlmRequest& request) override;

  private:
    std::shared_ptr<LlmClient> inner_;
    std::size_t max_in_flight_;
    std::size_t per_minute_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::size_t in_flight_ = 0;
    std::deque<std::chrono::steady_clock::time_point> recent_;
};

}  // namespace lexcascade
