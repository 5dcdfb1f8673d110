#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "lexcascade/llm_client.hpp"

#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lexcascade/error.hpp"

namespace lexcascade {

using nlohmann::json;

void LlmClientConfig::validate() const
{
    if (max_retries < 0) {
        throw Error(ErrorCode::ConfigError, "llm.max_retries must be >= 0");
    }
    if (token_budget == 0) {
        throw Error(ErrorCode::ConfigError, "llm.token_budget must be > 0");
    }
    if (!(token_factor > 0.0)) {
        throw Error(ErrorCode::ConfigError, "llm.token_factor must be > 0");
    }
    if (backoff_initial_seconds < 0.0 || backoff_multiplier < 1.0) {
        throw Error(ErrorCode::ConfigError, "llm backoff needs initial >= 0 and multiplier >= 1");
    }
    if (max_in_flight == 0) {
        throw Error(ErrorCode::ConfigError, "llm.max_in_flight must be >= 1");
    }
}

StubLlmClient::StubLlmClient(ScoreFn fn) : fn_(std::move(fn)) {}

std::string StubLlmClient::complete(const LlmRequest& request)
{
    json scores = json::object();
    for (const auto& id : request.article_ids) {
        scores[id] = fn_(request.query_id, request.query_text, id);
    }
    return scores.dump();
}

HttpLlmClient::HttpLlmClient(LlmClientConfig cfg) : cfg_(std::move(cfg))
{
    cfg_.validate();
    const char* key = cfg_.api_key_env.empty() ? nullptr : std::getenv(cfg_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw Error(ErrorCode::ConfigError, "API key environment variable '" + cfg_.api_key_env + "' is not set");
    }
    api_key_ = key;
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg_.endpoint, m, url)) {
        throw Error(ErrorCode::ConfigError, "llm.endpoint is not an http(s) URL: " + cfg_.endpoint);
    }
    scheme_host_port_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/";
}

std::string HttpLlmClient::request_body(const LlmClientConfig& cfg, const std::string& prompt)
{
    return json{{"model", cfg.model},
                {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                {"temperature", cfg.temperature}}
        .dump();
}

std::string HttpLlmClient::extract_content(const std::string& response_body)
{
    const json body = json::parse(response_body, nullptr, false);
    if (body.is_discarded()) {
        throw Error(ErrorCode::Transport, "response is not JSON");
    }
    try {
        return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::Transport, "response has no choices[0].message.content");
    }
}

std::string HttpLlmClient::complete(const LlmRequest& request)
{
    httplib::Client client(scheme_host_port_);
    const auto timeout = std::chrono::duration<double>(cfg_.request_timeout_seconds);
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_bearer_token_auth(api_key_);
    const auto res = client.Post(path_, request_body(cfg_, request.prompt), "application/json");
    if (!res) {
        throw Error(ErrorCode::Transport, "request to " + scheme_host_port_ + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw Error(ErrorCode::Transport, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300));
    }
    return extract_content(res->body);
}

ReplayLlmClient::ReplayLlmClient(const std::string& audit_path)
{
    std::ifstream in(audit_path);
    if (!in) {
        throw Error(ErrorCode::ConfigError, "replay log not found: " + audit_path);
    }
    std::string line;
    while (std::getline(in, line)) {
        const json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object()) {
            continue;
        }
        if (rec.contains("prompt") && rec.contains("response") && rec["response"].is_string()) {
            responses_[rec["prompt"].get<std::string>()] = rec["response"].get<std::string>();
        }
    }
}

std::string ReplayLlmClient::complete(const LlmRequest& request)
{
    const auto it = responses_.find(request.prompt);
    if (it == responses_.end()) {
        throw Error(ErrorCode::Transport, "no recorded response for query " + request.query_id);
    }
    return it->second;
}

AuditingLlmClient::AuditingLlmClient(std::shared_ptr<LlmClient> inner, const std::string& audit_path)
    : inner_(std::move(inner)), out_(audit_path, std::ios::app)
{
    if (!out_) {
        throw Error(ErrorCode::ConfigError, "cannot open audit log " + audit_path);
    }
}

std::string AuditingLlmClient::complete(const LlmRequest& request)
{
    json rec{{"query_id", request.query_id}, {"article_ids", request.article_ids}, {"prompt", request.prompt}};
    try {
        auto response = inner_->complete(request);
        rec["response"] = response;
        std::lock_guard lock(mutex_);
        out_ << rec.dump() << '\n' << std::flush;
        return response;
    } catch (const Error& e) {
        rec["error"] = e.what();
        std::lock_guard lock(mutex_);
        out_ << rec.dump() << '\n' << std::flush;
        throw;
    }
}

RateLimitedLlmClient::RateLimitedLlmClient(std::shared_ptr<LlmClient> inner, std::size_t max_in_flight,
                                           std::size_t per_minute)
    : inner_(std::move(inner)), max_in_flight_(std::max<std::size_t>(1, max_in_flight)), per_minute_(per_minute)
{}

std::string RateLimitedLlmClient::complete(const LlmRequest& request)
{
    using clock = std::chrono::steady_clock;
    {
        std::unique_lock lock(mutex_);
        for (;;) {
            const auto now = clock::now();
            while (!recent_.empty() && now - recent_.front() >= std::chrono::minutes(1)) {
                recent_.pop_front();
            }
            const bool rate_ok = per_minute_ == 0 || recent_.size() < per_minute_;
            if (in_flight_ < max_in_flight_ && rate_ok) {
                break;
            }
            if (!rate_ok) {
                cv_.wait_until(lock, recent_.front() + std::chrono::minutes(1));
            } else {
                cv_.wait(lock);
            }
        }
        ++in_flight_;
        if (per_minute_ > 0) {
            recent_.push_back(clock::now());
        }
    }
    struct Release {
        RateLimitedLlmClient& self;
        ~Release()
        {
            {
                std::lock_guard lock(self.mutex_);
                --self.in_flight_;
            }
            self.cv_.notify_all();
        }
    } release{*this};
    return inner_->complete(request);
}

}  // namespace lexcascade
