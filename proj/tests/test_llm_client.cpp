#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <atomic>
#include <cstdlib>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lexcascade/error.hpp"
#include "lexcascade/llm_client.hpp"
#include "support/support.hpp"

using namespace lexcascade;
using nlohmann::json;

namespace {

ErrorCode code_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorCode::Io;
}

LlmRequest request(const std::string& prompt = "prompt text")
{
    return {"q1", "question", {"Article 1", "Article 2"}, prompt};
}

// Local chat-completion endpoint on an ephemeral port.
class FakeEndpoint {
  public:
    explicit FakeEndpoint(std::function<void(const httplib::Request&, httplib::Response&)> handler)
    {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeEndpoint()
    {
        server_.stop();
        thread_.join();
    }
    [[nodiscard]] std::string url() const
    {
        return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    }

  private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

LlmClientConfig config_for(const FakeEndpoint& endpoint)
{
    LlmClientConfig cfg;
    cfg.endpoint = endpoint.url();
    cfg.api_key_env = "LEXCASCADE_TEST_KEY";
    cfg.request_timeout_seconds = 5;
    ::setenv("LEXCASCADE_TEST_KEY", "sk-test", 1);
    return cfg;
}

}  // namespace

TEST(StubClient, JsonOfScores)
{
    StubLlmClient stub([](const std::string&, const std::string&, const std::string& id) {
        return id == "Article 1" ? 85 : 10;
    });
    EXPECT_EQ(stub.complete(request()), R"({"Article 1":85,"Article 2":10})");
}

TEST(HttpClient, RequestShape)
{
    LlmClientConfig cfg;
    cfg.model = "some-model";
    const auto body = json::parse(HttpLlmClient::request_body(cfg, "hello"));
    EXPECT_EQ(body["model"], "some-model");
    EXPECT_EQ(body["temperature"], 0.0);
    EXPECT_EQ(body["messages"], json::parse(R"([{"role":"user","content":"hello"}])"));
    EXPECT_EQ(HttpLlmClient::extract_content(R"({"choices":[{"message":{"content":"{\"a\": 1}"}}]})"), "{\"a\": 1}");
    EXPECT_EQ(code_of([] { (void)HttpLlmClient::extract_content(R"({"error":"x"})"); }), ErrorCode::Transport);
    EXPECT_EQ(code_of([] { (void)HttpLlmClient::extract_content("<html>"); }), ErrorCode::Transport);
}

TEST(HttpClient, MissingKeyNamesVariable)
{
    LlmClientConfig cfg;
    cfg.api_key_env = "LEXCASCADE_SURELY_UNSET_KEY";
    ::unsetenv("LEXCASCADE_SURELY_UNSET_KEY");
    try {
        HttpLlmClient client(cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ConfigError);
        EXPECT_NE(std::string(e.what()).find("LEXCASCADE_SURELY_UNSET_KEY"), std::string::npos);
    }
}

TEST(HttpClient, RoundTripAgainstLocalEndpoint)
{
    std::string auth;
    json seen;
    FakeEndpoint endpoint([&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        seen = json::parse(req.body);
        res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "{\"Article 1\": 70}"}}}}}}}.dump(),
                        "application/json");
    });
    HttpLlmClient client(config_for(endpoint));
    EXPECT_EQ(client.complete(request("the prompt")), "{\"Article 1\": 70}");
    EXPECT_EQ(auth, "Bearer sk-test");
    EXPECT_EQ(seen["messages"][0]["content"], "the prompt");
}

TEST(HttpClient, ServerErrorIsTransport)
{
    FakeEndpoint endpoint([](const httplib::Request&, httplib::Response& res) {
        res.status = 503;
        res.set_content("overloaded", "text/plain");
    });
    HttpLlmClient client(config_for(endpoint));
    EXPECT_EQ(code_of([&] { (void)client.complete(request()); }), ErrorCode::Transport);
}

TEST(HttpClient, UnreachableIsTransport)
{
    LlmClientConfig cfg;
    cfg.endpoint = "http://127.0.0.1:9/v1/chat/completions";
    cfg.api_key_env = "LEXCASCADE_TEST_KEY";
    cfg.request_timeout_seconds = 2;
    ::setenv("LEXCASCADE_TEST_KEY", "sk-test", 1);
    HttpLlmClient client(cfg);
    EXPECT_EQ(code_of([&] { (void)client.complete(request()); }), ErrorCode::Transport);
}

TEST(AuditReplay, ReplaysRecordedResponses)
{
    lexcascade::testing::TempDir dir;
    const auto log = (dir / "audit.jsonl").string();
    auto stub = std::make_shared<StubLlmClient>(
        [](const std::string&, const std::string&, const std::string& id) { return static_cast<int>(id.size()); });
    {
        AuditingLlmClient audit(stub, log);
        EXPECT_EQ(audit.complete(request("p1")), stub->complete(request("p1")));
        (void)audit.complete(request("p2"));
    }
    ReplayLlmClient replay(log);
    EXPECT_EQ(replay.size(), 2U);
    EXPECT_EQ(replay.complete(request("p1")), stub->complete(request("p1")));
    EXPECT_EQ(code_of([&] { (void)replay.complete(request("never sent")); }), ErrorCode::Transport);
    EXPECT_EQ(code_of([] { ReplayLlmClient r("/nonexistent/audit.jsonl"); }), ErrorCode::ConfigError);
}

TEST(AuditReplay, FailuresAreLogged)
{
    lexcascade::testing::TempDir dir;
    class Failing final : public LlmClient {
      public:
        std::string complete(const LlmRequest&) override { throw Error(ErrorCode::Transport, "down"); }
    };
    AuditingLlmClient audit(std::make_shared<Failing>(), (dir / "a.jsonl").string());
    EXPECT_THROW((void)audit.complete(request()), Error);
    const auto rec = json::parse(lexcascade::testing::read_file(dir / "a.jsonl"));
    EXPECT_TRUE(rec.contains("error"));
    EXPECT_EQ(rec["article_ids"], json::array({"Article 1", "Article 2"}));
}

TEST(RateLimit, CapsInFlight)
{
    std::atomic<int> current{0};
    std::atomic<int> peak{0};
    class Slow final : public LlmClient {
      public:
        Slow(std::atomic<int>& c, std::atomic<int>& p) : c_(c), p_(p) {}
        std::string complete(const LlmRequest&) override
        {
            const int now = ++c_;
            int seen = p_.load();
            while (now > seen && !p_.compare_exchange_weak(seen, now)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            --c_;
            return "{}";
        }

      private:
        std::atomic<int>& c_;
        std::atomic<int>& p_;
    };
    RateLimitedLlmClient limited(std::make_shared<Slow>(current, peak), 2, 0);
    std::vector<std::jthread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&] { (void)limited.complete(request()); });
    }
    threads.clear();
    EXPECT_LE(peak.load(), 2);
    EXPECT_GE(peak.load(), 1);
}

TEST(ClientConfig, Validate)
{
    LlmClientConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.max_retries = -1;
    EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::ConfigError);
    cfg = {};
    cfg.token_budget = 0;
    EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::ConfigError);
}
