#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "morph/error.hpp"
#include "morph/llm.hpp"
#include "morph/util.hpp"
#include "test_support.hpp"

using namespace morph;
using namespace morph::llm;

namespace {

json script() {
    return json::parse(R"js({
        "default": "fallback",
        "rules": [
            {"match": "capital of (\\w+)", "response": "capital:$1"},
            {"match": "^flaky", "responses": ["one", "two", "three"]},
            {"match": "boom", "error": "scripted failure"}
        ],
        "embedding_dim": 3,
        "embeddings": {"x": [1, 0, 0], "y": [0, 1, 0]}
    })js");
}

// Counts inner calls and answers with the prompt plus the run index.
class Echo : public ChatModel {
public:
    ChatResponse chat(const ChatRequest& req) override {
        ++calls;
        std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        ChatResponse r;
        r.text = req.last_user() + "#" + std::to_string(req.run_index);
        return r;
    }
    std::string model_name() const override { return "echo"; }
    std::atomic<int> calls{0};
    int delay_ms = 0;
};

class CountingEmbedder : public Embedder {
public:
    std::vector<Vector> embed(const std::vector<std::string>& texts) override {
        ++calls;
        texts_seen += texts.size();
        std::vector<Vector> out;
        for (const auto& t : texts) out.push_back(hashed_embedding(t, 8));
        return out;
    }
    std::string model_name() const override { return "counting"; }
    int calls = 0;
    std::size_t texts_seen = 0;
};

// Minimal OpenAI-compatible server on a random local port.
class FakeServer {
public:
    FakeServer() {
        srv.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++chat_hits;
            last_auth = req.get_header_value("Authorization");
            if (fail_first > 0) {
                --fail_first;
                res.status = fail_status;
                res.set_content("try later", "text/plain");
                return;
            }
            auto body = json::parse(req.body);
            last_body = body;
            json reply{{"choices", {{{"message", {{"role", "assistant"},
                                                  {"content", "echo: " + body["messages"].back()["content"].get<std::string>()}}}}}},
                       {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 2}}}};
            res.set_content(reply.dump(), "application/json");
        });
        srv.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
            ++embed_hits;
            auto body = json::parse(req.body);
            json data = json::array();
            const auto& input = body["input"];
            // reversed order with explicit indices
            for (std::size_t i = input.size(); i-- > 0;) {
                auto len = double(input[i].get<std::string>().size());
                data.push_back({{"index", i}, {"embedding", {len, 1.0}}});
            }
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        port = srv.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { srv.listen_after_bind(); });
        srv.wait_until_ready();
    }
    ~FakeServer() {
        srv.stop();
        thread.join();
    }

    ModelEndpoint endpoint() const {
        ModelEndpoint e;
        e.name = "fake";
        e.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/";
        e.model_name = "fake-model";
        e.max_retries = 2;
        e.backoff_initial_s = 0.01;
        e.timeout_s = 5;
        return e;
    }

    httplib::Server srv;
    std::thread thread;
    int port = 0;
    std::atomic<int> chat_hits{0}, embed_hits{0};
    int fail_first = 0;
    int fail_status = 503;
    std::string last_auth;
    json last_body;
};

}  // namespace

TEST(Mock, RulesCapturesAndDefault) {
    auto m = MockBackend::from_json(script(), "m");
    EXPECT_EQ(m->chat(ChatRequest::user("What is the capital of France?")).text, "capital:France");
    EXPECT_EQ(m->chat(ChatRequest::user("nothing matches")).text, "fallback");
    EXPECT_THROW(m->chat(ChatRequest::user("boom")), TransportError);
    EXPECT_EQ(m->chat_calls(), 3);
    EXPECT_EQ(m->calls_matching("capital"), 1);
    EXPECT_EQ(m->model_name(), "m");
}

TEST(Mock, RunIndexedResponsesRepeatLast) {
    auto m = MockBackend::from_json(script());
    EXPECT_EQ(m->chat(ChatRequest::user("flaky", 0)).text, "one");
    EXPECT_EQ(m->chat(ChatRequest::user("flaky", 2)).text, "three");
    EXPECT_EQ(m->chat(ChatRequest::user("flaky", 9)).text, "three");
    auto log = m->call_log();
    ASSERT_EQ(log.size(), 3u);
    EXPECT_EQ(log[2].second, 9);
}

TEST(Mock, Embeddings) {
    auto m = MockBackend::from_json(script());
    auto v = m->embed({"x", "y", "some other text"});
    EXPECT_EQ(v[0], (Vector{1, 0, 0}));
    EXPECT_EQ(v[1], (Vector{0, 1, 0}));
    ASSERT_EQ(v[2].size(), 3u);
    EXPECT_EQ(m->embed_calls(), 1);
    EXPECT_THROW(m->embed({}), PreconditionError);
}

TEST(Mock, RejectsBadScripts) {
    EXPECT_THROW(MockBackend::from_json(json::object()), ConfigError);
    EXPECT_THROW(MockBackend::from_json(json::parse(R"({"default":"d","rules":[{"match":"("}]})")), ConfigError);
    EXPECT_THROW(MockBackend::from_json(json::parse(R"({"default":"d","rules":[{"match":"a"}]})")), ConfigError);
    EXPECT_THROW(
        MockBackend::from_json(json::parse(R"({"default":"d","rules":[{"match":"a","response":"x","error":"y"}]})")),
        ConfigError);
    EXPECT_THROW(MockBackend::from_json(json::parse(R"({"default":"d","embedding_dim":2,"embeddings":{"a":[1]}})")),
                 ConfigError);
}

TEST(HashedEmbedding, NormalizedAndDeterministic) {
    for (const std::string t : {"hello world", "", "!!!", "Hello, WORLD"}) {
        auto v = hashed_embedding(t, 16);
        double n = 0;
        for (double x : v) n += x * x;
        EXPECT_NEAR(n, 1.0, 1e-12) << t;
        EXPECT_EQ(v, hashed_embedding(t, 16));
    }
    EXPECT_EQ(hashed_embedding("hello world", 16), hashed_embedding("Hello, WORLD", 16));
}

TEST(Cache, MemoryHitsAndRunIndexSeparation) {
    auto inner = std::make_shared<Echo>();
    CachedModel c(inner, std::nullopt);
    auto a = c.chat(ChatRequest::user("p"));
    auto b = c.chat(ChatRequest::user("p"));
    EXPECT_FALSE(a.from_cache);
    EXPECT_TRUE(b.from_cache);
    EXPECT_EQ(a.text, b.text);
    EXPECT_EQ(c.chat(ChatRequest::user("p", 1)).text, "p#1");
    EXPECT_EQ(inner->calls.load(), 2);
    EXPECT_EQ(c.hits(), 1);
    EXPECT_EQ(c.misses(), 2);
    EXPECT_NE(c.key_for(ChatRequest::user("p", 0)), c.key_for(ChatRequest::user("p", 1)));
}

TEST(Cache, BypassAlwaysCallsInner) {
    auto inner = std::make_shared<Echo>();
    CachedModel c(inner, std::nullopt);
    c.chat(ChatRequest::user("p"));
    c.set_bypass(true);
    for (int i = 0; i < 5; ++i) EXPECT_FALSE(c.chat(ChatRequest::user("p")).from_cache);
    EXPECT_EQ(inner->calls.load(), 6);
}

TEST(Cache, PersistsOnDiskAndSurvivesCorruption) {
    morph::testing::TempDir dir("cache");
    auto inner = std::make_shared<Echo>();
    {
        CachedModel c(inner, dir.path());
        c.chat(ChatRequest::user("q"));
    }
    CachedModel again(inner, dir.path());
    auto r = again.chat(ChatRequest::user("q"));
    EXPECT_TRUE(r.from_cache);
    EXPECT_EQ(r.text, "q#0");
    EXPECT_EQ(inner->calls.load(), 1);

    auto key = again.key_for(ChatRequest::user("z"));
    util::write_text_file_atomic(dir.path() / key.substr(0, 2) / (key + ".json"), "{not json");
    CachedModel third(inner, dir.path());
    EXPECT_EQ(third.chat(ChatRequest::user("z")).text, "z#0");
    EXPECT_EQ(inner->calls.load(), 2);
}

TEST(Cache, ConcurrentIdenticalRequestsFetchOnce) {
    auto inner = std::make_shared<Echo>();
    inner->delay_ms = 50;
    CachedModel c(inner, std::nullopt);
    std::vector<std::thread> ts;
    std::atomic<int> ok{0};
    for (int i = 0; i < 8; ++i) {
        ts.emplace_back([&] {
            if (c.chat(ChatRequest::user("same")).text == "same#0") ++ok;
        });
    }
    for (auto& t : ts) t.join();
    EXPECT_EQ(ok.load(), 8);
    EXPECT_EQ(inner->calls.load(), 1);
}

TEST(EmbedCache, FetchesMissingOnlyAndPersists) {
    morph::testing::TempDir dir("emb");
    auto inner = std::make_shared<CountingEmbedder>();
    {
        CachedEmbedder e(inner, dir.path());
        auto v = e.embed({"a", "b", "a"});
        EXPECT_EQ(v[0], v[2]);
        e.embed({"a", "c"});
        EXPECT_EQ(inner->calls, 2);
        EXPECT_EQ(inner->texts_seen, 3u);
    }
    CachedEmbedder again(inner, dir.path());
    again.embed({"a", "b", "c"});
    EXPECT_EQ(inner->calls, 2);
}

TEST(Endpoint, ValidateAndJson) {
    ModelEndpoint e;
    e.name = "gpt-x";
    EXPECT_THROW(e.validate(), ConfigError);  // openai without base_url
    e.base_url = "http://localhost:1/v1";
    e.model_name = "x";
    EXPECT_NO_THROW(e.validate());
    e.name = "bad name";
    EXPECT_THROW(e.validate(), ConfigError);
    e.name = "ok";
    e.backend = "other";
    EXPECT_THROW(e.validate(), ConfigError);

    auto m = json::parse(R"({"name":"mut","backend":"mock","mock_script":"s.json"})").get<ModelEndpoint>();
    EXPECT_EQ(m.model_name, "mut");
    EXPECT_EQ(json(m).get<ModelEndpoint>().mock_script, "s.json");
}

TEST(Endpoint, MakeBackendResolvesMockScript) {
    morph::testing::TempDir dir("mk");
    util::write_text_file_atomic(dir / "s.json", script().dump());
    auto e = json::parse(R"({"name":"mut","backend":"mock","mock_script":"s.json"})").get<ModelEndpoint>();
    auto b = make_backend(e, dir.path());
    ASSERT_TRUE(b.mock);
    EXPECT_EQ(b.chat->chat(ChatRequest::user("zz")).text, "fallback");
    EXPECT_THROW(make_backend(e, dir / "elsewhere"), ConfigError);
}

TEST(OpenAi, ChatRoundTrip) {
    FakeServer s;
    ::setenv("MORPH_TEST_KEY", "sekrit", 1);
    auto ep = s.endpoint();
    ep.api_key_env = "MORPH_TEST_KEY";
    ep.temperature = 0.5;
    OpenAiClient c(ep);
    ChatRequest req;
    req.messages = {{"system", "be brief"}, {"user", "hi"}};
    auto r = c.chat(req);
    EXPECT_EQ(r.text, "echo: hi");
    EXPECT_EQ(r.usage.prompt_tokens, 7);
    EXPECT_EQ(s.last_auth, "Bearer sekrit");
    EXPECT_EQ(s.last_body["model"], "fake-model");
    EXPECT_EQ(s.last_body["messages"].size(), 2u);
    EXPECT_DOUBLE_EQ(s.last_body["temperature"].get<double>(), 0.5);
    EXPECT_EQ(c.requests_sent(), 1);
}

TEST(OpenAi, RetriesRetryableStatus) {
    FakeServer s;
    s.fail_first = 2;
    OpenAiClient c(s.endpoint());
    EXPECT_EQ(c.chat(ChatRequest::user("x")).text, "echo: x");
    EXPECT_EQ(c.requests_sent(), 3);
}

TEST(OpenAi, GivesUpAfterRetries) {
    FakeServer s;
    s.fail_first = 10;
    OpenAiClient c(s.endpoint());
    EXPECT_THROW(c.chat(ChatRequest::user("x")), TransportError);
    EXPECT_EQ(c.requests_sent(), 3);
}

TEST(OpenAi, ClientErrorIsNotRetried) {
    FakeServer s;
    s.fail_first = 1;
    s.fail_status = 400;
    OpenAiClient c(s.endpoint());
    EXPECT_THROW(c.chat(ChatRequest::user("x")), ProtocolError);
    EXPECT_EQ(c.requests_sent(), 1);
}

TEST(OpenAi, EmbeddingsBatchedAndReordered) {
    FakeServer s;
    auto ep = s.endpoint();
    ep.embed_batch_size = 2;
    OpenAiClient c(ep);
    auto v = c.embed({"a", "bb", "ccc", "dddd", "eeeee"});
    ASSERT_EQ(v.size(), 5u);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i][0], double(i + 1));
    EXPECT_EQ(s.embed_hits.load(), 3);
}

TEST(OpenAi, UnreachableServerIsTransportError) {
    ModelEndpoint e;
    e.name = "gone";
    e.base_url = "http://127.0.0.1:1/v1";
    e.model_name = "m";
    e.max_retries = 1;
    e.backoff_initial_s = 0.01;
    e.timeout_s = 1;
    OpenAiClient c(e);
    EXPECT_THROW(c.chat(ChatRequest::user("x")), TransportError);
    EXPECT_EQ(c.requests_sent(), 2);
}
