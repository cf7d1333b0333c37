#pragma once

// Model access: chat completions and embeddings over the OpenAI-compatible
// wire format, a scriptable mock backend, and a response cache.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <string>
#include <vector>

#include "morph/core.hpp"

namespace morph::llm {

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    // Repetition index of the same logical call; 0 for the first execution.
    int run_index = 0;

    static ChatRequest user(std::string content, int run_index = 0);
    // Content of the last user message, or "" when there is none.
    const std::string& last_user() const;
};

struct Usage {
    long prompt_tokens = 0;
    long completion_tokens = 0;
};

struct ChatResponse {
    std::string text;
    Usage usage;
    double latency_ms = 0.0;
    bool from_cache = false;
};

using Vector = std::vector<double>;

class ChatModel {
public:
    virtual ~ChatModel() = default;
    virtual ChatResponse chat(const ChatRequest& req) = 0;
    // Name used in cache keys and traces.
    virtual std::string model_name() const = 0;
    virtual double temperature() const { return 0.0; }
};

class Embedder {
public:
    virtual ~Embedder() = default;
    // One vector per text, all of the same dimension.
    virtual std::vector<Vector> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string model_name() const = 0;
};

// ---- configuration ----

struct ModelEndpoint {
    std::string name;             // label in artifacts; URL-safe
    std::string backend = "openai";  // openai | mock
    std::string base_url;         // e.g. http://localhost:8000/v1
    std::string model_name;
    std::string api_key_env;      // environment variable holding the key
    double temperature = 0.0;
    int max_output_tokens = 512;
    double timeout_s = 60.0;
    int max_retries = 3;
    double backoff_initial_s = 0.5;
    double backoff_max_s = 8.0;
    int max_in_flight = 4;
    int embed_batch_size = 64;
    std::string mock_script;  // path, mock backend only

    void validate() const;
};

void to_json(json& j, const ModelEndpoint& e);
void from_json(const json& j, ModelEndpoint& e);

// ---- OpenAI-compatible HTTP client ----

class OpenAiClient : public ChatModel, public Embedder {
public:
    explicit OpenAiClient(ModelEndpoint endpoint);
    ~OpenAiClient() override;

    ChatResponse chat(const ChatRequest& req) override;
    std::vector<Vector> embed(const std::vector<std::string>& texts) override;
    std::string model_name() const override { return endpoint_.model_name; }
    double temperature() const override { return endpoint_.temperature; }

    // Requests actually sent, retries included.
    long requests_sent() const { return requests_sent_.load(); }

private:
    json post(const std::string& path, const json& body);

    ModelEndpoint endpoint_;
    std::string scheme_host_port_;
    std::string path_prefix_;
    std::string api_key_;
    std::counting_semaphore<1024> admission_;
    std::atomic<long> requests_sent_{0};
};

// ---- mock backend ----

// Scripted model. Rules are tried in order against the last user message
// (regex search); the first match answers. A rule answers with a fixed
// `response` (may reference capture groups as $1...), a run-indexed list
// `responses` (the last entry repeats), or raises `error`. The `default`
// response answers everything else. Embeddings come from the `embeddings`
// table when the text is listed, otherwise from a hashed bag of words of
// `embedding_dim` dimensions.
class MockBackend : public ChatModel, public Embedder {
public:
    struct Rule {
        std::string pattern;
        std::regex re;
        std::optional<std::string> response;
        std::vector<std::string> responses;
        std::optional<std::string> error;
    };

    static std::shared_ptr<MockBackend> from_json(const json& script, std::string name = "mock");
    static std::shared_ptr<MockBackend> from_file(const std::filesystem::path& path, std::string name = "mock");

    ChatResponse chat(const ChatRequest& req) override;
    std::vector<Vector> embed(const std::vector<std::string>& texts) override;
    std::string model_name() const override { return name_; }

    long chat_calls() const;
    long embed_calls() const;
    // Number of chat calls whose last user message matches `pattern`.
    long calls_matching(const std::string& pattern) const;
    std::vector<std::pair<std::string, int>> call_log() const;  // (last user message, run_index)

    Vector embedding_for(const std::string& text) const;

private:
    std::string name_;
    std::vector<Rule> rules_;
    std::string default_response_;
    std::map<std::string, Vector> embeddings_;
    std::size_t dim_ = 64;

    mutable std::mutex mu_;
    std::vector<std::pair<std::string, int>> log_;
    long embed_calls_ = 0;
};

// Deterministic L2-normalized bag-of-words vector; never all-zero.
Vector hashed_embedding(const std::string& text, std::size_t dim);

// ---- cache ----

// Wraps a chat model with a response cache keyed by
// (model name, messages, temperature, run_index). With a directory the cache
// persists one JSON file per key; unreadable entries are refetched.
// Concurrent identical requests are fetched once.
class CachedModel : public ChatModel {
public:
    CachedModel(std::shared_ptr<ChatModel> inner, std::optional<std::filesystem::path> dir);

    ChatResponse chat(const ChatRequest& req) override;
    std::string model_name() const override { return inner_->model_name(); }
    double temperature() const override { return inner_->temperature(); }

    // While set, every call goes to the inner model and nothing is stored.
    void set_bypass(bool on) { bypass_.store(on); }
    bool bypass() const { return bypass_.load(); }

    long hits() const { return hits_.load(); }
    long misses() const { return misses_.load(); }

    std::string key_for(const ChatRequest& req) const;

private:
    std::optional<ChatResponse> read_disk(const std::string& key) const;
    void write_disk(const std::string& key, const ChatResponse& r) const;

    std::shared_ptr<ChatModel> inner_;
    std::optional<std::filesystem::path> dir_;
    std::atomic<bool> bypass_{false};
    std::atomic<long> hits_{0};
    std::atomic<long> misses_{0};

    std::mutex mu_;
    std::map<std::string, ChatResponse> memory_;
    std::map<std::string, std::shared_future<ChatResponse>> in_flight_;
};

// Embedding cache keyed by (model name, text); in memory plus optional disk.
class CachedEmbedder : public Embedder {
public:
    CachedEmbedder(std::shared_ptr<Embedder> inner, std::optional<std::filesystem::path> dir);

    std::vector<Vector> embed(const std::vector<std::string>& texts) override;
    std::string model_name() const override { return inner_->model_name(); }

private:
    std::shared_ptr<Embedder> inner_;
    std::optional<std::filesystem::path> dir_;
    std::mutex mu_;
    std::map<std::string, Vector> memory_;
    std::optional<std::size_t> dim_;
};

// Builds the backend an endpoint names. Mock scripts resolve relative to
// `base_dir`.
struct Backend {
    std::shared_ptr<ChatModel> chat;
    std::shared_ptr<Embedder> embedder;
    std::shared_ptr<MockBackend> mock;  // set for mock endpoints
};
Backend make_backend(const ModelEndpoint& endpoint, const std::filesystem::path& base_dir = {});

}  // namespace morph::llm
