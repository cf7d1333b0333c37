#include "morph/llm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "morph/error.hpp"
#include "morph/util.hpp"

namespace morph::llm {

ChatRequest ChatRequest::user(std::string content, int run_index) {
    ChatRequest r;
    r.messages.push_back({"user", std::move(content)});
    r.run_index = run_index;
    return r;
}

const std::string& ChatRequest::last_user() const {
    static const std::string empty;
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role == "user") return it->content;
    }
    return empty;
}

// ---- endpoint config ----

void ModelEndpoint::validate() const {
    auto where = "model endpoint '" + name + "': ";
    if (name.empty()) throw ConfigError("model endpoint without a name");
    for (char c : name) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) {
            throw ConfigError(where + "name may only use letters, digits, '-', '_' and '.'");
        }
    }
    if (backend == "openai") {
        if (base_url.empty()) throw ConfigError(where + "base_url is required");
        if (model_name.empty()) throw ConfigError(where + "model_name is required");
    } else if (backend == "mock") {
        if (mock_script.empty()) throw ConfigError(where + "mock backend needs a script");
    } else {
        throw ConfigError(where + "unknown backend '" + backend + "'");
    }
    if (temperature < 0) throw ConfigError(where + "temperature must be >= 0");
    if (timeout_s <= 0) throw ConfigError(where + "timeout must be positive");
    if (max_in_flight < 1) throw ConfigError(where + "max_in_flight must be at least 1");
    if (max_retries < 0) throw ConfigError(where + "max_retries must be >= 0");
    if (embed_batch_size < 1) throw ConfigError(where + "embed_batch_size must be at least 1");
}

void to_json(json& j, const ModelEndpoint& e) {
    j = json{{"name", e.name},
             {"backend", e.backend},
             {"base_url", e.base_url},
             {"model_name", e.model_name},
             {"api_key_env", e.api_key_env},
             {"temperature", e.temperature},
             {"max_output_tokens", e.max_output_tokens},
             {"timeout_s", e.timeout_s},
             {"max_retries", e.max_retries},
             {"backoff_initial_s", e.backoff_initial_s},
             {"backoff_max_s", e.backoff_max_s},
             {"max_in_flight", e.max_in_flight},
             {"embed_batch_size", e.embed_batch_size},
             {"mock_script", e.mock_script}};
}

void from_json(const json& j, ModelEndpoint& e) {
    ModelEndpoint d;
    e.name = j.at("name").get<std::string>();
    e.backend = j.value("backend", d.backend);
    e.base_url = j.value("base_url", d.base_url);
    e.model_name = j.value("model_name", d.model_name);
    e.api_key_env = j.value("api_key_env", d.api_key_env);
    e.temperature = j.value("temperature", d.temperature);
    e.max_output_tokens = j.value("max_output_tokens", d.max_output_tokens);
    e.timeout_s = j.value("timeout_s", d.timeout_s);
    e.max_retries = j.value("max_retries", d.max_retries);
    e.backoff_initial_s = j.value("backoff_initial_s", d.backoff_initial_s);
    e.backoff_max_s = j.value("backoff_max_s", d.backoff_max_s);
    e.max_in_flight = j.value("max_in_flight", d.max_in_flight);
    e.embed_batch_size = j.value("embed_batch_size", d.embed_batch_size);
    e.mock_script = j.value("mock_script", d.mock_script);
    if (e.backend == "mock" && e.model_name.empty()) e.model_name = e.name;
}

// ---- OpenAI-compatible client ----

namespace {

// Splits "https://host:port/v1" into ("https://host:port", "/v1").
std::pair<std::string, std::string> split_base_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    auto prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

OpenAiClient::OpenAiClient(ModelEndpoint endpoint)
    : endpoint_(std::move(endpoint)), admission_(std::clamp(endpoint_.max_in_flight, 1, 1024)) {
    endpoint_.validate();
    std::tie(scheme_host_port_, path_prefix_) = split_base_url(endpoint_.base_url);
    if (!endpoint_.api_key_env.empty()) {
        if (const char* key = std::getenv(endpoint_.api_key_env.c_str())) api_key_ = key;
    }
}

OpenAiClient::~OpenAiClient() = default;

json OpenAiClient::post(const std::string& path, const json& body) {
    const auto payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
        if (attempt > 0) {
            double delay = std::min(endpoint_.backoff_initial_s * std::pow(2.0, attempt - 1), endpoint_.backoff_max_s);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        httplib::Result res;
        {
            admission_.acquire();
            struct Release {
                std::counting_semaphore<1024>& s;
                ~Release() { s.release(); }
            } release{admission_};
            httplib::Client cli(scheme_host_port_);
            auto timeout = std::chrono::duration<double>(endpoint_.timeout_s);
            cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
            cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
            cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
            if (!api_key_.empty()) cli.set_bearer_token_auth(api_key_);
            ++requests_sent_;
            res = cli.Post(path_prefix_ + path, payload, "application/json");
        }
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) {
            try {
                return json::parse(res->body);
            } catch (const json::exception& e) {
                throw ProtocolError(path + ": response is not JSON: " + e.what());
            }
        }
        last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
        if (!retryable_status(res->status)) throw ProtocolError(path + ": " + last_error);
    }
    throw TransportError(path + ": giving up after " + std::to_string(endpoint_.max_retries + 1) +
                         " attempts: " + last_error);
}

ChatResponse OpenAiClient::chat(const ChatRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    json body{{"model", endpoint_.model_name},
              {"messages", messages},
              {"temperature", endpoint_.temperature},
              {"max_tokens", endpoint_.max_output_tokens}};
    auto start = std::chrono::steady_clock::now();
    auto doc = post("/chat/completions", body);
    ChatResponse out;
    out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    try {
        const auto& msg = doc.at("choices").at(0).at("message");
        if (msg.contains("content") && msg["content"].is_string()) out.text = msg["content"].get<std::string>();
        if (doc.contains("usage") && doc["usage"].is_object()) {
            out.usage.prompt_tokens = doc["usage"].value("prompt_tokens", 0L);
            out.usage.completion_tokens = doc["usage"].value("completion_tokens", 0L);
        }
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("chat/completions: unexpected shape: ") + e.what());
    }
    return out;
}

std::vector<Vector> OpenAiClient::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw PreconditionError("embed needs at least one text");
    std::vector<Vector> out;
    out.reserve(texts.size());
    const auto batch = static_cast<std::size_t>(endpoint_.embed_batch_size);
    for (std::size_t start = 0; start < texts.size(); start += batch) {
        auto end = std::min(texts.size(), start + batch);
        json body{{"model", endpoint_.model_name},
                  {"input", std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                                     texts.begin() + static_cast<std::ptrdiff_t>(end))}};
        auto doc = post("/embeddings", body);
        std::vector<Vector> chunk(end - start);
        try {
            const auto& data = doc.at("data");
            if (data.size() != chunk.size()) throw ProtocolError("embeddings: wrong number of vectors");
            for (std::size_t i = 0; i < data.size(); ++i) {
                auto idx = data[i].value("index", i);
                if (idx >= chunk.size() || !chunk[idx].empty()) throw ProtocolError("embeddings: bad index");
                chunk[idx] = data[i].at("embedding").get<Vector>();
            }
        } catch (const json::exception& e) {
            throw ProtocolError(std::string("embeddings: unexpected shape: ") + e.what());
        }
        for (auto& v : chunk) out.push_back(std::move(v));
    }
    for (const auto& v : out) {
        if (v.empty() || v.size() != out.front().size()) throw ProtocolError("embeddings: mixed or empty dimensions");
    }
    return out;
}

// ---- mock backend ----

Vector hashed_embedding(const std::string& text, std::size_t dim) {
    Vector v(dim, 0.0);
    std::string token;
    bool any = false;
    auto flush = [&] {
        if (token.empty()) return;
        auto h = util::fnv1a64(token);
        v[h % dim] += (h >> 63) ? -1.0 : 1.0;
        any = true;
        token.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            token.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    double norm = 0;
    for (double x : v) norm += x * x;
    if (!any || norm == 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        v[util::fnv1a64(text) % dim] = 1.0;
        return v;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

std::shared_ptr<MockBackend> MockBackend::from_json(const json& script, std::string name) {
    auto m = std::make_shared<MockBackend>();
    m->name_ = std::move(name);
    try {
        if (!script.contains("default") || !script["default"].is_string()) {
            throw ConfigError("mock script needs a string 'default' response");
        }
        m->default_response_ = script["default"].get<std::string>();
        for (const auto& r : script.value("rules", json::array())) {
            Rule rule;
            rule.pattern = r.at("match").get<std::string>();
            rule.re = std::regex(rule.pattern, std::regex::ECMAScript);
            if (r.contains("response")) rule.response = r["response"].get<std::string>();
            if (r.contains("responses")) rule.responses = r["responses"].get<std::vector<std::string>>();
            if (r.contains("error")) rule.error = r["error"].get<std::string>();
            int set = int(rule.response.has_value()) + int(!rule.responses.empty()) + int(rule.error.has_value());
            if (set != 1) throw ConfigError("mock rule '" + rule.pattern + "' needs exactly one of response, responses, error");
            m->rules_.push_back(std::move(rule));
        }
        m->dim_ = script.value("embedding_dim", std::size_t{64});
        if (m->dim_ == 0) throw ConfigError("mock embedding_dim must be positive");
        auto table = script.value("embeddings", json::object());
        for (auto& [text, vec] : table.items()) {
            auto v = vec.get<Vector>();
            if (v.size() != m->dim_) throw ConfigError("mock embedding for '" + text + "' has the wrong dimension");
            m->embeddings_[text] = std::move(v);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("mock script: ") + e.what());
    } catch (const std::regex_error& e) {
        throw ConfigError(std::string("mock script: bad pattern: ") + e.what());
    }
    return m;
}

std::shared_ptr<MockBackend> MockBackend::from_file(const std::filesystem::path& path, std::string name) {
    json doc;
    try {
        doc = json::parse(util::read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(doc, std::move(name));
}

ChatResponse MockBackend::chat(const ChatRequest& req) {
    const auto& prompt = req.last_user();
    {
        std::lock_guard lock(mu_);
        log_.emplace_back(prompt, req.run_index);
    }
    ChatResponse out;
    for (const auto& rule : rules_) {
        std::smatch m;
        if (!std::regex_search(prompt, m, rule.re)) continue;
        if (rule.error) throw TransportError("mock: " + *rule.error);
        if (rule.response) {
            out.text = rule.response->find('$') == std::string::npos ? *rule.response : m.format(*rule.response);
        } else {
            auto idx = std::min<std::size_t>(static_cast<std::size_t>(std::max(req.run_index, 0)), rule.responses.size() - 1);
            out.text = rule.responses[idx];
        }
        return out;
    }
    out.text = default_response_;
    return out;
}

Vector MockBackend::embedding_for(const std::string& text) const {
    auto it = embeddings_.find(text);
    return it != embeddings_.end() ? it->second : hashed_embedding(text, dim_);
}

std::vector<Vector> MockBackend::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw PreconditionError("embed needs at least one text");
    {
        std::lock_guard lock(mu_);
        ++embed_calls_;
    }
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embedding_for(t));
    return out;
}

long MockBackend::chat_calls() const {
    std::lock_guard lock(mu_);
    return static_cast<long>(log_.size());
}

long MockBackend::embed_calls() const {
    std::lock_guard lock(mu_);
    return embed_calls_;
}

long MockBackend::calls_matching(const std::string& pattern) const {
    std::regex re(pattern);
    std::lock_guard lock(mu_);
    return std::count_if(log_.begin(), log_.end(), [&](const auto& e) { return std::regex_search(e.first, re); });
}

std::vector<std::pair<std::string, int>> MockBackend::call_log() const {
    std::lock_guard lock(mu_);
    return log_;
}

// ---- response cache ----

CachedModel::CachedModel(std::shared_ptr<ChatModel> inner, std::optional<std::filesystem::path> dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {}

std::string CachedModel::key_for(const ChatRequest& req) const {
    util::Hasher h;
    h.add(inner_->model_name()).add(util::format_double(inner_->temperature())).add(std::int64_t{req.run_index});
    for (const auto& m : req.messages) h.add(m.role).add(m.content);
    return h.hex();
}

std::optional<ChatResponse> CachedModel::read_disk(const std::string& key) const {
    if (!dir_) return std::nullopt;
    auto path = *dir_ / key.substr(0, 2) / (key + ".json");
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    try {
        auto doc = json::parse(util::read_text_file(path));
        if (doc.at("key").get<std::string>() != key) return std::nullopt;
        ChatResponse r;
        r.text = doc.at("text").get<std::string>();
        r.usage.prompt_tokens = doc.value("prompt_tokens", 0L);
        r.usage.completion_tokens = doc.value("completion_tokens", 0L);
        r.latency_ms = doc.value("latency_ms", 0.0);
        return r;
    } catch (const std::exception&) {
        return std::nullopt;  // corrupt entry: refetch and overwrite
    }
}

void CachedModel::write_disk(const std::string& key, const ChatResponse& r) const {
    if (!dir_) return;
    json doc{{"key", key},
             {"model", inner_->model_name()},
             {"text", r.text},
             {"prompt_tokens", r.usage.prompt_tokens},
             {"completion_tokens", r.usage.completion_tokens},
             {"latency_ms", r.latency_ms}};
    util::write_text_file_atomic(*dir_ / key.substr(0, 2) / (key + ".json"), doc.dump());
}

ChatResponse CachedModel::chat(const ChatRequest& req) {
    if (bypass_.load()) {
        ++misses_;
        return inner_->chat(req);
    }
    auto key = key_for(req);
    std::promise<ChatResponse> promise;
    {
        std::unique_lock lock(mu_);
        if (auto it = memory_.find(key); it != memory_.end()) {
            ++hits_;
            auto r = it->second;
            r.from_cache = true;
            return r;
        }
        if (auto it = in_flight_.find(key); it != in_flight_.end()) {
            auto fut = it->second;
            lock.unlock();
            ++hits_;
            auto r = fut.get();
            r.from_cache = true;
            return r;
        }
        in_flight_[key] = promise.get_future().share();
    }
    try {
        ChatResponse r;
        if (auto cached = read_disk(key)) {
            ++hits_;
            r = *cached;
            r.from_cache = true;
        } else {
            ++misses_;
            r = inner_->chat(req);
            write_disk(key, r);
        }
        {
            std::lock_guard lock(mu_);
            memory_[key] = r;
            in_flight_.erase(key);
        }
        promise.set_value(r);
        return r;
    } catch (...) {
        promise.set_exception(std::current_exception());
        std::lock_guard lock(mu_);
        in_flight_.erase(key);
        throw;
    }
}

CachedEmbedder::CachedEmbedder(std::shared_ptr<Embedder> inner, std::optional<std::filesystem::path> dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {}

std::vector<Vector> CachedEmbedder::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw PreconditionError("embed needs at least one text");
    auto key_of = [&](const std::string& t) { return util::Hasher().add(inner_->model_name()).add(t).hex(); };
    auto path_of = [&](const std::string& key) { return *dir_ / "embeddings" / key.substr(0, 2) / (key + ".json"); };

    std::vector<std::string> missing;
    {
        std::lock_guard lock(mu_);
        for (const auto& t : texts) {
            if (memory_.count(t) || std::find(missing.begin(), missing.end(), t) != missing.end()) continue;
            if (dir_) {
                try {
                    auto doc = json::parse(util::read_text_file(path_of(key_of(t))));
                    if (doc.at("text").get<std::string>() == t) {
                        memory_[t] = doc.at("vector").get<Vector>();
                        continue;
                    }
                } catch (const std::exception&) {
                }
            }
            missing.push_back(t);
        }
    }
    if (!missing.empty()) {
        auto fresh = inner_->embed(missing);
        if (fresh.size() != missing.size()) throw ProtocolError("embedder returned the wrong number of vectors");
        std::lock_guard lock(mu_);
        for (std::size_t i = 0; i < missing.size(); ++i) {
            memory_[missing[i]] = fresh[i];
            if (dir_) {
                json doc{{"text", missing[i]}, {"vector", fresh[i]}};
                util::write_text_file_atomic(path_of(key_of(missing[i])), doc.dump());
            }
        }
    }
    std::vector<Vector> out;
    std::lock_guard lock(mu_);
    for (const auto& t : texts) {
        const auto& v = memory_.at(t);
        if (!dim_) dim_ = v.size();
        if (v.empty() || v.size() != *dim_) throw ProtocolError("embedding dimension changed within a run");
        out.push_back(v);
    }
    return out;
}

Backend make_backend(const ModelEndpoint& endpoint, const std::filesystem::path& base_dir) {
    endpoint.validate();
    Backend b;
    if (endpoint.backend == "mock") {
        std::filesystem::path script = endpoint.mock_script;
        if (script.is_relative() && !base_dir.empty()) script = base_dir / script;
        b.mock = MockBackend::from_file(script, endpoint.model_name.empty() ? endpoint.name : endpoint.model_name);
        b.chat = b.mock;
        b.embedder = b.mock;
    } else {
        auto client = std::make_shared<OpenAiClient>(endpoint);
        b.chat = client;
        b.embedder = client;
    }
    return b;
}

}  // namespace morph::llm
