#include <thread>

#include "httplib.h"
#include "morph/error.hpp"
#include "morph/report.hpp"

namespace morph::report {

struct TriageServer::Impl {
    std::shared_ptr<TriageService> service;
    std::optional<std::filesystem::path> static_dir;
    httplib::Server server;
    std::thread thread;
};

namespace {

void reply(httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
}

}  // namespace

TriageServer::TriageServer(std::shared_ptr<TriageService> service, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>()) {
    impl_->service = std::move(service);
    impl_->static_dir = std::move(static_dir);
    auto& s = impl_->server;
    auto* svc = impl_->service.get();

    s.Get("/api/violations", [svc](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> query;
        for (const auto& [k, v] : req.params) query[k] = v;
        reply(res, svc->list_violations(query));
    });
    s.Get(R"(/api/violations/([^/]+))", [svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc->violation(req.matches[1]));
    });
    s.Post(R"(/api/violations/([^/]+)/label)", [svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc->post_label(req.matches[1], req.body));
    });
    s.Get("/api/progress", [svc](const httplib::Request&, httplib::Response& res) { reply(res, svc->progress()); });
    s.Get("/api/metrics", [svc](const httplib::Request&, httplib::Response& res) { reply(res, svc->metrics()); });
    s.Get("/api/labels/summary",
          [svc](const httplib::Request&, httplib::Response& res) { reply(res, svc->label_summary()); });

    s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(json{{"error", what}}.dump(), "application/json");
    });

    if (impl_->static_dir) {
        if (!std::filesystem::is_directory(*impl_->static_dir)) {
            throw ConfigError("UI directory not found: " + impl_->static_dir->string());
        }
        s.set_mount_point("/", impl_->static_dir->string());
    }
}

TriageServer::~TriageServer() { stop(); }

int TriageServer::start(const std::string& bind_address) {
    auto colon = bind_address.rfind(':');
    if (colon == std::string::npos) throw ConfigError("bind address must be host:port, got '" + bind_address + "'");
    auto host = bind_address.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(bind_address.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConfigError("bad port in '" + bind_address + "'");
    }
    if (port < 0 || port > 65535) throw ConfigError("bad port in '" + bind_address + "'");

    auto& s = impl_->server;
    if (port == 0) {
        port = s.bind_to_any_port(host);
        if (port < 0) throw ConfigError("cannot bind " + host);
    } else if (!s.bind_to_port(host, port)) {
        throw ConfigError("cannot bind " + bind_address);
    }
    impl_->thread = std::thread([&s] { s.listen_after_bind(); });
    s.wait_until_ready();
    return port;
}

void TriageServer::stop() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

void TriageServer::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace morph::report
