#include "procsplat/service.hpp"

#include <httplib.h>

namespace procsplat {

struct HttpServer::Impl {
    Workshop& workshop;
    httplib::Server server;

    explicit Impl(Workshop& w) : workshop(w) {
        auto send = [](httplib::Response& res, const Response& r) {
            res.status = r.status;
            res.set_content(r.body, r.content_type.c_str());
        };
        server.Get("/assets", [this, send](const httplib::Request&, httplib::Response& res) {
            send(res, workshop.get_assets());
        });
        server.Get(R"(/code/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, workshop.get_code(req.matches[1]));
        });
        server.Get(R"(/jobs/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, workshop.get_job(req.matches[1]));
        });
        server.Post("/assemble", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, workshop.post_assemble(req.body));
        });
        server.Post("/render", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, workshop.post_render(req.body));
        });
        server.Post("/layout", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, workshop.post_layout(req.body));
        });
        server.Post("/city", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, workshop.post_city(req.body));
        });
        // The browser companion is served from another origin during development.
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });
    }
};

HttpServer::HttpServer(Workshop& workshop) : impl_(std::make_unique<Impl>(workshop)) {}
HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host.c_str());
    return impl_->server.bind_to_port(host.c_str(), port) ? port : -1;
}

bool HttpServer::listen() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
}

}  // namespace procsplat
