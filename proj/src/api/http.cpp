#include "caselet/api/http.hpp"

#include <httplib.h>

#include <cstdlib>
#include <stdexcept>

namespace caselet::api {

namespace {

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

std::int64_t env_int(const char* name, std::int64_t fallback, std::int64_t min = 1) {
    auto v = env(name);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        auto n = std::stoll(*v, &used);
        if (used != v->size() || n < min) throw std::invalid_argument(*v);
        return n;
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string(name) + " must be an integer >= " + std::to_string(min));
    }
}

}  // namespace

ServerSettings settings_from_env() {
    ServerSettings s;
    if (auto listen = env("CASELET_LISTEN")) {
        auto colon = listen->rfind(':');
        if (colon == std::string::npos) throw std::invalid_argument("CASELET_LISTEN must be host:port");
        s.host = listen->substr(0, colon);
        try {
            s.port = std::stoi(listen->substr(colon + 1));
        } catch (const std::exception&) {
            throw std::invalid_argument("CASELET_LISTEN must be host:port");
        }
    }
    if (auto p = env("CASELET_STORE")) s.store_path = *p;
    if (auto p = env("CASELET_OUTBOX")) s.outbox_path = *p;
    auto secret = env("CASELET_TOKEN_SECRET");
    if (!secret) throw std::invalid_argument("CASELET_TOKEN_SECRET is required");
    s.service.token_secret = *secret;
    s.service.auth_max_attempts = static_cast<int>(env_int("CASELET_AUTH_MAX_ATTEMPTS", 10));
    s.service.auth_window_seconds = env_int("CASELET_AUTH_WINDOW", 900);
    s.service.jobs = job_settings_from_env();
    return s;
}

jobs::JobSettings job_settings_from_env() {
    jobs::JobSettings j;
    auto& rl = j.rate_limit;
    rl.max_per_window = static_cast<int>(env_int("CASELET_MSG_MAX_PER_WINDOW", rl.max_per_window));
    rl.window_seconds = static_cast<int>(env_int("CASELET_MSG_WINDOW", rl.window_seconds));
    rl.batch_size = static_cast<int>(env_int("CASELET_MSG_BATCH", rl.batch_size));
    rl.max_attempts = static_cast<int>(env_int("CASELET_MSG_MAX_ATTEMPTS", rl.max_attempts));
    rl.backoff_base_seconds = static_cast<int>(env_int("CASELET_MSG_BACKOFF", rl.backoff_base_seconds));
    rl.validate();
    return j;
}

void serve(Service& service, const std::string& host, int port) {
    httplib::Server server;
    auto adapt = [&service](const httplib::Request& in, httplib::Response& out) {
        Request req;
        req.method = in.method;
        req.path = in.path;
        for (const auto& [k, v] : in.params) req.query.emplace(k, v);
        req.body = in.body;
        req.authorization = in.get_header_value("Authorization");
        auto res = service.handle(req);
        out.status = res.status;
        out.set_content(res.body, res.content_type);
    };
    server.Get(".*", adapt);
    server.Post(".*", adapt);
    server.Put(".*", adapt);
    server.Delete(".*", adapt);
    if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace caselet::api
