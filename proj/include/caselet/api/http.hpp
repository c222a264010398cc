#pragma once

#include <filesystem>
#include <string>

#include "caselet/api/service.hpp"

namespace caselet::api {

/// Server settings read from the environment:
///   CASELET_LISTEN              host:port (default 127.0.0.1:8080)
///   CASELET_STORE               journal path (default caselet.journal)
///   CASELET_OUTBOX              outbox path (default outbox.ndjson)
///   CASELET_TOKEN_SECRET        required
///   CASELET_AUTH_MAX_ATTEMPTS   login attempts per window (default 10)
///   CASELET_AUTH_WINDOW         window in seconds (default 900)
///   CASELET_MSG_MAX_PER_WINDOW, CASELET_MSG_WINDOW, CASELET_MSG_BATCH,
///   CASELET_MSG_MAX_ATTEMPTS, CASELET_MSG_BACKOFF   message dispatch limits
struct ServerSettings {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path store_path = "caselet.journal";
    std::filesystem::path outbox_path = "outbox.ndjson";
    ServiceConfig service;
};

/// Throws std::invalid_argument naming the offending variable.
ServerSettings settings_from_env();

/// The CASELET_MSG_* limits alone; shared by the server and `run-job`.
jobs::JobSettings job_settings_from_env();

/// Serves `service` over HTTP until the process is stopped.
void serve(Service& service, const std::string& host, int port);

}  // namespace caselet::api
