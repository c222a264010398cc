#pragma once

// The documented permission table for management routes, with a concrete
// request per route, and the scope universe the matrix tests enumerate.

#include <string>
#include <vector>

#include "caselet/api/token.hpp"
#include "caselet/json.hpp"

namespace caselet::testing {

struct DocumentedRoute {
    std::string method;
    std::string pattern;
    api::Permission permission;
    bool study_scoped;  // otherwise a global scope is required
    std::string path;   // concrete request against study "flu"
    Json body;
};

inline std::vector<DocumentedRoute> documented_routes() {
    using api::Permission;
    return {
        {"PUT", "/m/v1/studies/{study}/surveys/{survey}", Permission::ManageConfig, true,
         "/m/v1/studies/flu/surveys/intake", Json::object()},
        {"PUT", "/m/v1/studies/{study}/rules", Permission::ManageConfig, true, "/m/v1/studies/flu/rules",
         Json::object()},
        {"GET", "/m/v1/studies/{study}/responses", Permission::ReadResponses, true, "/m/v1/studies/flu/responses",
         Json::object()},
        {"GET", "/m/v1/studies/{study}/participants", Permission::ReadResponses, true,
         "/m/v1/studies/flu/participants", Json::object()},
        {"POST", "/m/v1/studies/{study}/events/custom", Permission::ManageConfig, true,
         "/m/v1/studies/flu/events/custom", Json{{"eventKey", "noop"}, {"participants", Json::array()}}},
        {"POST", "/m/v1/jobs/{job}/run", Permission::Admin, false, "/m/v1/jobs/cleanup/run", Json::object()},
        {"PUT", "/m/v1/templates/{key}", Permission::ManageConfig, false, "/m/v1/templates/reminder",
         Json::object()},
    };
}

/// Three permissions over {global, the target study, another study}.
inline std::vector<api::Scope> scope_universe() {
    using api::Permission;
    using api::Scope;
    std::vector<Scope> out;
    for (auto p : {Permission::ReadResponses, Permission::ManageConfig, Permission::Admin}) {
        out.push_back(Scope::global(p));
        out.push_back(Scope::study("flu", p));
        out.push_back(Scope::study("other", p));
    }
    return out;
}

/// Table lookup, written against the table rather than the service's matcher.
inline bool documented_allows(const DocumentedRoute& route, const std::vector<api::Scope>& held) {
    for (const auto& s : held) {
        if (s.permission != route.permission) continue;
        if (s.resource == "global") return true;
        if (route.study_scoped && s.resource == "study:flu") return true;
    }
    return false;
}

}  // namespace caselet::testing
