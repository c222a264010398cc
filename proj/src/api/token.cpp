#include "caselet/api/token.hpp"

#include <sodium.h>

#include <stdexcept>

namespace caselet::api {

namespace {

std::string b64(const unsigned char* data, std::size_t n) {
    std::string out(sodium_base64_encoded_len(n, sodium_base64_VARIANT_URLSAFE_NO_PADDING), '\0');
    sodium_bin2base64(out.data(), out.size(), data, n, sodium_base64_VARIANT_URLSAFE_NO_PADDING);
    out.resize(std::char_traits<char>::length(out.c_str()));
    return out;
}

std::optional<std::vector<unsigned char>> unb64(std::string_view s) {
    std::vector<unsigned char> out(s.size());
    std::size_t len = 0;
    if (sodium_base642bin(out.data(), out.size(), s.data(), s.size(), nullptr, &len, nullptr,
                          sodium_base64_VARIANT_URLSAFE_NO_PADDING) != 0)
        return std::nullopt;
    out.resize(len);
    return out;
}

Json encode_claims(const TokenClaims& c) {
    Json scopes = Json::array();
    for (const auto& s : c.scopes) scopes.push_back(format_scope(s));
    return {{"kind", c.kind == TokenKind::Participant ? "participant" : "management"},
            {"sub", c.subject},
            {"scopes", std::move(scopes)},
            {"exp", c.expires_at.seconds}};
}

std::optional<TokenClaims> decode_claims(const Json& j) {
    if (!j.is_object() || !j.contains("kind") || !j.contains("sub") || !j.contains("scopes") || !j.contains("exp"))
        return std::nullopt;
    TokenClaims c;
    const auto kind = j["kind"].get<std::string>();
    if (kind == "participant")
        c.kind = TokenKind::Participant;
    else if (kind == "management")
        c.kind = TokenKind::Management;
    else
        return std::nullopt;
    c.subject = j["sub"].get<std::string>();
    c.expires_at = Timestamp{j["exp"].get<std::int64_t>()};
    for (const auto& s : j["scopes"]) {
        auto scope = parse_scope(s.get<std::string>());
        if (!scope) return std::nullopt;
        c.scopes.push_back(*scope);
    }
    return c;
}

}  // namespace

std::string_view to_string(Permission p) {
    switch (p) {
        case Permission::ReadResponses: return "read-responses";
        case Permission::ManageConfig: return "manage-config";
        case Permission::Admin: return "admin";
    }
    return "?";
}

std::optional<Permission> parse_permission(std::string_view s) {
    if (s == "read-responses") return Permission::ReadResponses;
    if (s == "manage-config") return Permission::ManageConfig;
    if (s == "admin") return Permission::Admin;
    return std::nullopt;
}

std::string format_scope(const Scope& s) { return s.resource + ":" + std::string(to_string(s.permission)); }

std::optional<Scope> parse_scope(std::string_view s) {
    auto colon = s.rfind(':');
    if (colon == std::string_view::npos) return std::nullopt;
    auto permission = parse_permission(s.substr(colon + 1));
    auto resource = s.substr(0, colon);
    if (!permission) return std::nullopt;
    if (resource != "global" && (resource.substr(0, 6) != "study:" || resource.size() == 6)) return std::nullopt;
    return Scope{std::string(resource), *permission};
}

bool covers(const Scope& held, const Scope& required) {
    return held.permission == required.permission &&
           (held.resource == "global" || held.resource == required.resource);
}

bool covers(const std::vector<Scope>& held, const Scope& required) {
    for (const auto& h : held)
        if (covers(h, required)) return true;
    return false;
}

TokenSigner::TokenSigner(std::string_view secret) : key_(crypto_auth_KEYBYTES) {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
    crypto_generichash(key_.data(), key_.size(), reinterpret_cast<const unsigned char*>(secret.data()),
                       secret.size(), nullptr, 0);
}

std::string TokenSigner::issue(const TokenClaims& claims) const {
    if (claims.kind == TokenKind::Participant && !claims.scopes.empty())
        throw std::invalid_argument("participant tokens carry no scopes");
    const auto body = encode_claims(claims).dump();
    const auto payload = b64(reinterpret_cast<const unsigned char*>(body.data()), body.size());
    unsigned char tag[crypto_auth_BYTES];
    crypto_auth(tag, reinterpret_cast<const unsigned char*>(payload.data()), payload.size(), key_.data());
    return payload + "." + b64(tag, sizeof tag);
}

std::optional<TokenClaims> TokenSigner::verify(std::string_view token, Timestamp now) const {
    auto dot = token.find('.');
    if (dot == std::string_view::npos) return std::nullopt;
    auto payload = token.substr(0, dot);
    auto tag = unb64(token.substr(dot + 1));
    if (!tag || tag->size() != crypto_auth_BYTES) return std::nullopt;
    if (crypto_auth_verify(tag->data(), reinterpret_cast<const unsigned char*>(payload.data()), payload.size(),
                           key_.data()) != 0)
        return std::nullopt;
    auto raw = unb64(payload);
    if (!raw) return std::nullopt;
    auto doc = Json::parse(raw->begin(), raw->end(), nullptr, false);
    if (doc.is_discarded()) return std::nullopt;
    std::optional<TokenClaims> claims;
    try {
        claims = decode_claims(doc);
    } catch (const Json::exception&) {
        return std::nullopt;
    }
    if (!claims || claims->expires_at <= now) return std::nullopt;
    if (claims->kind == TokenKind::Participant && !claims->scopes.empty()) return std::nullopt;
    return claims;
}

}  // namespace caselet::api
