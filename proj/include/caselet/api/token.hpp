#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "caselet/expr/value.hpp"
#include "caselet/json.hpp"

namespace caselet::api {

using expr::Timestamp;

enum class Permission { ReadResponses, ManageConfig, Admin };

std::string_view to_string(Permission p);
std::optional<Permission> parse_permission(std::string_view s);

/// `resource` is "global" or "study:<key>".
struct Scope {
    std::string resource;
    Permission permission = Permission::ReadResponses;

    static Scope global(Permission p) { return {"global", p}; }
    static Scope study(const std::string& key, Permission p) { return {"study:" + key, p}; }

    friend bool operator==(const Scope&, const Scope&) = default;
};

/// "<resource>:<permission>", e.g. "study:flu:read-responses" or "global:admin".
std::string format_scope(const Scope& s);
std::optional<Scope> parse_scope(std::string_view s);

/// A held scope covers a requirement when the permissions are equal and the
/// held resource is global or the same study. Permissions do not imply each
/// other.
bool covers(const Scope& held, const Scope& required);
bool covers(const std::vector<Scope>& held, const Scope& required);

enum class TokenKind { Participant, Management };

struct TokenClaims {
    TokenKind kind = TokenKind::Participant;
    std::string subject;  // account id or management user id
    std::vector<Scope> scopes;
    Timestamp expires_at;

    friend bool operator==(const TokenClaims&, const TokenClaims&) = default;
};

/// Checks bearer tokens. Another implementation (for instance an external
/// identity provider) can stand in for the local signer.
class TokenVerifier {
public:
    virtual ~TokenVerifier() = default;
    /// Claims of a well-formed, authentic, unexpired token.
    virtual std::optional<TokenClaims> verify(std::string_view token, Timestamp now) const = 0;
};

/// HMAC-SHA-512-256 signed tokens: base64url(claims JSON) "." base64url(tag).
class TokenSigner : public TokenVerifier {
public:
    /// The key is derived from `secret` by hashing; any length works.
    explicit TokenSigner(std::string_view secret);

    /// Throws std::invalid_argument for a participant token with scopes.
    std::string issue(const TokenClaims& claims) const;
    std::optional<TokenClaims> verify(std::string_view token, Timestamp now) const override;

private:
    std::vector<unsigned char> key_;
};

}  // namespace caselet::api
