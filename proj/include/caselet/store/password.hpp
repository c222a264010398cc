#pragma once

#include <cstddef>
#include <string>

namespace caselet::store {

/// Argon2id cost parameters.
struct PasswordParams {
    unsigned long long ops_limit;
    std::size_t mem_limit;

    static PasswordParams interactive();
    /// Cheapest allowed setting; for tests and simulation only.
    static PasswordParams minimum();
};

/// Encoded hash string with algorithm, parameters and salt.
std::string hash_password(const std::string& password, const PasswordParams& params);
bool verify_password(const std::string& encoded, const std::string& password);

/// Fills `n` bytes from the system CSPRNG, hex-encoded.
std::string random_hex(std::size_t n);

}  // namespace caselet::store
