#pragma once

#include <array>
#include <cstdio>
#include <memory>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include "biphoton/error.hpp"

namespace biphoton {

inline std::string sha1_hex(std::string_view data)
{
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1
        || EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1
        || EVP_DigestFinal_ex(ctx.get(), digest.data(), &length) != 1) {
        throw Error("SHA-1 digest failed");
    }
    std::string hex;
    hex.reserve(2 * length);
    for (unsigned int i = 0; i < length; ++i) {
        char byte[3];
        std::snprintf(byte, sizeof byte, "%02x", digest[i]);
        hex += byte;
    }
    return hex;
}

/// Content hash with git's blob framing: sha1("blob <size>\0" + content).
inline std::string git_blob_hash(std::string_view content)
{
    std::string framed = "blob " + std::to_string(content.size());
    framed.push_back('\0');
    framed.append(content);
    return sha1_hex(framed);
}

} // namespace biphoton
