#include "common/digest.hpp"

#include <openssl/evp.h>

#include <vector>

#include "common/error.hpp"

namespace crg {

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr) != 1)
        fail(ErrorCode::Internal, "SHA-256 initialization failed");
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

Sha256& Sha256::update(const void* data, std::size_t size) {
    require(!finished_, ErrorCode::Internal, "SHA-256 context already finalized");
    if (size > 0) EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data, size);
    return *this;
}

Sha256& Sha256::update(std::span<const std::uint8_t> bytes) {
    return update(bytes.data(), bytes.size());
}

Sha256& Sha256::update(std::string_view text) { return update(text.data(), text.size()); }

std::string Sha256::hex() {
    require(!finished_, ErrorCode::Internal, "SHA-256 context already finalized");
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), md, &len);
    finished_ = true;
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[md[i] >> 4]);
        out.push_back(kHex[md[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(std::string_view bytes) { return Sha256().update(bytes).hex(); }

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    return Sha256().update(bytes).hex();
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                            static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string base64_decode(std::string_view text) {
    std::string clean;
    clean.reserve(text.size());
    for (char c : text)
        if (c != '\n' && c != '\r' && c != ' ') clean.push_back(c);
    require(clean.size() % 4 == 0, ErrorCode::InvalidArgument, "malformed base64 payload");
    if (clean.empty()) return {};
    std::string out(3 * clean.size() / 4, '\0');
    int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                            reinterpret_cast<const unsigned char*>(clean.data()),
                            static_cast<int>(clean.size()));
    require(n >= 0, ErrorCode::InvalidArgument, "malformed base64 payload");
    // EVP_DecodeBlock keeps the padding bytes as zeros.
    std::size_t pad = 0;
    if (clean.back() == '=') ++pad;
    if (clean.size() >= 2 && clean[clean.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

}  // namespace crg
