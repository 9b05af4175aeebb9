#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace crg {

// Incremental SHA-256; hex() finalizes.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::span<const std::uint8_t> bytes);
    Sha256& update(std::string_view text);
    Sha256& update(const void* data, std::size_t size);
    std::string hex();

private:
    void* ctx_;
    bool finished_ = false;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<const std::uint8_t> bytes);

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws Error(InvalidArgument) on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace crg
