#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace sfa {

std::string base64_encode(std::span<const std::uint8_t> bytes);

/// Incremental SHA-256; parts are length-prefixed so ("ab","c") != ("a","bc").
class Digest {
public:
    Digest();
    ~Digest();
    Digest(const Digest&) = delete;
    Digest& operator=(const Digest&) = delete;

    Digest& add(std::string_view part);
    Digest& add(std::span<const std::uint8_t> part);
    Digest& add(std::int64_t value);

    /// Lower-case hex. The digest cannot be extended afterwards.
    std::string hex();

private:
    void* ctx_;
};

std::string sha256_hex(std::string_view data);

}  // namespace sfa
