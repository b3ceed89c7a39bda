#pragma once

#include "hchain/error.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hchain {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s)
{
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline Bytes to_bytes(std::string_view s)
{
    return Bytes(s.begin(), s.end());
}

inline std::string to_string(ByteView b)
{
    return std::string(b.begin(), b.end());
}

std::string hex_encode(ByteView data);

// Accepts lowercase hex only, so every byte string has exactly one
// textual form. Throws DecodeError.
Bytes hex_decode(std::string_view text);

std::string base64_encode(ByteView data);

// Standard alphabet with padding; rejects non-canonical encodings
// (stray bits in the final quantum, missing padding, whitespace).
Bytes base64_decode(std::string_view text);

} // namespace hchain
