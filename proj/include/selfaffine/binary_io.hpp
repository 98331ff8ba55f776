#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <istream>
#include <ostream>

#include "selfaffine/types.hpp"

namespace selfaffine::binio {

/// Little-endian scalar write.
template <class T>
void put(std::ostream& os, T v) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    os.write(bytes.data(), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    std::array<char, sizeof(T)> bytes{};
    if (!is.read(bytes.data(), sizeof(T))) throw Error(ErrorCode::Io, "truncated binary file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
}

}  // namespace selfaffine::binio
