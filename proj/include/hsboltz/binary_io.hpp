#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <complex>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "hsboltz/errors.hpp"

namespace hsboltz::binio {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
T to_le(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

template <class T>
void put(std::ostream& os, T v) {
    v = to_le(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ValidationError("binary file truncated");
    return to_le(v);
}

inline void put_magic(std::ostream& os, const char (&magic)[9]) { os.write(magic, 8); }

inline void expect_magic(std::istream& is, const char (&magic)[9]) {
    char buf[8];
    is.read(buf, 8);
    if (!is || std::string(buf, 8) != std::string(magic, 8))
        throw ValidationError(std::string("bad file magic, expected ") + magic);
}

inline void put_f64_array(std::ostream& os, const double* p, std::size_t n) {
    put<std::uint64_t>(os, n);
    for (std::size_t i = 0; i < n; ++i) put(os, p[i]);
}

inline std::vector<double> get_f64_array(std::istream& is) {
    auto n = get<std::uint64_t>(is);
    std::vector<double> v(n);
    for (auto& x : v) x = get<double>(is);
    return v;
}

}  // namespace hsboltz::binio
