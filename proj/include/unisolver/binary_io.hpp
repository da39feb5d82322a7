#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace unisolver::io {

// Little-endian primitives shared by every on-disk format in the project.
// Serialization is byte-exact: write(read(x)) round-trips identically.

inline void write_bytes(std::ostream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw std::runtime_error("binary write failed");
}

inline void read_bytes(std::istream& in, void* data, std::size_t n) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n)) {
        throw std::runtime_error("binary read failed: truncated stream");
    }
}

template <typename T>
void write_le(std::ostream& out, T v) {
    static_assert(std::is_arithmetic_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (sizeof(T) > 1) {
        // Byte order of the host: this project targets little-endian
        // platforms; fail loudly elsewhere rather than write garbage.
        static const std::uint16_t probe = 1;
        static const bool little =
            *reinterpret_cast<const unsigned char*>(&probe) == 1;
        if (!little) throw std::runtime_error("big-endian host unsupported");
    }
    write_bytes(out, bytes, sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    static_assert(std::is_arithmetic_v<T>);
    unsigned char bytes[sizeof(T)];
    read_bytes(in, bytes, sizeof(T));
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    write_bytes(out, s.data(), s.size());
}

inline std::string read_string(std::istream& in) {
    const std::uint32_t n = read_le<std::uint32_t>(in);
    std::string s(n, '\0');
    if (n > 0) read_bytes(in, s.data(), n);
    return s;
}

inline void write_magic(std::ostream& out, const char magic[5]) {
    write_bytes(out, magic, 4);
}

inline void expect_magic(std::istream& in, const char magic[5],
                         const std::string& what) {
    char got[4];
    read_bytes(in, got, 4);
    if (std::memcmp(got, magic, 4) != 0) {
        throw std::runtime_error(what + ": bad magic, not a " + magic +
                                 " file");
    }
}

}  // namespace unisolver::io
