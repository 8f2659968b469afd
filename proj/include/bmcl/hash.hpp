#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bmcl/error.hpp"

namespace bmcl {

// 64-bit FNV-1a. Used for config/schema hashes and parameter digests; these
// are change detectors for reproducibility checks, not cryptographic seals.
class Fnv1a {
public:
    void update(const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }

    void update(const std::string& s) { update(s.data(), s.size()); }

    template <typename T>
    void update_pod(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        update(&v, sizeof(T));
    }

    uint64_t digest() const { return h_; }

private:
    uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline uint64_t fnv1a(const void* data, size_t n) {
    Fnv1a h;
    h.update(data, n);
    return h.digest();
}

inline uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

inline uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot open file for hashing: " + path);
    Fnv1a h;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h.update(buf, static_cast<size_t>(in.gcount()));
    }
    return h.digest();
}

}  // namespace bmcl
