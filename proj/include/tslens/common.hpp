#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace tslens {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// numerics
struct NonConvergence : Error { using Error::Error; };
struct SingularSystem : Error { using Error::Error; };

// synthgen
struct InvalidPeriod : Error { using Error::Error; };

// model
struct InvalidConfig : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct NotFitted : Error { using Error::Error; };

// similarity
struct DegenerateRepresentation : Error { using Error::Error; };
struct ZeroVector : Error { using Error::Error; };
struct SampleMismatch : Error { using Error::Error; };

// blocks
struct NotSquare : Error { using Error::Error; };
struct BlockOutOfRange : Error { using Error::Error; };

// probe
struct DegenerateClasses : Error { using Error::Error; };

// steer
struct ModelMismatch : Error { using Error::Error; };
struct EmptyClass : Error { using Error::Error; };
struct TokenOutOfRange : Error { using Error::Error; };

// io
struct IoFailure : Error { using Error::Error; };
struct BadMagic : Error { using Error::Error; };
struct TruncatedPayload : Error { using Error::Error; };

// 64-bit FNV-1a, used for model hashes and dataset checksums.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::vector<float>& v) {
    return fnv1a64(v.data(), v.size() * sizeof(float));
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace tslens
