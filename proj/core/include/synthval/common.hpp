#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace synthval {

// Error categories map to CLI exit codes; see tools/main.cpp.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// FNV-1a 64-bit over a byte span. Used for content fingerprints and
/// for deriving named RNG substreams; not cryptographic.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t seed = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), seed);
}

std::string to_hex(uint64_t v);

/// Fingerprint of a file's bytes as a 16-char hex string.
std::string file_fingerprint(const std::filesystem::path& path);
std::string bytes_fingerprint(const std::vector<unsigned char>& bytes);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const void* data, size_t n);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// One line describing the host CPU (model name + logical core count),
/// recorded in throughput reports.
std::string hardware_descriptor();

}  // namespace synthval
