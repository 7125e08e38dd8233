#include "synthval/common.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace synthval {

std::string to_hex(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw MissingArtifactError("cannot open file: " + path.string());
    }
    in.seekg(0, std::ios::end);
    const auto n = static_cast<size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(n);
    if (n > 0) {
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    }
    if (!in) {
        throw std::runtime_error("short read: " + path.string());
    }
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const void* data, size_t n) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write file: " + path.string());
    }
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) {
        throw std::runtime_error("short write: " + path.string());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    write_file_bytes(path, text.data(), text.size());
}

std::string file_fingerprint(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return to_hex(fnv1a64(bytes.data(), bytes.size()));
}

std::string bytes_fingerprint(const std::vector<unsigned char>& bytes) {
    return to_hex(fnv1a64(bytes.data(), bytes.size()));
}

std::string hardware_descriptor() {
    std::string model = "unknown cpu";
    std::ifstream in("/proc/cpuinfo");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("model name", 0) == 0) {
            auto pos = line.find(':');
            if (pos != std::string::npos) {
                model = line.substr(pos + 1);
                while (!model.empty() && model.front() == ' ') model.erase(model.begin());
            }
            break;
        }
    }
    std::ostringstream os;
    os << model << ", " << std::thread::hardware_concurrency() << " logical cores";
    return os.str();
}

}  // namespace synthval
