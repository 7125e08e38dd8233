#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "synthval/nn.hpp"
#include "synthval/tensor.hpp"

namespace synthval::ckpt {

/// A flat, deterministic binary container of named arrays. Entries are stored
/// sorted by name, so a load/save round trip reproduces the file byte for
/// byte. Only float32 and raw-byte entries exist; strings ride as bytes.
class Checkpoint {
public:
    static constexpr char kMagic[8] = {'S', 'V', 'C', 'K', 'P', 'T', '0', '1'};

    void put_f32(const std::string& name, const Shape& shape, std::span<const float> data);
    void put_tensor(const std::string& name, const Tensor& t);
    void put_string(const std::string& name, const std::string& s);

    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    std::vector<std::string> names() const;
    const Shape& shape(const std::string& name) const;
    std::vector<float> f32(const std::string& name) const;
    std::string str(const std::string& name) const;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

private:
    struct Entry {
        uint8_t dtype = 0;  // 0 = f32, 1 = u8
        Shape shape;
        std::vector<uint8_t> bytes;
    };
    const Entry& entry(const std::string& name) const;

    std::map<std::string, Entry> entries_;
};

/// Writes a module's full persistent state (parameters and buffers) plus
/// string metadata under reserved prefixes.
void save_module_state(Checkpoint& c, const nn::Module& module);
void save_module(const std::filesystem::path& path, const nn::Module& module,
                 const std::map<std::string, std::string>& meta = {});

/// Strict restore: the checkpoint must carry exactly the module's state
/// names with matching shapes.
void load_module_state(const Checkpoint& c, nn::Module& module);
void load_module(const std::filesystem::path& path, nn::Module& module);

}  // namespace synthval::ckpt
