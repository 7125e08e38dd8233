#include "synthval/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "synthval/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace synthval::ckpt {

namespace {

template <typename T>
void write_pod(std::string& out, T v) {
    const char* p = reinterpret_cast<const char*>(&v);
    out.append(p, sizeof(T));
}

template <typename T>
T read_pod(const std::vector<unsigned char>& data, size_t& pos) {
    if (pos + sizeof(T) > data.size()) {
        throw std::runtime_error("checkpoint: truncated container");
    }
    T v;
    std::memcpy(&v, data.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace

void Checkpoint::put_f32(const std::string& name, const Shape& shape,
                         std::span<const float> data) {
    if (static_cast<int64_t>(data.size()) != numel(shape)) {
        throw std::invalid_argument("checkpoint: '" + name + "' data does not match shape " +
                                    shape_str(shape));
    }
    Entry e;
    e.dtype = 0;
    e.shape = shape;
    e.bytes.resize(data.size() * sizeof(float));
    std::memcpy(e.bytes.data(), data.data(), e.bytes.size());
    entries_[name] = std::move(e);
}

void Checkpoint::put_tensor(const std::string& name, const Tensor& t) {
    put_f32(name, t.shape(), t.values());
}

void Checkpoint::put_string(const std::string& name, const std::string& s) {
    Entry e;
    e.dtype = 1;
    e.shape = {std::max<int>(1, static_cast<int>(s.size()))};
    e.bytes.assign(s.begin(), s.end());
    entries_[name] = std::move(e);
}

std::vector<std::string> Checkpoint::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [n, e] : entries_) out.push_back(n);
    return out;
}

const Checkpoint::Entry& Checkpoint::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw MissingArtifactError("checkpoint entry '" + name + "' not found");
    }
    return it->second;
}

const Shape& Checkpoint::shape(const std::string& name) const { return entry(name).shape; }

std::vector<float> Checkpoint::f32(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.dtype != 0) {
        throw std::runtime_error("checkpoint: '" + name + "' is not a float32 entry");
    }
    std::vector<float> out(e.bytes.size() / sizeof(float));
    std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
    return out;
}

std::string Checkpoint::str(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.dtype != 1) {
        throw std::runtime_error("checkpoint: '" + name + "' is not a byte entry");
    }
    return std::string(e.bytes.begin(), e.bytes.end());
}

void Checkpoint::save(const std::filesystem::path& path) const {
    std::string header;
    header.append(kMagic, sizeof(kMagic));
    write_pod<uint32_t>(header, static_cast<uint32_t>(entries_.size()));

    std::string payload;
    for (const auto& [name, e] : entries_) {  // std::map: iteration sorted by name
        write_pod<uint32_t>(header, static_cast<uint32_t>(name.size()));
        header.append(name);
        write_pod<uint8_t>(header, e.dtype);
        write_pod<uint8_t>(header, static_cast<uint8_t>(e.shape.size()));
        for (int d : e.shape) write_pod<int32_t>(header, d);
        write_pod<uint64_t>(header, payload.size());
        write_pod<uint64_t>(header, e.bytes.size());
        payload.append(reinterpret_cast<const char*>(e.bytes.data()), e.bytes.size());
    }
    write_pod<uint64_t>(header, payload.size());
    const std::string blob = header + payload;
    write_file_bytes(path, blob.data(), blob.size());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    const std::vector<unsigned char> data = read_file_bytes(path);
    size_t pos = 0;
    if (data.size() < sizeof(kMagic) ||
        std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    }
    pos = sizeof(kMagic);
    const uint32_t n = read_pod<uint32_t>(data, pos);

    struct Dir {
        std::string name;
        uint8_t dtype;
        Shape shape;
        uint64_t offset, nbytes;
    };
    std::vector<Dir> dir(n);
    for (auto& d : dir) {
        const uint32_t len = read_pod<uint32_t>(data, pos);
        if (pos + len > data.size()) throw std::runtime_error("checkpoint: truncated name");
        d.name.assign(reinterpret_cast<const char*>(data.data()) + pos, len);
        pos += len;
        d.dtype = read_pod<uint8_t>(data, pos);
        const uint8_t ndim = read_pod<uint8_t>(data, pos);
        d.shape.resize(ndim);
        for (auto& dim : d.shape) dim = read_pod<int32_t>(data, pos);
        d.offset = read_pod<uint64_t>(data, pos);
        d.nbytes = read_pod<uint64_t>(data, pos);
    }
    const uint64_t payload_size = read_pod<uint64_t>(data, pos);
    if (pos + payload_size != data.size()) {
        throw std::runtime_error("checkpoint: payload size mismatch in " + path.string());
    }

    Checkpoint c;
    for (const auto& d : dir) {
        if (d.offset + d.nbytes > payload_size) {
            throw std::runtime_error("checkpoint: entry '" + d.name + "' out of bounds");
        }
        Entry e;
        e.dtype = d.dtype;
        e.shape = d.shape;
        const unsigned char* src = data.data() + pos + d.offset;
        e.bytes.assign(src, src + d.nbytes);
        c.entries_[d.name] = std::move(e);
    }
    return c;
}

void save_module_state(Checkpoint& c, const nn::Module& module) {
    for (const auto& [name, t] : module.named_state()) {
        c.put_tensor("state/" + name, t);
    }
}

void save_module(const std::filesystem::path& path, const nn::Module& module,
                 const std::map<std::string, std::string>& meta) {
    Checkpoint c;
    save_module_state(c, module);
    for (const auto& [k, v] : meta) c.put_string("meta/" + k, v);
    c.save(path);
}

void load_module_state(const Checkpoint& c, nn::Module& module) {
    size_t expected = 0;
    for (const std::string& n : c.names()) {
        if (n.rfind("state/", 0) == 0) ++expected;
    }
    auto state = module.named_state();
    if (state.size() != expected) {
        throw std::runtime_error("checkpoint: holds " + std::to_string(expected) +
                                 " state entries, module expects " +
                                 std::to_string(state.size()));
    }
    for (auto& [name, t] : state) {
        const std::string key = "state/" + name;
        if (!same_shape(c.shape(key), t.shape())) {
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file has " +
                                     shape_str(c.shape(key)) + ", module has " +
                                     shape_str(t.shape()));
        }
        const std::vector<float> vals = c.f32(key);
        std::copy(vals.begin(), vals.end(), t.node()->values.begin());
    }
}

void load_module(const std::filesystem::path& path, nn::Module& module) {
    load_module_state(Checkpoint::load(path), module);
}

}  // namespace synthval::ckpt
