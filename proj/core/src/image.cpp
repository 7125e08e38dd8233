#include "synthval/image.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "synthval/common.hpp"

namespace synthval::img {

namespace {

unsigned char quantize(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<unsigned char>(std::lround(c * 255.0f));
}

std::vector<float> read_pnm(const std::filesystem::path& path, const char* magic, int channels,
                            int& h, int& w) {
    const std::vector<unsigned char> bytes = read_file_bytes(path);
    std::string header(bytes.begin(), bytes.begin() + std::min<size_t>(bytes.size(), 64));
    std::istringstream hs(header);
    std::string m;
    int width = 0, height = 0, maxval = 0;
    hs >> m >> width >> height >> maxval;
    if (m != magic || width <= 0 || height <= 0 || maxval != 255 || !hs) {
        throw std::runtime_error("not a " + std::string(magic) + " image: " + path.string());
    }
    const size_t data_start = static_cast<size_t>(hs.tellg()) + 1;  // single whitespace byte
    const size_t need = static_cast<size_t>(width) * height * channels;
    if (bytes.size() < data_start + need) {
        throw std::runtime_error("truncated image: " + path.string());
    }
    std::vector<float> out(need);
    for (size_t i = 0; i < need; ++i) {
        out[i] = static_cast<float>(bytes[data_start + i]) / 255.0f;
    }
    h = height;
    w = width;
    return out;
}

void write_pnm(const std::filesystem::path& path, const char* magic, int channels,
               const std::vector<float>& pix, int h, int w) {
    if (pix.size() != static_cast<size_t>(h) * w * channels) {
        throw std::invalid_argument("image buffer does not match " + std::to_string(h) + "x" +
                                    std::to_string(w));
    }
    std::string blob = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) +
                       "\n255\n";
    blob.reserve(blob.size() + pix.size());
    for (float v : pix) blob.push_back(static_cast<char>(quantize(v)));
    write_file_bytes(path, blob.data(), blob.size());
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const std::vector<float>& rgb, int h, int w) {
    write_pnm(path, "P6", 3, rgb, h, w);
}

std::vector<float> read_ppm(const std::filesystem::path& path, int& h, int& w) {
    return read_pnm(path, "P6", 3, h, w);
}

void write_pgm(const std::filesystem::path& path, const std::vector<float>& gray, int h, int w) {
    write_pnm(path, "P5", 1, gray, h, w);
}

std::vector<float> read_pgm(const std::filesystem::path& path, int& h, int& w) {
    return read_pnm(path, "P5", 1, h, w);
}

}  // namespace synthval::img
