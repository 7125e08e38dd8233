#pragma once

#include <filesystem>
#include <vector>

namespace synthval::img {

/// Images are float row-major [H,W,3] in [0,1]; masks are [H,W] in {0,1}.
/// Files are binary PPM (P6) and PGM (P5) with maxval 255.

void write_ppm(const std::filesystem::path& path, const std::vector<float>& rgb, int h, int w);
std::vector<float> read_ppm(const std::filesystem::path& path, int& h, int& w);

void write_pgm(const std::filesystem::path& path, const std::vector<float>& gray, int h, int w);
std::vector<float> read_pgm(const std::filesystem::path& path, int& h, int& w);

}  // namespace synthval::img
