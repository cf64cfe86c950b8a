#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mpo {

/// Row-major grid of reals; used for both grayscale intensities and
/// darkness maps.
struct Grid {
    int width = 0, height = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(int w, int h, double fill = 0.0) : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}
    double& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
    bool empty() const { return values.empty(); }
};

struct RgbImage {
    int width = 0, height = 0;
    std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major
};

/// Intensities normalized to [0, 1] (white = 1). PGM P2/P5 or PNG, decided
/// from the file's leading bytes; color PNGs are converted to gray.
Grid read_grayscale(const std::string& path);
Grid read_pgm(const std::string& path);
Grid read_png_gray(const std::string& path);

/// 8-bit binary PGM (P5); values clamped to [0, 1] and scaled to 255.
void write_pgm(const std::string& path, const Grid& intensity);
void write_png(const std::string& path, const RgbImage& image);
/// Binary PPM (P6), the fallback when PNG is not wanted.
void write_ppm(const std::string& path, const RgbImage& image);

/// Exact area-weighted box filter to (target_w, target_h).
Grid area_resample(const Grid& src, int target_w, int target_h);

}  // namespace mpo
