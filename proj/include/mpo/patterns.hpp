#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpo/image_io.hpp"
#include "mpo/manifold.hpp"

namespace mpo {

/// Binary target pattern. Black (1) cells should have low loss, white (0)
/// cells high loss.
struct Mask {
    int width = 0, height = 0;
    std::vector<std::uint8_t> pixels;  // row-major

    Mask() = default;
    Mask(int w, int h, std::uint8_t fill = 0);
    bool black(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col] != 0; }
    void set(int row, int col, bool black) { pixels[static_cast<std::size_t>(row) * width + col] = black ? 1 : 0; }
    std::size_t size() const { return pixels.size(); }
    std::size_t count_black() const;
    void validate() const;
};

/// One pattern pixel. Its plane coordinate is (alpha = col, beta = row).
struct Cell {
    int row = 0, col = 0;
    bool black = false;
    bool trainable = true;

    CellCoord coord() const { return {static_cast<double>(col), static_cast<double>(row)}; }
};

/// Black (P-) and white (P+) cell sets plus the trainable subset that
/// survives interior pruning. `cells` covers the whole mask in row-major
/// order, so K = cells.size().
struct CellSets {
    int width = 0, height = 0;
    std::vector<Cell> cells;

    std::vector<Cell> p_minus() const;
    std::vector<Cell> p_plus() const;
    std::vector<Cell> trainable(bool black) const;
    std::size_t trainable_count() const;
};

/// Area-average `darkness` down (or up) to the target size, then mark
/// black where the mean darkness is >= 0.5.
Mask downsample_threshold(const Grid& darkness, int target_w, int target_h);

/// Darkness = 1 - intensity of a PGM/PNG file, resampled and thresholded.
Mask load_mask(const std::string& path, int target_w, int target_h);
/// Load at native resolution.
Mask load_mask(const std::string& path);
/// Black pixels written as 0 (dark), white as 255.
void save_mask_pgm(const std::string& path, const Mask& mask);

/// A pixel is pruned from training when all 8 neighbours exist and share
/// its class; border pixels are always trainable.
CellSets derive_cell_sets(const Mask& mask);

/// i.i.d. Bernoulli(p) black pixels.
Mask gen_random_mask(int width, int height, double p, std::uint64_t seed);

/// Checkerboard of `tile`-sized squares, top-left black.
Mask checkerboard(int width, int height, int tile = 1);
/// Checkerboard interior surrounded by a one-pixel black frame.
Mask checkerboard_with_border(int width, int height, int tile);

/// CSV with header alpha,beta,class,trainable; class is "black"/"white".
void write_cell_sets_csv(const std::string& path, const CellSets& sets);

}  // namespace mpo
