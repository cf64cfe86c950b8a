#include "mpo/patterns.hpp"

#include <algorithm>
#include <fstream>

#include "mpo/error.hpp"
#include "mpo/rng.hpp"

namespace mpo {

Mask::Mask(int w, int h, std::uint8_t fill) : width(w), height(h) {
    if (w < 1 || h < 1) throw InputError("mask must be at least 1x1");
    pixels.assign(static_cast<std::size_t>(w) * h, fill ? 1 : 0);
}

std::size_t Mask::count_black() const { return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), 1)); }

void Mask::validate() const {
    if (width < 1 || height < 1 || pixels.size() != static_cast<std::size_t>(width) * height)
        throw InputError("mask dimensions do not match its pixels");
    for (auto p : pixels)
        if (p > 1) throw InputError("mask pixels must be 0 or 1");
}

std::vector<Cell> CellSets::p_minus() const {
    std::vector<Cell> out;
    std::copy_if(cells.begin(), cells.end(), std::back_inserter(out), [](const Cell& c) { return c.black; });
    return out;
}

std::vector<Cell> CellSets::p_plus() const {
    std::vector<Cell> out;
    std::copy_if(cells.begin(), cells.end(), std::back_inserter(out), [](const Cell& c) { return !c.black; });
    return out;
}

std::vector<Cell> CellSets::trainable(bool black) const {
    std::vector<Cell> out;
    std::copy_if(cells.begin(), cells.end(), std::back_inserter(out),
                 [&](const Cell& c) { return c.trainable && c.black == black; });
    return out;
}

std::size_t CellSets::trainable_count() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const Cell& c) { return c.trainable; }));
}

Mask downsample_threshold(const Grid& darkness, int target_w, int target_h) {
    if (darkness.empty()) throw InputError("empty image");
    const Grid g = area_resample(darkness, target_w, target_h);
    Mask m(target_w, target_h);
    // Tolerance absorbs rounding in the overlap weights so an exact tie stays black.
    for (std::size_t i = 0; i < g.values.size(); ++i) m.pixels[i] = g.values[i] >= 0.5 - 1e-12 ? 1 : 0;
    return m;
}

namespace {

Grid to_darkness(Grid g) {
    for (double& v : g.values) v = 1.0 - v;
    return g;
}

}  // namespace

Mask load_mask(const std::string& path, int target_w, int target_h) {
    return downsample_threshold(to_darkness(read_grayscale(path)), target_w, target_h);
}

Mask load_mask(const std::string& path) {
    const Grid g = read_grayscale(path);
    return downsample_threshold(to_darkness(g), g.width, g.height);
}

void save_mask_pgm(const std::string& path, const Mask& mask) {
    Grid g(mask.width, mask.height);
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) g.values[i] = mask.pixels[i] ? 0.0 : 1.0;
    write_pgm(path, g);
}

CellSets derive_cell_sets(const Mask& mask) {
    mask.validate();
    CellSets sets;
    sets.width = mask.width;
    sets.height = mask.height;
    sets.cells.reserve(mask.size());
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c) {
            Cell cell{r, c, mask.black(r, c), true};
            const bool interior = r > 0 && c > 0 && r + 1 < mask.height && c + 1 < mask.width;
            if (interior) {
                bool same = true;
                for (int dr = -1; dr <= 1 && same; ++dr)
                    for (int dc = -1; dc <= 1 && same; ++dc) same = mask.black(r + dr, c + dc) == cell.black;
                cell.trainable = !same;
            }
            sets.cells.push_back(cell);
        }
    return sets;
}

Mask gen_random_mask(int width, int height, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("fill probability must lie in [0, 1]");
    Mask m(width, height);
    Rng rng(seed);
    for (auto& px : m.pixels) px = rng.uniform() < p ? 1 : 0;
    return m;
}

Mask checkerboard(int width, int height, int tile) {
    if (tile < 1) throw InputError("tile must be positive");
    Mask m(width, height);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) m.set(r, c, ((r / tile) + (c / tile)) % 2 == 0);
    return m;
}

Mask checkerboard_with_border(int width, int height, int tile) {
    Mask m = checkerboard(width, height, tile);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c)
            if (r == 0 || c == 0 || r + 1 == height || c + 1 == width) m.set(r, c, true);
    return m;
}

void write_cell_sets_csv(const std::string& path, const CellSets& sets) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << "alpha,beta,class,trainable\n";
    for (const Cell& c : sets.cells)
        out << c.col << ',' << c.row << ',' << (c.black ? "black" : "white") << ',' << (c.trainable ? 1 : 0) << '\n';
}

}  // namespace mpo
