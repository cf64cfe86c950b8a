#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "mpo/error.hpp"
#include "mpo/patterns.hpp"

using namespace mpo;
namespace fs = std::filesystem;

namespace {

Grid disc(int size, double cx, double cy, double radius) {
    Grid g(size, size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) g.at(r, c) = std::hypot(c + 0.5 - cx, r + 0.5 - cy) <= radius ? 1.0 : 0.0;
    return g;
}

// Supersampling oracle: each source pixel is split into `sub` x `sub`
// points, each point is assigned to the output pixel containing it.
Grid supersample_oracle(const Grid& src, int tw, int th, int sub) {
    Grid sum(tw, th), cnt(tw, th);
    for (int r = 0; r < src.height; ++r)
        for (int c = 0; c < src.width; ++c)
            for (int i = 0; i < sub; ++i)
                for (int j = 0; j < sub; ++j) {
                    const double y = r + (i + 0.5) / sub, x = c + (j + 0.5) / sub;
                    const int orow = static_cast<int>(y * th / src.height);
                    const int ocol = static_cast<int>(x * tw / src.width);
                    sum.at(orow, ocol) += src.at(r, c);
                    cnt.at(orow, ocol) += 1;
                }
    for (std::size_t i = 0; i < sum.values.size(); ++i) sum.values[i] /= cnt.values[i];
    return sum;
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("mpo_patterns_" + name); }

}  // namespace

TEST(Downsample, BinaryAtTargetSizeUnchanged) {
    const Mask src = gen_random_mask(9, 7, 0.5, 3);
    Grid g(9, 7);
    for (std::size_t i = 0; i < src.size(); ++i) g.values[i] = src.pixels[i];
    EXPECT_EQ(downsample_threshold(g, 9, 7).pixels, src.pixels);
}

TEST(Downsample, HalfDarkBlockIsBlack) {
    Grid g(2, 2);
    g.values = {0, 0, 1, 1};
    const Mask m = downsample_threshold(g, 1, 1);
    EXPECT_TRUE(m.black(0, 0));
    g.values = {0, 0, 0, 1};
    EXPECT_FALSE(downsample_threshold(g, 1, 1).black(0, 0));
}

TEST(Downsample, DiscMatchesBlockMeanOracle) {
    const Grid g = disc(100, 47.3, 52.1, 30.7);
    const Mask m = downsample_threshold(g, 50, 50);
    for (int r = 0; r < 50; ++r)
        for (int c = 0; c < 50; ++c) {
            const double mean =
                (g.at(2 * r, 2 * c) + g.at(2 * r, 2 * c + 1) + g.at(2 * r + 1, 2 * c) + g.at(2 * r + 1, 2 * c + 1)) / 4;
            EXPECT_EQ(m.black(r, c), mean >= 0.5) << r << "," << c;
        }
}

TEST(Downsample, NonIntegerRatioMatchesSupersampling) {
    Grid g(7, 11);
    for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = std::fmod(i * 0.37, 1.0);
    const Grid got = area_resample(g, 3, 4);
    // Boundaries fall on multiples of 1/3 and 1/4 of a source pixel, so a
    // 12x12 split per source pixel is exact.
    const Grid want = supersample_oracle(g, 3, 4, 12);
    for (std::size_t i = 0; i < got.values.size(); ++i) EXPECT_NEAR(got.values[i], want.values[i], 1e-12);
}

TEST(Downsample, SolidImagesPreserved) {
    for (double v : {0.0, 1.0}) {
        const Mask m = downsample_threshold(Grid(37, 23, v), 10, 6);
        for (auto p : m.pixels) EXPECT_EQ(p, v == 1.0 ? 1 : 0);
    }
}

TEST(Downsample, EmptyImageRejected) { EXPECT_THROW(downsample_threshold(Grid(), 2, 2), InputError); }

TEST(CellSets, AllBlackThreeByThree) {
    const CellSets s = derive_cell_sets(Mask(3, 3, 1));
    EXPECT_EQ(s.cells.size(), 9u);
    EXPECT_EQ(s.p_minus().size(), 9u);
    EXPECT_TRUE(s.p_plus().empty());
    EXPECT_EQ(s.trainable_count(), 8u);
    EXPECT_FALSE(s.cells[4].trainable);
}

TEST(CellSets, CheckerboardAllTrainable) {
    const CellSets s = derive_cell_sets(checkerboard(8, 6));
    EXPECT_EQ(s.trainable_count(), 48u);
}

namespace {

// Independent scan: a pixel is prunable iff it is not on the border and no
// 8-neighbour differs from it.
std::set<std::pair<int, int>> brute_force_pruned(const Mask& m) {
    std::set<std::pair<int, int>> out;
    for (int r = 1; r + 1 < m.height; ++r)
        for (int c = 1; c + 1 < m.width; ++c) {
            int differing = 0;
            for (int dr : {-1, 0, 1})
                for (int dc : {-1, 0, 1}) differing += m.black(r + dr, c + dc) != m.black(r, c);
            if (differing == 0) out.insert({r, c});
        }
    return out;
}

std::set<std::pair<int, int>> pruned(const CellSets& s) {
    std::set<std::pair<int, int>> out;
    for (const auto& c : s.cells)
        if (!c.trainable) out.insert({c.row, c.col});
    return out;
}

}  // namespace

TEST(CellSets, WhitePixelInBlackField) {
    for (int size : {5, 9}) {
        Mask m(size, size, 1);
        const int mid = size / 2;
        m.set(mid, mid, false);
        const CellSets s = derive_cell_sets(m);
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) EXPECT_TRUE(s.cells[(mid + dr) * size + mid + dc].trainable);
        const auto want = brute_force_pruned(m);
        EXPECT_EQ(pruned(s), want);
        if (size == 5) EXPECT_TRUE(want.empty());
        if (size == 9) EXPECT_EQ(want.size(), 49u - 9u);
    }
}

TEST(CellSets, RandomMasksMatchBruteForceAndKeepBoundaries) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Mask m = gen_random_mask(3 + seed % 9, 2 + seed % 7, 0.15 + 0.02 * seed, seed);
        const CellSets s = derive_cell_sets(m);
        EXPECT_EQ(pruned(s), brute_force_pruned(m));
        EXPECT_EQ(s.p_minus().size() + s.p_plus().size(), m.size());
        EXPECT_EQ(s.p_minus().size(), m.count_black());
        for (const Cell& c : s.cells) {
            bool touches_other = false;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int r = c.row + dr, cc = c.col + dc;
                    if (r >= 0 && cc >= 0 && r < m.height && cc < m.width && m.black(r, cc) != c.black)
                        touches_other = true;
                }
            if (touches_other) EXPECT_TRUE(c.trainable);
        }
        // Pure: a second call gives the same answer.
        EXPECT_EQ(pruned(derive_cell_sets(m)), pruned(s));
    }
}

TEST(RandomMask, Extremes) {
    EXPECT_EQ(gen_random_mask(30, 30, 0.0, 1).count_black(), 0u);
    EXPECT_EQ(gen_random_mask(30, 30, 1.0, 1).count_black(), 900u);
    EXPECT_THROW(gen_random_mask(3, 3, 1.5, 1), InputError);
    EXPECT_THROW(gen_random_mask(3, 3, -0.1, 1), InputError);
}

TEST(RandomMask, HalfFillConcentrates) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const double f = gen_random_mask(30, 30, 0.5, seed).count_black() / 900.0;
        EXPECT_LE(std::abs(f - 0.5), 0.05) << seed;
    }
}

TEST(RandomMask, Reproducible) {
    EXPECT_EQ(gen_random_mask(13, 17, 0.3, 99).pixels, gen_random_mask(13, 17, 0.3, 99).pixels);
}

TEST(MaskIo, PgmRoundTrip) {
    const Mask m = gen_random_mask(11, 6, 0.4, 5);
    const auto path = temp_path("mask.pgm");
    save_mask_pgm(path, m);
    EXPECT_EQ(load_mask(path).pixels, m.pixels);
    fs::remove(path);
}

TEST(MaskIo, AsciiPgmAndPng) {
    const auto pgm = temp_path("ascii.pgm");
    {
        std::ofstream out(pgm);
        out << "P2\n# comment\n2 2\n15\n0 15\n15 0\n";
    }
    const Mask m = load_mask(pgm);
    EXPECT_EQ(m.pixels, (std::vector<std::uint8_t>{1, 0, 0, 1}));

    const auto png = temp_path("mask.png");
    RgbImage img{2, 1, {0, 0, 0, 255, 255, 255}};
    write_png(png, img);
    EXPECT_EQ(load_mask(png).pixels, (std::vector<std::uint8_t>{1, 0}));
    fs::remove(pgm);
    fs::remove(png);
}

TEST(MaskIo, CellSetsCsv) {
    const auto path = temp_path("cells.csv");
    write_cell_sets_csv(path, derive_cell_sets(Mask(3, 3, 1)));
    std::ifstream in(path);
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    EXPECT_EQ(header, "alpha,beta,class,trainable");
    EXPECT_EQ(first, "0,0,black,1");
    int rows = 1;
    for (std::string line; std::getline(in, line);) ++rows;
    EXPECT_EQ(rows, 9);
    fs::remove(path);
}

TEST(Patterns, CheckerboardWithBorder) {
    const Mask m = checkerboard_with_border(16, 16, 2);
    for (int i = 0; i < 16; ++i) {
        EXPECT_TRUE(m.black(0, i));
        EXPECT_TRUE(m.black(15, i));
        EXPECT_TRUE(m.black(i, 0));
    }
    EXPECT_FALSE(m.black(1, 2));
    EXPECT_TRUE(m.black(2, 2));
}
