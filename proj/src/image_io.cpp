#include "mpo/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "mpo/error.hpp"

namespace mpo {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw DataError("cannot open '" + path + "'");
    return f;
}

// Next whitespace-separated PGM header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

int pgm_int(std::istream& in, const std::string& path) {
    const std::string tok = pgm_token(in);
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError(ParseError::Kind::bad_header, "bad PGM header value '" + tok + "' in " + path);
    }
}

}  // namespace

Grid read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    const std::string magic = pgm_token(in);
    if (magic != "P2" && magic != "P5") throw ParseError(ParseError::Kind::bad_magic, path + " is not a PGM file");
    const int w = pgm_int(in, path), h = pgm_int(in, path), maxval = pgm_int(in, path);
    if (maxval > 65535) throw ParseError(ParseError::Kind::bad_header, "PGM maxval too large in " + path);
    Grid g(w, h);
    if (magic == "P2") {
        for (double& v : g.values) {
            const std::string tok = pgm_token(in);
            if (tok.empty()) throw ParseError(ParseError::Kind::truncated, "truncated PGM " + path);
            v = std::clamp(std::stod(tok) / maxval, 0.0, 1.0);
        }
    } else {
        const int bytes = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> buf(g.values.size() * bytes);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() != static_cast<std::streamsize>(buf.size()))
            throw ParseError(ParseError::Kind::truncated, "truncated PGM " + path);
        for (std::size_t i = 0; i < g.values.size(); ++i) {
            const int raw = bytes == 2 ? (buf[2 * i] << 8) | buf[2 * i + 1] : buf[i];
            g.values[i] = std::min(1.0, static_cast<double>(raw) / maxval);
        }
    }
    return g;
}

Grid read_png_gray(const std::string& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw ParseError(ParseError::Kind::bad_header, "cannot read PNG " + path + ": " + img.message);
    img.format = PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw ParseError(ParseError::Kind::truncated, "cannot decode PNG " + path + ": " + img.message);
    }
    Grid g(static_cast<int>(img.width), static_cast<int>(img.height));
    for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = buf[i] / 255.0;
    return g;
}

Grid read_grayscale(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    char head[8] = {};
    in.read(head, 8);
    if (in.gcount() >= 2 && head[0] == 'P' && (head[1] == '2' || head[1] == '5')) return read_pgm(path);
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (in.gcount() == 8 && std::equal(head, head + 8, reinterpret_cast<const char*>(png_sig)))
        return read_png_gray(path);
    throw ParseError(ParseError::Kind::bad_magic, path + " is neither PGM nor PNG");
}

void write_pgm(const std::string& path, const Grid& intensity) {
    auto f = open_file(path, "wb");
    std::fprintf(f.get(), "P5\n%d %d\n255\n", intensity.width, intensity.height);
    std::vector<unsigned char> buf(intensity.values.size());
    for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] = static_cast<unsigned char>(std::lround(std::clamp(intensity.values[i], 0.0, 1.0) * 255.0));
    if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size()) throw DataError("write failed: " + path);
}

void write_png(const std::string& path, const RgbImage& image) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, image.rgb.data(), 0, nullptr))
        throw DataError("cannot write PNG " + path + ": " + img.message);
}

void write_ppm(const std::string& path, const RgbImage& image) {
    auto f = open_file(path, "wb");
    std::fprintf(f.get(), "P6\n%d %d\n255\n", image.width, image.height);
    if (std::fwrite(image.rgb.data(), 1, image.rgb.size(), f.get()) != image.rgb.size())
        throw DataError("write failed: " + path);
}

Grid area_resample(const Grid& src, int target_w, int target_h) {
    if (src.empty()) throw InputError("cannot resample an empty image");
    if (target_w < 1 || target_h < 1) throw InputError("resample target must be at least 1x1");
    if (target_w == src.width && target_h == src.height) return src;
    // Output pixel j spans source [j*W/tw, (j+1)*W/tw); weights are overlaps.
    auto weights = [](int src_n, int dst_n) {
        std::vector<std::vector<std::pair<int, double>>> out(dst_n);
        const double step = static_cast<double>(src_n) / dst_n;
        for (int j = 0; j < dst_n; ++j) {
            const double lo = j * step, hi = (j + 1) * step;
            for (int s = static_cast<int>(std::floor(lo)); s < src_n && s < hi; ++s) {
                const double ov = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
                if (ov > 0) out[j].push_back({s, ov});
            }
        }
        return out;
    };
    const auto wx = weights(src.width, target_w), wy = weights(src.height, target_h);
    const double area = (static_cast<double>(src.width) / target_w) * (static_cast<double>(src.height) / target_h);
    Grid dst(target_w, target_h);
    for (int r = 0; r < target_h; ++r)
        for (int c = 0; c < target_w; ++c) {
            double s = 0.0;
            for (auto [sy, ay] : wy[r])
                for (auto [sx, ax] : wx[c]) s += ay * ax * src.at(sy, sx);
            dst.at(r, c) = s / area;
        }
    return dst;
}

}  // namespace mpo
