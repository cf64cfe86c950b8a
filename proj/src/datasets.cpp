#include "mpo/datasets.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "mpo/error.hpp"
#include "mpo/image_io.hpp"
#include "mpo/rng.hpp"

namespace mpo {

const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

Batch Dataset::batch(std::span<const std::size_t> indices) const {
    Batch b;
    b.inputs = Tensor(static_cast<int>(indices.size()), images.shape);
    const std::size_t ss = images.sample_size();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t k = indices[i];
        if (k >= static_cast<std::size_t>(size())) throw InputError("dataset index out of range");
        std::copy_n(images.data.begin() + k * ss, ss, b.inputs.data.begin() + i * ss);
        b.labels.push_back(labels[k]);
    }
    return b;
}

Batch Dataset::all() const { return {images, labels}; }

void Dataset::validate() const {
    if (static_cast<std::size_t>(images.n) != labels.size()) throw InputError("image and label counts differ");
    for (int y : labels)
        if (y < 0 || y >= num_classes) throw InputError("label out of range");
    for (double v : images.data)
        if (!(v >= 0.0 && v <= 1.0)) throw InputError("pixel outside [0, 1]");
}

namespace {

std::vector<unsigned char> read_maybe_gzip(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open '" + path + "'");
    std::vector<unsigned char> out;
    unsigned char buf[1 << 16];
    int got;
    while ((got = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + got);
    int err = Z_OK;
    const char* msg = gzerror(f, &err);
    const std::string what = msg ? msg : "";
    gzclose(f);
    if (got < 0 || (err != Z_OK && err != Z_STREAM_END))
        throw ParseError(ParseError::Kind::truncated, "cannot decompress '" + path + "': " + what);
    return out;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

constexpr std::uint32_t kIdxImages = 2051;
constexpr std::uint32_t kIdxLabels = 2049;

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path, Split split) {
    using K = ParseError::Kind;
    const auto img = read_maybe_gzip(images_path);
    const auto lab = read_maybe_gzip(labels_path);
    if (img.size() < 16) throw ParseError(K::truncated, images_path + ": header truncated");
    if (lab.size() < 8) throw ParseError(K::truncated, labels_path + ": header truncated");
    if (be32(img, 0) != kIdxImages)
        throw ParseError(K::bad_magic, images_path + ": magic " + std::to_string(be32(img, 0)) + ", expected 2051");
    if (be32(lab, 0) != kIdxLabels)
        throw ParseError(K::bad_magic, labels_path + ": magic " + std::to_string(be32(lab, 0)) + ", expected 2049");
    const std::uint32_t n = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
    const std::uint32_t nl = be32(lab, 4);
    if (n != nl)
        throw ParseError(K::count_mismatch,
                         "IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(nl) + " labels");
    const std::size_t px = static_cast<std::size_t>(rows) * cols;
    if (img.size() < 16 + n * px) throw ParseError(K::truncated, images_path + ": pixel data truncated");
    if (lab.size() < 8 + std::size_t{n}) throw ParseError(K::truncated, labels_path + ": label data truncated");

    Dataset ds;
    ds.images = Tensor(static_cast<int>(n), {1, static_cast<int>(rows), static_cast<int>(cols)});
    for (std::size_t i = 0; i < n * px; ++i) ds.images.data[i] = img[16 + i] / 255.0;
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        ds.labels.push_back(lab[8 + i]);
        max_label = std::max(max_label, static_cast<int>(lab[8 + i]));
    }
    ds.num_classes = std::max(10, max_label + 1);
    ds.split = split;
    ds.name = "idx";
    return ds;
}

Dataset load_cifar10(const std::vector<std::string>& paths, Split split) {
    using K = ParseError::Kind;
    constexpr std::size_t kRecord = 3073;
    Dataset ds;
    ds.num_classes = 10;
    ds.split = split;
    ds.name = "cifar10";
    std::vector<unsigned char> all;
    for (const auto& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open '" + path + "'");
        std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (bytes.size() % kRecord != 0)
            throw ParseError(K::bad_length, path + ": length " + std::to_string(bytes.size()) +
                                                " is not a multiple of 3073");
        if (bytes.empty()) ds.warnings.push_back(path + ": empty file, no records");
        all.insert(all.end(), bytes.begin(), bytes.end());
    }
    const int n = static_cast<int>(all.size() / kRecord);
    ds.images = Tensor(n, {3, 32, 32});
    for (int i = 0; i < n; ++i) {
        const unsigned char* rec = all.data() + i * kRecord;
        if (rec[0] > 9) throw ParseError(K::bad_label, "CIFAR-10 record " + std::to_string(i) + " has label " +
                                                           std::to_string(rec[0]));
        ds.labels.push_back(rec[0]);
        for (int j = 0; j < 3072; ++j) ds.images.sample(i)[j] = rec[1 + j] / 255.0;
    }
    return ds;
}

Dataset make_synthetic(int n_per_class, int image_size, std::uint64_t seed, Split split) {
    if (n_per_class < 1) throw InputError("n_per_class must be at least 1");
    if (image_size < 4) throw InputError("synthetic images must be at least 4x4");
    Rng rng(seed);
    Dataset ds;
    ds.num_classes = 2;
    ds.split = split;
    ds.name = "synthetic";
    ds.images = Tensor(2 * n_per_class, {1, image_size, image_size});
    const double s = image_size;
    const double sigma = s / 7.0;
    for (int i = 0; i < 2 * n_per_class; ++i) {
        const int label = i % 2;
        const double base = label == 0 ? s * 0.3 : s * 0.7;
        const double cy = base + rng.uniform(-0.08, 0.08) * s;
        const double cx = base + rng.uniform(-0.08, 0.08) * s;
        const double amp = rng.uniform(0.6, 1.0);
        double* px = ds.images.sample(i);
        for (int r = 0; r < image_size; ++r)
            for (int c = 0; c < image_size; ++c) {
                const double d2 = (r + 0.5 - cy) * (r + 0.5 - cy) + (c + 0.5 - cx) * (c + 0.5 - cx);
                const double v = amp * std::exp(-d2 / (2 * sigma * sigma)) + 0.1 * rng.normal() + 0.1;
                px[r * image_size + c] = std::clamp(v, 0.0, 1.0);
            }
        ds.labels.push_back(label);
    }
    return ds;
}

Dataset downsample(const Dataset& ds, int h, int w) {
    Dataset out = ds;
    out.images = Tensor(ds.size(), {ds.shape().c, h, w});
    const Shape3 s = ds.shape();
    for (int i = 0; i < ds.size(); ++i)
        for (int c = 0; c < s.c; ++c) {
            Grid g(s.w, s.h);
            std::copy_n(ds.images.sample(i) + c * s.h * s.w, s.h * s.w, g.values.begin());
            const Grid r = area_resample(g, w, h);
            std::copy(r.values.begin(), r.values.end(), out.images.sample(i) + c * h * w);
        }
    return out;
}

Dataset select_classes(const Dataset& ds, const std::vector<int>& classes) {
    std::vector<std::size_t> keep;
    std::vector<int> relabel;
    for (int i = 0; i < ds.size(); ++i) {
        auto it = std::find(classes.begin(), classes.end(), ds.labels[i]);
        if (it == classes.end()) continue;
        keep.push_back(i);
        relabel.push_back(static_cast<int>(it - classes.begin()));
    }
    Dataset out;
    Batch b = ds.batch(keep);
    out.images = std::move(b.inputs);
    out.labels = std::move(relabel);
    out.num_classes = static_cast<int>(classes.size());
    out.split = ds.split;
    out.name = ds.name;
    return out;
}

Dataset take(const Dataset& ds, int n, std::uint64_t seed) {
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx.begin(), idx.end());
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::max(n, 0))));
    Dataset out = ds;
    Batch b = ds.batch(idx);
    out.images = std::move(b.inputs);
    out.labels = std::move(b.labels);
    return out;
}

Batcher::Batcher(const Dataset& ds, int batch_size, std::uint64_t seed)
    : ds_(ds), batch_size_(batch_size), state_(seed), order_(ds.size()) {
    if (batch_size < 1) throw InputError("batch size must be at least 1");
    if (ds.size() < 1) throw InputError("cannot batch an empty dataset");
    std::iota(order_.begin(), order_.end(), 0);
    reshuffle();
}

void Batcher::reshuffle() {
    Rng rng(state_++);
    rng.shuffle(order_.begin(), order_.end());
    pos_ = 0;
}

Batch Batcher::next() {
    const std::size_t bs = std::min<std::size_t>(batch_size_, order_.size());
    if (pos_ + bs > order_.size()) reshuffle();
    std::span<const std::size_t> idx(order_.data() + pos_, bs);
    pos_ += bs;
    return ds_.batch(idx);
}

}  // namespace mpo
