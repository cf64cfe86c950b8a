#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mpo/tensor.hpp"

namespace mpo {

enum class Split { train, test };

const char* to_string(Split s);

/// Immutable labelled image set, pixels in [0, 1].
struct Dataset {
    Tensor images;
    std::vector<int> labels;
    int num_classes = 0;
    Split split = Split::train;
    std::string name;
    std::vector<std::string> warnings;  // non-fatal load diagnostics

    int size() const { return images.n; }
    Shape3 shape() const { return images.shape; }
    Batch batch(std::span<const std::size_t> indices) const;
    Batch all() const;
    void validate() const;
};

/// IDX image/label pair (FashionMNIST/MNIST layout). Gzip-compressed files
/// are decompressed transparently. Errors: ParseError with kind bad_magic,
/// truncated or count_mismatch.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, Split split = Split::train);

/// CIFAR-10 binary batches: 3073-byte records (label, then 3x32x32 bytes).
/// Errors: ParseError bad_length / bad_label. An empty file gives N = 0 and
/// a warning.
Dataset load_cifar10(const std::vector<std::string>& paths, Split split = Split::train);

/// Two 1-channel classes: a Gaussian blob near the upper-left (class 0) or
/// lower-right (class 1) of an image_size x image_size canvas, jittered
/// and with additive noise. Balanced and deterministic per seed.
Dataset make_synthetic(int n_per_class, int image_size, std::uint64_t seed, Split split = Split::train);

/// Area-average every image to (h, w).
Dataset downsample(const Dataset& ds, int h, int w);

/// Keep only the listed classes, relabelled 0..k-1 in the given order.
Dataset select_classes(const Dataset& ds, const std::vector<int>& classes);

/// Seeded subset of min(n, size) examples, in shuffled order.
Dataset take(const Dataset& ds, int n, std::uint64_t seed);

/// Shuffles each epoch with a seeded permutation; the last partial batch
/// of an epoch is dropped unless the dataset is smaller than one batch.
class Batcher {
public:
    Batcher(const Dataset& ds, int batch_size, std::uint64_t seed);
    Batch next();

private:
    void reshuffle();

    const Dataset& ds_;
    int batch_size_;
    std::uint64_t state_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

}  // namespace mpo
