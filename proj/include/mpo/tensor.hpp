#pragma once

#include <cstddef>
#include <vector>

namespace mpo {

using Vec = std::vector<double>;

/// Per-sample shape (channels, height, width).
struct Shape3 {
    int c = 0, h = 0, w = 0;

    std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
    friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Dense NCHW tensor of doubles.
struct Tensor {
    int n = 0;
    Shape3 shape;
    Vec data;

    Tensor() = default;
    Tensor(int n_, Shape3 s) : n(n_), shape(s), data(static_cast<std::size_t>(n_) * s.size(), 0.0) {}

    std::size_t sample_size() const { return shape.size(); }
    double* sample(int i) { return data.data() + i * sample_size(); }
    const double* sample(int i) const { return data.data() + i * sample_size(); }
};

/// Inputs plus integer labels. Labels must lie in [0, num_classes).
struct Batch {
    Tensor inputs;
    std::vector<int> labels;

    int size() const { return inputs.n; }
};

}  // namespace mpo
