#pragma once

// Test-only helpers: finite differences and a loop-nest reference forward
// pass that shares no code with the library's Eigen/im2col path.

#include <algorithm>
#include <cmath>
#include <functional>
#include <variant>

#include "mpo/model_spec.hpp"
#include "mpo/network.hpp"
#include "mpo/rng.hpp"

namespace mpo::test {

inline Batch random_batch(const nn::ModelSpec& spec, int b, std::uint64_t seed) {
    Rng rng(seed);
    Batch batch;
    batch.inputs = Tensor(b, spec.input_shape());
    for (double& v : batch.inputs.data) v = rng.normal();
    for (int i = 0; i < b; ++i) batch.labels.push_back(static_cast<int>(rng.below(spec.num_classes())));
    return batch;
}

inline Vec random_vec(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Vec v(n);
    for (double& x : v) x = scale * rng.normal();
    return v;
}

/// Central differences of f at x.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, Vec x, double h = 1e-5) {
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2 * h);
    }
    return g;
}

/// max_i |a_i - b_i| / max(||a||_inf, ||b||_inf): relative to the gradient's
/// overall magnitude so near-zero components do not dominate.
inline double max_rel_err(const Vec& a, const Vec& b) {
    double diff = 0.0, scale = 1e-300;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    return diff / scale;
}

inline double rel_diff(double a, double b) {
    const double s = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / s;
}

/// Reference forward pass over a single sample, written as plain loop nests.
/// BN uses statistics over the given batch (train mode).
inline Tensor reference_forward(const nn::ModelSpec& spec, const Vec& w, const Tensor& input) {
    Tensor x = input;
    for (const auto& p : spec.plan()) {
        Tensor y(x.n, p.out);
        const double* prm = w.data() + p.offset;
        auto at = [](const Tensor& t, int n, int c, int h, int ww) -> double {
            return t.data[((static_cast<std::size_t>(n) * t.shape.c + c) * t.shape.h + h) * t.shape.w + ww];
        };
        auto ref = [](Tensor& t, int n, int c, int h, int ww) -> double& {
            return t.data[((static_cast<std::size_t>(n) * t.shape.c + c) * t.shape.h + h) * t.shape.w + ww];
        };
        if (auto* l = std::get_if<nn::Conv2D>(&p.layer)) {
            const int k = l->kernel;
            for (int n = 0; n < x.n; ++n)
                for (int o = 0; o < l->out_ch; ++o)
                    for (int oy = 0; oy < p.out.h; ++oy)
                        for (int ox = 0; ox < p.out.w; ++ox) {
                            double s = l->bias ? prm[l->out_ch * l->in_ch * k * k + o] : 0.0;
                            for (int c = 0; c < l->in_ch; ++c)
                                for (int ki = 0; ki < k; ++ki)
                                    for (int kj = 0; kj < k; ++kj) {
                                        const int iy = oy * l->stride - l->padding + ki;
                                        const int ix = ox * l->stride - l->padding + kj;
                                        if (iy < 0 || ix < 0 || iy >= p.in.h || ix >= p.in.w) continue;
                                        s += prm[((o * l->in_ch + c) * k + ki) * k + kj] * at(x, n, c, iy, ix);
                                    }
                            ref(y, n, o, oy, ox) = s;
                        }
        } else if (auto* l = std::get_if<nn::Dense>(&p.layer)) {
            for (int n = 0; n < x.n; ++n)
                for (int o = 0; o < l->out; ++o) {
                    double s = l->bias ? prm[l->out * l->in + o] : 0.0;
                    for (int i = 0; i < l->in; ++i) s += prm[o * l->in + i] * x.data[n * l->in + i];
                    y.data[n * l->out + o] = s;
                }
        } else if (std::holds_alternative<nn::ReLU>(p.layer)) {
            for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = std::max(0.0, x.data[i]);
        } else if (auto* l = std::get_if<nn::AdaptiveAvgPool>(&p.layer)) {
            for (int n = 0; n < x.n; ++n)
                for (int c = 0; c < p.in.c; ++c)
                    for (int oy = 0; oy < l->out_h; ++oy)
                        for (int ox = 0; ox < l->out_w; ++ox) {
                            const int y0 = static_cast<int>(std::floor(double(oy) * p.in.h / l->out_h));
                            const int y1 = static_cast<int>(std::ceil(double(oy + 1) * p.in.h / l->out_h));
                            const int x0 = static_cast<int>(std::floor(double(ox) * p.in.w / l->out_w));
                            const int x1 = static_cast<int>(std::ceil(double(ox + 1) * p.in.w / l->out_w));
                            double s = 0.0;
                            int cnt = 0;
                            for (int yy = y0; yy < y1; ++yy)
                                for (int xx = x0; xx < x1; ++xx, ++cnt) s += at(x, n, c, yy, xx);
                            ref(y, n, c, oy, ox) = s / cnt;
                        }
        } else if (auto* l = std::get_if<nn::BatchNorm>(&p.layer)) {
            for (int c = 0; c < l->channels; ++c) {
                double s = 0.0, ss = 0.0;
                int cnt = 0;
                for (int n = 0; n < x.n; ++n)
                    for (int h = 0; h < p.in.h; ++h)
                        for (int ww = 0; ww < p.in.w; ++ww, ++cnt) s += at(x, n, c, h, ww);
                const double mean = s / cnt;
                for (int n = 0; n < x.n; ++n)
                    for (int h = 0; h < p.in.h; ++h)
                        for (int ww = 0; ww < p.in.w; ++ww) ss += std::pow(at(x, n, c, h, ww) - mean, 2);
                const double var = ss / cnt;
                for (int n = 0; n < x.n; ++n)
                    for (int h = 0; h < p.in.h; ++h)
                        for (int ww = 0; ww < p.in.w; ++ww)
                            ref(y, n, c, h, ww) =
                                (prm[c] + 0.5) * (at(x, n, c, h, ww) - mean) / std::sqrt(var + 1e-5) +
                                prm[l->channels + c];
            }
        } else {
            y.data = x.data;
        }
        x = std::move(y);
    }
    return x;
}

}  // namespace mpo::test
