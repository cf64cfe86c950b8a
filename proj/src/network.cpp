#include "mpo/network.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "mpo/error.hpp"
#include "mpo/rng.hpp"

namespace mpo::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

int pool_begin(int i, int in, int out) { return (i * in) / out; }
int pool_end(int i, int in, int out) { return ((i + 1) * in + out - 1) / out; }

// Unfold one sample into a (C*k*k) x (oh*ow) matrix.
void im2col(const double* x, Shape3 in, const Conv2D& l, Shape3 out, RowMat& cols) {
    const int k = l.kernel;
    cols.resize(static_cast<Eigen::Index>(in.c) * k * k, static_cast<Eigen::Index>(out.h) * out.w);
    for (int c = 0; c < in.c; ++c)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                double* row = cols.data() + ((c * k + ki) * k + kj) * cols.cols();
                for (int oy = 0; oy < out.h; ++oy) {
                    const int iy = oy * l.stride - l.padding + ki;
                    for (int ox = 0; ox < out.w; ++ox) {
                        const int ix = ox * l.stride - l.padding + kj;
                        row[oy * out.w + ox] =
                            (iy >= 0 && iy < in.h && ix >= 0 && ix < in.w) ? x[(c * in.h + iy) * in.w + ix] : 0.0;
                    }
                }
            }
}

void col2im(const RowMat& cols, Shape3 in, const Conv2D& l, Shape3 out, double* dx) {
    const int k = l.kernel;
    for (int c = 0; c < in.c; ++c)
        for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
                const double* row = cols.data() + ((c * k + ki) * k + kj) * cols.cols();
                for (int oy = 0; oy < out.h; ++oy) {
                    const int iy = oy * l.stride - l.padding + ki;
                    if (iy < 0 || iy >= in.h) continue;
                    for (int ox = 0; ox < out.w; ++ox) {
                        const int ix = ox * l.stride - l.padding + kj;
                        if (ix >= 0 && ix < in.w) dx[(c * in.h + iy) * in.w + ix] += row[oy * out.w + ox];
                    }
                }
            }
}

// Per-BN-layer cache needed by the backward pass.
struct BnCache {
    Vec xhat;     // normalized input, same layout as x
    Vec inv_std;  // per channel
    bool batch_stats = true;
};

void bn_apply(std::span<const double> z, std::span<const double> b, const Tensor& x, Mode mode, BnStats* stats,
              Tensor& y, BnCache* cache) {
    const int C = x.shape.c;
    if (static_cast<int>(z.size()) != C || static_cast<int>(b.size()) != C)
        throw InputError("batchnorm parameter size does not match channel count");
    const std::size_t hw = static_cast<std::size_t>(x.shape.h) * x.shape.w;
    const double m = static_cast<double>(x.n) * hw;
    y = Tensor(x.n, x.shape);
    if (cache) {
        cache->xhat.assign(x.data.size(), 0.0);
        cache->inv_std.assign(C, 0.0);
        cache->batch_stats = mode == Mode::train;
    }
    if (mode == Mode::eval && !stats) throw InputError("eval-mode batchnorm needs running statistics");
    for (int c = 0; c < C; ++c) {
        double mean, var;
        if (mode == Mode::train) {
            double s = 0.0;
            for (int i = 0; i < x.n; ++i) {
                const double* p = x.sample(i) + c * hw;
                for (std::size_t j = 0; j < hw; ++j) s += p[j];
            }
            mean = s / m;
            double ss = 0.0;
            for (int i = 0; i < x.n; ++i) {
                const double* p = x.sample(i) + c * hw;
                for (std::size_t j = 0; j < hw; ++j) ss += (p[j] - mean) * (p[j] - mean);
            }
            var = ss / m;
            if (stats) {
                const double unbiased = m > 1 ? ss / (m - 1) : var;
                stats->mean[c] = (1 - kBnMomentum) * stats->mean[c] + kBnMomentum * mean;
                stats->var[c] = (1 - kBnMomentum) * stats->var[c] + kBnMomentum * unbiased;
            }
        } else {
            mean = stats->mean[c];
            var = stats->var[c];
        }
        const double inv_std = 1.0 / std::sqrt(var + kBnEps);
        const double g = z[c] + kBnScaleOffset;
        if (cache) cache->inv_std[c] = inv_std;
        for (int i = 0; i < x.n; ++i) {
            const std::size_t base = i * x.sample_size() + c * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                const double xh = (x.data[base + j] - mean) * inv_std;
                if (cache) cache->xhat[base + j] = xh;
                y.data[base + j] = g * xh + b[c];
            }
        }
    }
}

// Forward pass that keeps what the backward pass needs.
class Pass {
public:
    Pass(const ModelSpec& spec, std::span<const double> w, Mode mode, RunningStats* stats)
        : spec_(spec), w_(w), mode_(mode), stats_(stats) {
        if (w.size() != spec.param_count())
            throw InputError("weight vector has length " + std::to_string(w.size()) + ", model needs " +
                             std::to_string(spec.param_count()));
        if (mode == Mode::eval && spec.has_batchnorm() && !stats)
            throw InputError("eval mode on a batchnorm model needs running statistics");
    }

    const Tensor& run(const Tensor& input) {
        if (!(input.shape == spec_.input_shape())) throw InputError("input shape does not match model");
        if (input.n < 1) throw InputError("empty batch");
        const auto& plan = spec_.plan();
        acts_.clear();
        acts_.reserve(plan.size() + 1);
        acts_.push_back(input);
        bn_.assign(plan.size(), {});
        std::size_t bn_index = 0;
        for (std::size_t li = 0; li < plan.size(); ++li) {
            const LayerPlan& p = plan[li];
            const Tensor& x = acts_.back();
            Tensor y;
            if (auto* l = std::get_if<Dense>(&p.layer)) {
                y = Tensor(x.n, p.out);
                CMapMat X(x.data.data(), x.n, l->in);
                CMapMat W(w_.data() + p.offset, l->out, l->in);
                MapMat Y(y.data.data(), x.n, l->out);
                Y.noalias() = X * W.transpose();
                if (l->bias) Y.rowwise() += CMapVec(w_.data() + p.offset + W.size(), l->out).transpose();
            } else if (auto* l = std::get_if<Conv2D>(&p.layer)) {
                y = Tensor(x.n, p.out);
                const Eigen::Index K = static_cast<Eigen::Index>(l->in_ch) * l->kernel * l->kernel;
                const Eigen::Index P = static_cast<Eigen::Index>(p.out.h) * p.out.w;
                CMapMat W(w_.data() + p.offset, l->out_ch, K);
                RowMat cols;
                for (int i = 0; i < x.n; ++i) {
                    im2col(x.sample(i), p.in, *l, p.out, cols);
                    MapMat Y(y.sample(i), l->out_ch, P);
                    Y.noalias() = W * cols;
                    if (l->bias) Y.colwise() += CMapVec(w_.data() + p.offset + W.size(), l->out_ch);
                }
            } else if (std::holds_alternative<ReLU>(p.layer)) {
                y = x;
                for (double& v : y.data) v = v > 0.0 ? v : 0.0;
            } else if (auto* l = std::get_if<AdaptiveAvgPool>(&p.layer)) {
                y = Tensor(x.n, p.out);
                for (int i = 0; i < x.n; ++i)
                    for (int c = 0; c < p.in.c; ++c) {
                        const double* src = x.sample(i) + c * p.in.h * p.in.w;
                        double* dst = y.sample(i) + c * l->out_h * l->out_w;
                        for (int oy = 0; oy < l->out_h; ++oy)
                            for (int ox = 0; ox < l->out_w; ++ox) {
                                const int y0 = pool_begin(oy, p.in.h, l->out_h), y1 = pool_end(oy, p.in.h, l->out_h);
                                const int x0 = pool_begin(ox, p.in.w, l->out_w), x1 = pool_end(ox, p.in.w, l->out_w);
                                double s = 0.0;
                                for (int yy = y0; yy < y1; ++yy)
                                    for (int xx = x0; xx < x1; ++xx) s += src[yy * p.in.w + xx];
                                dst[oy * l->out_w + ox] = s / ((y1 - y0) * (x1 - x0));
                            }
                    }
            } else if (auto* l = std::get_if<BatchNorm>(&p.layer)) {
                BnStats* st = stats_ ? &stats_->layers.at(bn_index) : nullptr;
                const double* z = w_.data() + p.offset;
                bn_apply({z, static_cast<std::size_t>(l->channels)},
                         {z + l->channels, static_cast<std::size_t>(l->channels)}, x, mode_, st, y, &bn_[li]);
                ++bn_index;
            } else {  // Flatten
                y = x;
                y.shape = p.out;
            }
            acts_.push_back(std::move(y));
        }
        return acts_.back();
    }

    // dlogits is consumed; gradient accumulated into grad (length n).
    void backward(Tensor dy, std::span<double> grad) const {
        const auto& plan = spec_.plan();
        for (std::size_t li = plan.size(); li-- > 0;) {
            const LayerPlan& p = plan[li];
            const Tensor& x = acts_[li];
            const bool need_dx = li > 0;
            Tensor dx;
            if (auto* l = std::get_if<Dense>(&p.layer)) {
                CMapMat X(x.data.data(), x.n, l->in);
                CMapMat W(w_.data() + p.offset, l->out, l->in);
                CMapMat dY(dy.data.data(), x.n, l->out);
                MapMat dW(grad.data() + p.offset, l->out, l->in);
                dW.noalias() += dY.transpose() * X;
                if (l->bias) MapVec(grad.data() + p.offset + W.size(), l->out) += dY.colwise().sum().transpose();
                if (need_dx) {
                    dx = Tensor(x.n, p.in);
                    MapMat(dx.data.data(), x.n, l->in).noalias() = dY * W;
                }
            } else if (auto* l = std::get_if<Conv2D>(&p.layer)) {
                const Eigen::Index K = static_cast<Eigen::Index>(l->in_ch) * l->kernel * l->kernel;
                const Eigen::Index P = static_cast<Eigen::Index>(p.out.h) * p.out.w;
                CMapMat W(w_.data() + p.offset, l->out_ch, K);
                MapMat dW(grad.data() + p.offset, l->out_ch, K);
                if (need_dx) dx = Tensor(x.n, p.in);
                RowMat cols, dcols;
                for (int i = 0; i < x.n; ++i) {
                    CMapMat dY(dy.sample(i), l->out_ch, P);
                    im2col(x.sample(i), p.in, *l, p.out, cols);
                    dW.noalias() += dY * cols.transpose();
                    if (l->bias) MapVec(grad.data() + p.offset + W.size(), l->out_ch) += dY.rowwise().sum();
                    if (need_dx) {
                        dcols.noalias() = W.transpose() * dY;
                        col2im(dcols, p.in, *l, p.out, dx.sample(i));
                    }
                }
            } else if (std::holds_alternative<ReLU>(p.layer)) {
                dx = std::move(dy);
                for (std::size_t j = 0; j < dx.data.size(); ++j)
                    if (!(x.data[j] > 0.0)) dx.data[j] = 0.0;
            } else if (auto* l = std::get_if<AdaptiveAvgPool>(&p.layer)) {
                dx = Tensor(x.n, p.in);
                for (int i = 0; i < x.n; ++i)
                    for (int c = 0; c < p.in.c; ++c) {
                        double* dst = dx.sample(i) + c * p.in.h * p.in.w;
                        const double* src = dy.sample(i) + c * l->out_h * l->out_w;
                        for (int oy = 0; oy < l->out_h; ++oy)
                            for (int ox = 0; ox < l->out_w; ++ox) {
                                const int y0 = pool_begin(oy, p.in.h, l->out_h), y1 = pool_end(oy, p.in.h, l->out_h);
                                const int x0 = pool_begin(ox, p.in.w, l->out_w), x1 = pool_end(ox, p.in.w, l->out_w);
                                const double g = src[oy * l->out_w + ox] / ((y1 - y0) * (x1 - x0));
                                for (int yy = y0; yy < y1; ++yy)
                                    for (int xx = x0; xx < x1; ++xx) dst[yy * p.in.w + xx] += g;
                            }
                    }
            } else if (auto* l = std::get_if<BatchNorm>(&p.layer)) {
                const BnCache& cache = bn_[li];
                const int C = l->channels;
                const std::size_t hw = static_cast<std::size_t>(p.in.h) * p.in.w;
                const double m = static_cast<double>(x.n) * hw;
                const double* z = w_.data() + p.offset;
                if (need_dx) dx = Tensor(x.n, p.in);
                for (int c = 0; c < C; ++c) {
                    double sum_dy = 0.0, sum_dy_xhat = 0.0;
                    for (int i = 0; i < x.n; ++i) {
                        const std::size_t base = i * x.sample_size() + c * hw;
                        for (std::size_t j = 0; j < hw; ++j) {
                            sum_dy += dy.data[base + j];
                            sum_dy_xhat += dy.data[base + j] * cache.xhat[base + j];
                        }
                    }
                    grad[p.offset + c] += sum_dy_xhat;
                    grad[p.offset + C + c] += sum_dy;
                    if (!need_dx) continue;
                    const double g = z[c] + kBnScaleOffset;
                    const double k = g * cache.inv_std[c];
                    for (int i = 0; i < x.n; ++i) {
                        const std::size_t base = i * x.sample_size() + c * hw;
                        for (std::size_t j = 0; j < hw; ++j) {
                            if (cache.batch_stats)
                                dx.data[base + j] =
                                    k * (dy.data[base + j] - sum_dy / m - cache.xhat[base + j] * sum_dy_xhat / m);
                            else
                                dx.data[base + j] = k * dy.data[base + j];
                        }
                    }
                }
            } else {  // Flatten
                dx = std::move(dy);
                dx.shape = p.in;
            }
            if (!need_dx) break;
            dy = std::move(dx);
        }
    }

private:
    const ModelSpec& spec_;
    std::span<const double> w_;
    Mode mode_;
    RunningStats* stats_;
    std::vector<Tensor> acts_;
    std::vector<BnCache> bn_;
};

void check_labels(const ModelSpec& spec, std::span<const int> labels, int n) {
    if (static_cast<int>(labels.size()) != n) throw InputError("label count does not match batch size");
    for (int y : labels)
        if (y < 0 || y >= spec.num_classes()) throw InputError("label " + std::to_string(y) + " out of range");
}

}  // namespace

RunningStats RunningStats::initial(const ModelSpec& spec) {
    RunningStats rs;
    for (const auto& l : spec.layers())
        if (auto* bn = std::get_if<BatchNorm>(&l))
            rs.layers.push_back({Vec(bn->channels, 0.0), Vec(bn->channels, 1.0)});
    return rs;
}

FlatWeights init_weights(const ModelSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    FlatWeights w(spec.param_count(), 0.0);
    for (const auto& p : spec.plan()) {
        double* dst = w.data() + p.offset;
        if (auto* l = std::get_if<Dense>(&p.layer)) {
            const double bound = std::sqrt(6.0 / (l->in + l->out));
            for (std::size_t j = 0; j < static_cast<std::size_t>(l->in) * l->out; ++j)
                dst[j] = rng.uniform(-bound, bound);
        } else if (auto* l = std::get_if<Conv2D>(&p.layer)) {
            const int kk = l->kernel * l->kernel;
            const double bound = std::sqrt(6.0 / (l->in_ch * kk + l->out_ch * kk));
            for (std::size_t j = 0; j < static_cast<std::size_t>(l->out_ch) * l->in_ch * kk; ++j)
                dst[j] = rng.uniform(-bound, bound);
        } else if (auto* l = std::get_if<BatchNorm>(&p.layer)) {
            for (int c = 0; c < l->channels; ++c) dst[c] = rng.uniform(-0.5, 0.5);
        }
    }
    return w;
}

void check_batch(const ModelSpec& spec, const Batch& batch) {
    if (!(batch.inputs.shape == spec.input_shape())) throw InputError("batch shape does not match model input");
    if (batch.size() < 1) throw InputError("empty batch");
    check_labels(spec, batch.labels, batch.size());
}

Tensor forward(const ModelSpec& spec, std::span<const double> w, const Tensor& inputs, Mode mode,
               RunningStats* stats) {
    Pass pass(spec, w, mode, stats);
    return pass.run(inputs);
}

Vec softmax(const Tensor& logits) {
    const int k = static_cast<int>(logits.sample_size());
    Vec out(logits.data.size());
    for (int i = 0; i < logits.n; ++i) {
        const double* z = logits.sample(i);
        const double mx = *std::max_element(z, z + k);
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += (out[i * k + j] = std::exp(z[j] - mx));
        for (int j = 0; j < k; ++j) out[i * k + j] /= s;
    }
    return out;
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
    const int k = static_cast<int>(logits.sample_size());
    double total = 0.0;
    for (int i = 0; i < logits.n; ++i) {
        const double* z = logits.sample(i);
        const double mx = *std::max_element(z, z + k);
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += std::exp(z[j] - mx);
        total += mx + std::log(s) - z[labels[i]];
    }
    return total / logits.n;
}

LossGrad loss_and_grad(const ModelSpec& spec, std::span<const double> w, const Batch& batch, Mode mode,
                       RunningStats* stats) {
    check_batch(spec, batch);
    Pass pass(spec, w, mode, stats);
    const Tensor& logits = pass.run(batch.inputs);
    LossGrad out;
    out.loss = cross_entropy(logits, batch.labels);
    Tensor d(logits.n, logits.shape);
    d.data = softmax(logits);
    const int k = spec.num_classes();
    const double inv_b = 1.0 / logits.n;
    for (int i = 0; i < logits.n; ++i) {
        d.data[i * k + batch.labels[i]] -= 1.0;
        for (int j = 0; j < k; ++j) d.data[i * k + j] *= inv_b;
    }
    out.grad.assign(spec.param_count(), 0.0);
    pass.backward(std::move(d), out.grad);
    return out;
}

Evaluation evaluate(const ModelSpec& spec, std::span<const double> w, const Batch& batch, Mode mode,
                    RunningStats* stats) {
    check_batch(spec, batch);
    const Tensor logits = forward(spec, w, batch.inputs, mode, stats);
    Evaluation e;
    e.loss = cross_entropy(logits, batch.labels);
    const int k = spec.num_classes();
    int hits = 0;
    for (int i = 0; i < logits.n; ++i) {
        const double* z = logits.sample(i);
        if (std::max_element(z, z + k) - z == batch.labels[i]) ++hits;
    }
    e.accuracy = static_cast<double>(hits) / logits.n;
    return e;
}

Tensor batchnorm_forward(std::span<const double> z, std::span<const double> b, const Tensor& x, Mode mode,
                         BnStats* stats) {
    Tensor y;
    bn_apply(z, b, x, mode, stats, y, nullptr);
    return y;
}

}  // namespace mpo::nn
