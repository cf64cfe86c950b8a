#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mpo/error.hpp"
#include "mpo/network.hpp"
#include "test_util.hpp"

using namespace mpo;
using namespace mpo::nn;
using mpo::test::fd_gradient;
using mpo::test::max_rel_err;
using mpo::test::random_batch;
using mpo::test::random_vec;

namespace {

// Small instances covering every layer type, each with n <= 500.
std::vector<ModelSpec> gradient_zoo() {
    return {
        make_mlp({1, 4, 4}, 3, {{12}}),
        ModelSpec({Conv2D{1, 3, 3, 1, 1, true}, ReLU{}, AdaptiveAvgPool{2, 2}, Flatten{}, Dense{12, 2}}, {1, 5, 5},
                  2),
        ModelSpec({Conv2D{2, 3, 3, 2, 0, true}, ReLU{}, Flatten{}, Dense{12, 4, false}}, {2, 6, 6}, 4),
        ModelSpec({Conv2D{1, 3, 3, 1, 1, true}, BatchNorm{3}, ReLU{}, AdaptiveAvgPool{2, 2}, Flatten{}, Dense{12, 3}},
                  {1, 5, 5}, 3),
        ModelSpec({Flatten{}, Dense{9, 6}, BatchNorm{6}, ReLU{}, Dense{6, 2}}, {1, 3, 3}, 2),
        ModelSpec({Conv2D{1, 2, 3, 1, 1}, ReLU{}, AdaptiveAvgPool{3, 2}, Flatten{}, Dense{12, 2}}, {1, 7, 5}, 2),
    };
}

}  // namespace

TEST(InitWeights, XavierBoundsAndZeroBias) {
    const ModelSpec spec = make_mlp({1, 6, 6}, 4, {{20}});
    const FlatWeights w = init_weights(spec, 3);
    for (const auto& p : spec.plan()) {
        auto* d = std::get_if<Dense>(&p.layer);
        if (!d) continue;
        const double bound = std::sqrt(6.0 / (d->in + d->out));
        for (int i = 0; i < d->in * d->out; ++i) EXPECT_LE(std::abs(w[p.offset + i]), bound);
        for (int i = 0; i < d->out; ++i) EXPECT_EQ(w[p.offset + d->in * d->out + i], 0.0);
    }
}

TEST(InitWeights, Deterministic) {
    const ModelSpec spec = reference_net({1, 14, 14}, 2, true);
    EXPECT_EQ(init_weights(spec, 11), init_weights(spec, 11));
    EXPECT_NE(init_weights(spec, 11), init_weights(spec, 12));
}

TEST(InitWeights, BatchNormScaleCentered) {
    const ModelSpec spec({Flatten{}, BatchNorm{4}, Dense{4, 2}}, {4, 1, 1}, 2);
    double sum = 0.0;
    int count = 0;
    for (std::uint64_t seed = 0; count < 10000; ++seed) {
        const FlatWeights w = init_weights(spec, seed);
        for (int c = 0; c < 4; ++c, ++count) {
            const double z = w[spec.plan()[1].offset + c];
            EXPECT_GE(z + kBnScaleOffset, 0.0);
            EXPECT_LE(z + kBnScaleOffset, 1.0);
            EXPECT_EQ(w[spec.plan()[1].offset + 4 + c], 0.0);
            sum += z;
        }
    }
    EXPECT_NEAR(sum / count, 0.0, 0.02);
}

TEST(Forward, ZeroWeightsGiveUniformSoftmax) {
    const ModelSpec spec = make_mlp({1, 4, 4}, 10, {{8}});
    const Batch batch = random_batch(spec, 5, 1);
    const Tensor logits = forward(spec, Vec(spec.param_count(), 0.0), batch.inputs, Mode::train);
    for (double v : logits.data) EXPECT_EQ(v, 0.0);
    for (double p : softmax(logits)) EXPECT_DOUBLE_EQ(p, 0.1);
}

TEST(Forward, IdentityDense) {
    const ModelSpec spec({Dense{4, 4, true}}, {4, 1, 1}, 4);
    Vec w(spec.param_count(), 0.0);
    for (int i = 0; i < 4; ++i) w[i * 4 + i] = 1.0;
    const Batch batch = random_batch(spec, 3, 2);
    EXPECT_EQ(forward(spec, w, batch.inputs, Mode::train).data, batch.inputs.data);
}

TEST(Forward, MatchesLoopReference) {
    for (const ModelSpec& spec : gradient_zoo()) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const Vec w = random_vec(spec.param_count(), 100 + seed, 0.5);
            const Batch batch = random_batch(spec, 4, 200 + seed);
            const Tensor got = forward(spec, w, batch.inputs, Mode::train);
            const Tensor want = test::reference_forward(spec, w, batch.inputs);
            ASSERT_EQ(got.data.size(), want.data.size());
            for (std::size_t i = 0; i < got.data.size(); ++i)
                EXPECT_LE(test::rel_diff(got.data[i], want.data[i]), 1e-12) << spec.to_json();
        }
    }
}

TEST(Forward, ShapeMismatchIsInputError) {
    const ModelSpec spec = make_mlp({1, 4, 4}, 2);
    Tensor wrong(2, {1, 5, 4});
    EXPECT_THROW(forward(spec, init_weights(spec, 0), wrong, Mode::train), InputError);
    EXPECT_THROW(forward(spec, Vec(3, 0.0), Tensor(2, {1, 4, 4}), Mode::train), InputError);
    Batch bad = random_batch(spec, 2, 0);
    bad.labels[1] = 2;
    EXPECT_THROW(loss_and_grad(spec, init_weights(spec, 0), bad, Mode::train), InputError);
}

TEST(Forward, TrainModeIsPure) {
    const ModelSpec spec = gradient_zoo()[3];
    const Vec w = random_vec(spec.param_count(), 5, 0.5);
    const Batch batch = random_batch(spec, 6, 6);
    RunningStats s1 = RunningStats::initial(spec), s2 = s1;
    EXPECT_EQ(forward(spec, w, batch.inputs, Mode::train, &s1).data,
              forward(spec, w, batch.inputs, Mode::train, &s2).data);
    EXPECT_EQ(s1.layers[0].mean, s2.layers[0].mean);
    EXPECT_NE(s1.layers[0].mean, RunningStats::initial(spec).layers[0].mean);
}

TEST(Forward, EvalModeBatchNormNeedsStats) {
    const ModelSpec spec = gradient_zoo()[3];
    EXPECT_THROW(forward(spec, init_weights(spec, 0), Tensor(2, spec.input_shape()), Mode::eval), InputError);
}

TEST(Softmax, RowsSumToOne) {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor logits(4, {7, 1, 1});
        for (double& v : logits.data) v = 30.0 * rng.normal();
        const Vec p = softmax(logits);
        for (int i = 0; i < 4; ++i) {
            const double s = std::accumulate(p.begin() + i * 7, p.begin() + (i + 1) * 7, 0.0);
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(LossAndGrad, UniformLogitsGiveLogK) {
    const ModelSpec spec = make_mlp({1, 3, 3}, 10, {{4}});
    const Batch batch = random_batch(spec, 8, 3);
    const LossGrad lg = loss_and_grad(spec, Vec(spec.param_count(), 0.0), batch, Mode::train);
    EXPECT_NEAR(lg.loss, std::log(10.0), 1e-15);
    EXPECT_NEAR(lg.loss, 2.302585, 1e-6);
}

TEST(LossAndGrad, MatchesFiniteDifferences) {
    int instance = 0;
    for (const ModelSpec& spec : gradient_zoo()) {
        ASSERT_LE(spec.param_count(), 500u);
        for (std::uint64_t seed = 0; seed < 4; ++seed, ++instance) {
            const Vec w = random_vec(spec.param_count(), 300 + seed, 0.4);
            const Batch batch = random_batch(spec, 5, 400 + seed);
            const LossGrad lg = loss_and_grad(spec, w, batch, Mode::train);
            const Vec fd = fd_gradient(
                [&](const Vec& x) { return loss_and_grad(spec, x, batch, Mode::train).loss; }, w);
            EXPECT_LE(max_rel_err(lg.grad, fd), 1e-5) << "instance " << instance << " " << spec.to_json();
        }
    }
}

TEST(LossAndGrad, EvalModeBatchNormMatchesFiniteDifferences) {
    const ModelSpec spec = gradient_zoo()[3];
    const Vec w = random_vec(spec.param_count(), 17, 0.4);
    const Batch batch = random_batch(spec, 5, 18);
    RunningStats stats = RunningStats::initial(spec);
    forward(spec, w, batch.inputs, Mode::train, &stats);
    auto f = [&](const Vec& x) {
        RunningStats s = stats;
        return loss_and_grad(spec, x, batch, Mode::eval, &s).loss;
    };
    RunningStats s = stats;
    EXPECT_LE(max_rel_err(loss_and_grad(spec, w, batch, Mode::eval, &s).grad, fd_gradient(f, w)), 1e-5);
}

TEST(LossAndGrad, DuplicatedBatchIsInvariant) {
    const ModelSpec spec = gradient_zoo()[1];
    const Vec w = random_vec(spec.param_count(), 1, 0.5);
    const Batch batch = random_batch(spec, 4, 2);
    Batch twice = batch;
    twice.inputs = Tensor(8, batch.inputs.shape);
    std::copy(batch.inputs.data.begin(), batch.inputs.data.end(), twice.inputs.data.begin());
    std::copy(batch.inputs.data.begin(), batch.inputs.data.end(), twice.inputs.data.begin() + batch.inputs.data.size());
    twice.labels.insert(twice.labels.end(), batch.labels.begin(), batch.labels.end());
    const LossGrad a = loss_and_grad(spec, w, batch, Mode::train);
    const LossGrad b = loss_and_grad(spec, w, twice, Mode::train);
    EXPECT_NEAR(a.loss, b.loss, 1e-14);
    EXPECT_LE(max_rel_err(a.grad, b.grad), 1e-13);
}

TEST(BatchNormForward, ZeroStoredScaleMeansHalf) {
    Tensor x(2, {1, 1, 1});
    x.data = {1.0, 3.0};
    const Tensor y = batchnorm_forward(Vec{0.0}, Vec{0.0}, x, Mode::train);
    const double xhat = 1.0 / std::sqrt(1.0 + kBnEps);
    EXPECT_NEAR(y.data[0], -0.5 * xhat, 1e-15);
    EXPECT_NEAR(y.data[1], 0.5 * xhat, 1e-15);
}

TEST(BatchNormForward, ConstantChannelGivesShift) {
    Tensor x(3, {2, 2, 2});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 8; ++j) x.sample(i)[j] = j < 4 ? 7.0 : -2.0;
    const Tensor y = batchnorm_forward(Vec{0.3, -0.1}, Vec{1.5, -4.0}, x, Mode::train);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 8; ++j) EXPECT_DOUBLE_EQ(y.sample(i)[j], j < 4 ? 1.5 : -4.0);
}

TEST(BatchNormForward, TwoValueChannel) {
    // mean 2, biased variance 1: (x - 2) / sqrt(1 + eps) times (0.5 + 0.5).
    Tensor x(2, {1, 1, 1});
    x.data = {1.0, 3.0};
    BnStats stats{{0.0}, {1.0}};
    const Tensor y = batchnorm_forward(Vec{0.5}, Vec{0.0}, x, Mode::train, &stats);
    EXPECT_NEAR(y.data[0], -1.0, 1e-5);
    EXPECT_NEAR(y.data[1], 1.0, 1e-5);
    EXPECT_NEAR(stats.mean[0], 0.2, 1e-15);            // 0.9 * 0 + 0.1 * 2
    EXPECT_NEAR(stats.var[0], 0.9 + 0.1 * 2.0, 1e-15);  // unbiased variance 2
    const Tensor e = batchnorm_forward(Vec{0.5}, Vec{0.0}, x, Mode::eval, &stats);
    EXPECT_NEAR(e.data[0], (1.0 - 0.2) / std::sqrt(1.1 + kBnEps), 1e-12);
}
