#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mpo/model_spec.hpp"
#include "mpo/tensor.hpp"

namespace mpo::nn {

/// A model's complete parameter set; length equals param_count(spec).
using FlatWeights = Vec;

enum class Mode { train, eval };

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;
/// Added to the stored BN scale in the forward pass.
inline constexpr double kBnScaleOffset = 0.5;

struct BnStats {
    Vec mean, var;
};

/// Running statistics for every BatchNorm layer of a spec, in layer order.
struct RunningStats {
    std::vector<BnStats> layers;

    /// mean 0, variance 1 for every channel.
    static RunningStats initial(const ModelSpec& spec);
};

/// Xavier-uniform conv/dense weights, zero biases, BN stored scale from
/// U[-0.5, 0.5], zero BN shift.
FlatWeights init_weights(const ModelSpec& spec, std::uint64_t seed);

/// Logits of shape (B, num_classes, 1, 1).
///
/// Train mode normalizes BN layers with batch statistics and, when `stats`
/// is given, updates them with momentum kBnMomentum. Eval mode requires
/// `stats` for specs containing BN.
Tensor forward(const ModelSpec& spec, std::span<const double> w, const Tensor& inputs, Mode mode,
               RunningStats* stats = nullptr);

struct LossGrad {
    double loss = 0.0;
    Vec grad;
};

/// Mean cross-entropy over the batch and its exact gradient w.r.t. w.
LossGrad loss_and_grad(const ModelSpec& spec, std::span<const double> w, const Batch& batch, Mode mode,
                       RunningStats* stats = nullptr);

struct Evaluation {
    double loss = 0.0;      // mean cross-entropy
    double accuracy = 0.0;  // fraction of argmax hits; ties go to the lowest class index
};

Evaluation evaluate(const ModelSpec& spec, std::span<const double> w, const Batch& batch, Mode mode,
                    RunningStats* stats = nullptr);

/// Normalize per channel, then scale by (z + 0.5) and shift by b. Train mode
/// uses batch statistics (and updates `stats` if given); eval mode uses `stats`.
Tensor batchnorm_forward(std::span<const double> z, std::span<const double> b, const Tensor& x, Mode mode,
                         BnStats* stats = nullptr);

/// Row-wise softmax of a (B, K) logits tensor.
Vec softmax(const Tensor& logits);

/// Mean cross-entropy computed with log-sum-exp.
double cross_entropy(const Tensor& logits, std::span<const int> labels);

void check_batch(const ModelSpec& spec, const Batch& batch);

}  // namespace mpo::nn
