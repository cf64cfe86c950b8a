#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpo/datasets.hpp"
#include "mpo/error.hpp"
#include "mpo/manifold.hpp"
#include "mpo/patterns.hpp"
#include "mpo/rng.hpp"

namespace mpo {

struct TrainConfig {
    double lr = 3e-4;
    /// Cosine-anneal the step size from lr down to lr * lr_final_fraction
    /// over the run; 1 keeps it constant.
    double lr_final_fraction = 1.0;
    int batch_size = 512;
    int cells_per_update = 50;
    double white_ce_clamp = 2.5;
    double s_init = 0.1;
    int iterations = 1000;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int log_every = 1;
    int threads = 1;

    void validate() const;
    /// Step size at 1-based iteration `it`.
    double lr_at(int it) const;
};

/// Adam moments laid out like the plane parameters.
struct AdamState {
    long step = 0;
    PlaneGrads m, v;

    static AdamState zeros(std::size_t n);
};

/// One bias-corrected Adam update of every plane parameter, including s.
void adam_step(AdamState& state, PlaneParams& plane, const PlaneGrads& grads, const TrainConfig& config);

/// Same update for a single flat vector (used for conventional training).
void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 long step, const TrainConfig& config);

struct SampledCell {
    CellCoord coord;
    bool black = false;
};

/// ceil(k/2) black and floor(k/2) white trainable cells, uniformly without
/// replacement. When a class has fewer trainable cells than its quota it is
/// taken whole and the spare slots go to the other class.
std::vector<SampledCell> sample_cells(const CellSets& cells, int k, Rng& rng);

struct Objective {
    double value = 0.0;          // mean black CE - mean clamped white CE
    double mean_black_ce = 0.0;
    double mean_white_ce = 0.0;  // after clamping
    std::size_t n_black = 0, n_white = 0;
    PlaneGrads grads;
};

/// Pattern objective on one data batch. Every sampled cell sees the same
/// batch; BN layers use each cell's own batch statistics. White cells whose
/// cross-entropy reaches `white_ce_clamp` contribute the clamp value and no
/// gradient.
Objective mpo_objective(const nn::ModelSpec& spec, const PlaneParams& plane, std::span<const SampledCell> cells,
                        const Batch& batch, double white_ce_clamp, int threads = 1);

struct TrainRecord {
    int iteration = 0;
    double objective = 0.0;
    double black_ce = 0.0;
    double white_ce = 0.0;
    double scale = 0.0;
    double ortho_residual = 0.0;
};

struct TrainReport {
    std::vector<TrainRecord> records;
    std::vector<std::string> warnings;

    /// iteration,objective,black_ce,white_ce,scale,ortho_residual
    void write_csv(const std::string& path) const;
    std::string to_csv() const;
};

struct TrainResult {
    PlaneParams plane;
    TrainReport report;
};

/// Thrown when the plane degenerates mid-run; carries the last valid plane.
class TrainingAborted : public DegenerateDirectionError {
public:
    TrainingAborted(const std::string& what, PlaneParams last, int iteration)
        : DegenerateDirectionError(what), last_plane(std::move(last)), iteration(iteration) {}
    PlaneParams last_plane;
    int iteration;
};

/// Called after every optimizer step with the iteration number.
using StepObserver = std::function<void(int iteration, const PlaneParams&)>;

/// Full pattern fit. Deterministic for a given config (including seed);
/// never modifies `dataset` or `mask`.
TrainResult train(const nn::ModelSpec& spec, const Dataset& dataset, const Mask& mask, const TrainConfig& config,
                  std::optional<PlaneParams> initial = std::nullopt, const StepObserver& observer = {});

}  // namespace mpo
