#include "mpo/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mpo/parallel.hpp"

namespace mpo {

void TrainConfig::validate() const {
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (!(lr_final_fraction > 0 && lr_final_fraction <= 1)) throw ConfigError("lr_final_fraction must lie in (0, 1]");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (cells_per_update < 2) throw ConfigError("cells_per_update must be at least 2");
    if (!(white_ce_clamp > 0)) throw ConfigError("white_ce_clamp must be positive");
    if (iterations < 0) throw ConfigError("iterations must be non-negative");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1))
        throw ConfigError("adam betas must lie in [0, 1)");
    if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
    if (log_every < 1) throw ConfigError("log_every must be at least 1");
    if (threads < 1) throw ConfigError("threads must be at least 1");
}

double TrainConfig::lr_at(int it) const {
    if (lr_final_fraction == 1.0 || iterations <= 1) return lr;
    const double t = static_cast<double>(it - 1) / (iterations - 1);
    return lr * (lr_final_fraction + (1.0 - lr_final_fraction) * 0.5 * (1.0 + std::cos(M_PI * t)));
}

AdamState AdamState::zeros(std::size_t n) { return {0, PlaneGrads::zeros(n), PlaneGrads::zeros(n)}; }

namespace {

struct AdamCoefs {
    double step_size, b1, b2, eps, c2;
};

AdamCoefs coefs(long step, const TrainConfig& cfg) {
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
    return {cfg.lr / c1, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, c2};
}

// theta -= lr * mhat / (sqrt(vhat) + eps)
inline void adam_scalar(double& theta, double g, double& m, double& v, const AdamCoefs& k) {
    m = k.b1 * m + (1.0 - k.b1) * g;
    v = k.b2 * v + (1.0 - k.b2) * g * g;
    theta -= k.step_size * m / (std::sqrt(v / k.c2) + k.eps);
}

}  // namespace

void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 long step, const TrainConfig& config) {
    if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size())
        throw InputError("adam: shape mismatch");
    const AdamCoefs k = coefs(step, config);
    for (std::size_t i = 0; i < theta.size(); ++i) adam_scalar(theta[i], grad[i], m[i], v[i], k);
}

void adam_step(AdamState& state, PlaneParams& plane, const PlaneGrads& grads, const TrainConfig& config) {
    ++state.step;
    adam_update(plane.w_origin, grads.g_origin, state.m.g_origin, state.v.g_origin, state.step, config);
    adam_update(plane.w_up, grads.g_up, state.m.g_up, state.v.g_up, state.step, config);
    adam_update(plane.phi_right, grads.g_phi_right, state.m.g_phi_right, state.v.g_phi_right, state.step, config);
    adam_scalar(plane.scale, grads.g_scale, state.m.g_scale, state.v.g_scale, coefs(state.step, config));
}

std::vector<SampledCell> sample_cells(const CellSets& cells, int k, Rng& rng) {
    if (k < 2) throw InputError("need at least 2 cells per update");
    std::vector<Cell> black = cells.trainable(true), white = cells.trainable(false);
    if (black.empty() && white.empty()) throw InputError("no trainable cells");
    std::size_t want_black = (k + 1) / 2, want_white = k / 2;
    if (black.size() < want_black) {
        want_white += want_black - black.size();
        want_black = black.size();
    }
    if (white.size() < want_white) {
        want_black = std::min(black.size(), want_black + (want_white - white.size()));
        want_white = white.size();
    }
    // Partial Fisher-Yates: the first `want` entries become a uniform sample.
    auto pick = [&](std::vector<Cell>& pool, std::size_t want, bool is_black, std::vector<SampledCell>& out) {
        for (std::size_t i = 0; i < want; ++i) {
            std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
            out.push_back({pool[i].coord(), is_black});
        }
    };
    std::vector<SampledCell> out;
    out.reserve(want_black + want_white);
    pick(black, want_black, true, out);
    pick(white, want_white, false, out);
    return out;
}

Objective mpo_objective(const nn::ModelSpec& spec, const PlaneParams& plane, std::span<const SampledCell> cells,
                        const Batch& batch, double white_ce_clamp, int threads) {
    if (cells.empty()) throw InputError("mpo_objective needs at least one cell");
    nn::check_batch(spec, batch);
    const std::size_t n = plane.dim();
    if (n != spec.param_count()) throw InputError("plane dimension does not match the model");
    const Vec w_right = orthogonalize(plane.w_up, plane.phi_right);

    std::vector<nn::LossGrad> results(cells.size());
    parallel_for(cells.size(), threads, [&](std::size_t i) {
        nn::FlatWeights w(n);
        materialize_into(plane, w_right, cells[i].coord, w);
        results[i] = nn::loss_and_grad(spec, w, batch, nn::Mode::train);
    });

    Objective obj;
    for (const auto& c : cells) (c.black ? obj.n_black : obj.n_white) += 1;
    PullbackAccumulator acc(n);
    double black_sum = 0.0, white_sum = 0.0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const double ce = results[i].loss;
        if (cells[i].black) {
            black_sum += ce;
            acc.add(cells[i].coord, results[i].grad, 1.0 / obj.n_black);
        } else if (ce < white_ce_clamp) {
            white_sum += ce;
            acc.add(cells[i].coord, results[i].grad, -1.0 / obj.n_white);
        } else {
            white_sum += white_ce_clamp;
        }
    }
    obj.mean_black_ce = obj.n_black ? black_sum / obj.n_black : 0.0;
    obj.mean_white_ce = obj.n_white ? white_sum / obj.n_white : 0.0;
    obj.value = obj.mean_black_ce - obj.mean_white_ce;
    obj.grads = acc.finish(plane);
    return obj;
}

std::string TrainReport::to_csv() const {
    std::string out = "iteration,objective,black_ce,white_ce,scale,ortho_residual\n";
    char line[256];
    for (const auto& r : records) {
        std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iteration, r.objective, r.black_ce,
                      r.white_ce, r.scale, r.ortho_residual);
        out += line;
    }
    return out;
}

void TrainReport::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << to_csv();
}

TrainResult train(const nn::ModelSpec& spec, const Dataset& dataset, const Mask& mask, const TrainConfig& config,
                  std::optional<PlaneParams> initial, const StepObserver& observer) {
    config.validate();
    mask.validate();
    if (dataset.size() < 1) throw InputError("training dataset is empty");
    if (!(dataset.shape() == spec.input_shape())) throw InputError("dataset images do not match the model input");
    const CellSets cells = derive_cell_sets(mask);
    if (cells.trainable_count() == 0) throw InputError("mask has no trainable cells");

    TrainResult result;
    result.plane = initial ? std::move(*initial) : init_plane(spec, config.seed, config.s_init);
    result.plane.validate();
    if (result.plane.dim() != spec.param_count()) throw InputError("initial plane does not match the model");
    PlaneParams& plane = result.plane;

    AdamState adam = AdamState::zeros(plane.dim());
    Rng cell_rng(config.seed * 0x9E3779B97F4A7C15ull + 17);
    Batcher batcher(dataset, config.batch_size, config.seed * 0x9E3779B97F4A7C15ull + 29);
    bool warned_collapse = false;
    TrainConfig step_cfg = config;

    for (int it = 1; it <= config.iterations; ++it) {
        const Batch batch = batcher.next();
        const auto sampled = sample_cells(cells, config.cells_per_update, cell_rng);
        Objective obj;
        try {
            obj = mpo_objective(spec, plane, sampled, batch, config.white_ce_clamp, config.threads);
        } catch (const DegenerateDirectionError& e) {
            throw TrainingAborted(std::string("iteration ") + std::to_string(it) + ": " + e.what(), plane, it);
        }
        const PlaneParams before = plane;
        step_cfg.lr = config.lr_at(it);
        adam_step(adam, plane, obj.grads, step_cfg);
        OrthoResidual res;
        try {
            plane.validate();
            res = ortho_residual(plane.w_up, orthogonalize(plane.w_up, plane.phi_right));
        } catch (const Error& e) {
            throw TrainingAborted(std::string("iteration ") + std::to_string(it) + ": " + e.what(), before, it);
        }
        if (!warned_collapse && std::abs(plane.scale) * norm(plane.w_up) == 0.0) {
            result.report.warnings.push_back("iteration " + std::to_string(it) +
                                             ": scale * |w_up| is zero, the plane collapsed to a point");
            warned_collapse = true;
        }
        if (it == 1 || it % config.log_every == 0 || it == config.iterations)
            result.report.records.push_back(
                {it, obj.value, obj.mean_black_ce, obj.mean_white_ce, plane.scale, res.max()});
        if (observer) observer(it, plane);
    }
    return result;
}

}  // namespace mpo
