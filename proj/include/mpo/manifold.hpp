#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mpo/network.hpp"

namespace mpo {

/// Trainable plane in weight space. Only w_up and the free direction
/// phi_right are stored; w_right is always derived by orthogonalize(), so it
/// is orthogonal to w_up with equal norm after any update.
struct PlaneParams {
    Vec w_origin;
    Vec w_up;
    Vec phi_right;
    double scale = 0.1;

    std::size_t dim() const { return w_origin.size(); }
    /// 3n + 1, independent of how many cells the pattern has.
    std::size_t trainable_count() const { return 3 * dim() + 1; }
    void validate() const;
};

/// Location on the plane: alpha moves along w_right (pattern column), beta
/// along w_up (pattern row).
struct CellCoord {
    double alpha = 0.0;
    double beta = 0.0;
};

struct PlaneGrads {
    Vec g_origin, g_up, g_phi_right;
    double g_scale = 0.0;

    static PlaneGrads zeros(std::size_t n) { return {Vec(n, 0.0), Vec(n, 0.0), Vec(n, 0.0), 0.0}; }
    PlaneGrads& operator+=(const PlaneGrads& o);
};

/// Gram-Schmidt step: project phi_right off w_up and rescale to ||w_up||.
/// Throws DegenerateDirectionError when the projected part is below
/// 1e-12 * ||phi_right|| or when w_up is zero.
Vec orthogonalize(std::span<const double> w_up, std::span<const double> phi_right);

/// w_origin + s * (alpha * w_right + beta * w_up).
nn::FlatWeights materialize(const PlaneParams& plane, CellCoord c);

/// Same as materialize() with a precomputed w_right; writes into `out`.
void materialize_into(const PlaneParams& plane, std::span<const double> w_right, CellCoord c, std::span<double> out);

struct CellGrad {
    CellCoord coord;
    Vec grad;  // dL/dw at the materialized weights
};

/// Accumulates per-cell weight gradients, then maps them to plane parameters.
/// Accumulation happens in the order add() is called.
class PullbackAccumulator {
public:
    explicit PullbackAccumulator(std::size_t n);

    void add(CellCoord c, std::span<const double> grad, double weight = 1.0);
    PlaneGrads finish(const PlaneParams& plane) const;

private:
    Vec sum_, sum_alpha_, sum_beta_;
};

/// Exact gradient of sum_c L_c(materialize(plane, c)) w.r.t. the plane,
/// including the path through the Gram-Schmidt normalization.
PlaneGrads pullback(const PlaneParams& plane, std::span<const CellGrad> cell_grads);

/// Vector-Jacobian product of orthogonalize(): given dL/dw_right returns
/// (dL/dw_up, dL/dphi_right).
std::pair<Vec, Vec> orthogonalize_vjp(std::span<const double> w_up, std::span<const double> phi_right,
                                      std::span<const double> g_right);

/// Residuals of the orthonormality contract:
/// |<w_up, w_right>| / (||w_up|| ||w_right||) and |(||w_right|| - ||w_up||)| / ||w_up||.
struct OrthoResidual {
    double inner = 0.0;
    double norm = 0.0;
    double max() const { return inner > norm ? inner : norm; }
};
OrthoResidual ortho_residual(std::span<const double> w_up, std::span<const double> w_right);

/// Fresh plane: each of w_origin, w_up, phi_right drawn by init_weights()
/// with seeds derived from `seed`.
PlaneParams init_plane(const nn::ModelSpec& spec, std::uint64_t seed, double scale);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

}  // namespace mpo
