#include "mpo/manifold.hpp"

#include <cmath>
#include <string>

#include "mpo/error.hpp"

namespace mpo {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void PlaneParams::validate() const {
    const std::size_t n = w_origin.size();
    if (w_up.size() != n || phi_right.size() != n) throw InputError("plane vectors differ in length");
    for (const Vec* v : {&w_origin, &w_up, &phi_right})
        for (double x : *v)
            if (!std::isfinite(x)) throw NumericError("plane contains a non-finite entry");
    if (!std::isfinite(scale)) throw NumericError("plane scale is not finite");
}

PlaneGrads& PlaneGrads::operator+=(const PlaneGrads& o) {
    for (std::size_t i = 0; i < g_origin.size(); ++i) {
        g_origin[i] += o.g_origin[i];
        g_up[i] += o.g_up[i];
        g_phi_right[i] += o.g_phi_right[i];
    }
    g_scale += o.g_scale;
    return *this;
}

namespace {

struct Projection {
    Vec hat;        // phi - c * u
    double coef;    // <phi, u> / ||u||^2
    double nu, nh;  // ||u||, ||hat||
};

Projection project(std::span<const double> u, std::span<const double> phi) {
    if (u.size() != phi.size()) throw InputError("w_up and phi_right differ in length");
    const double uu = dot(u, u);
    if (!(uu > 0.0)) throw DegenerateDirectionError("w_up has zero norm");
    Projection p;
    p.coef = dot(phi, u) / uu;
    p.hat.resize(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) p.hat[i] = phi[i] - p.coef * u[i];
    p.nu = std::sqrt(uu);
    p.nh = norm(p.hat);
    if (!(p.nh >= 1e-12 * norm(phi)) || p.nh == 0.0)
        throw DegenerateDirectionError("phi_right is parallel to w_up");
    return p;
}

}  // namespace

Vec orthogonalize(std::span<const double> w_up, std::span<const double> phi_right) {
    Projection p = project(w_up, phi_right);
    const double k = p.nu / p.nh;
    for (double& v : p.hat) v *= k;
    return std::move(p.hat);
}

std::pair<Vec, Vec> orthogonalize_vjp(std::span<const double> u, std::span<const double> phi,
                                      std::span<const double> g_right) {
    const Projection p = project(u, phi);
    const std::size_t n = u.size();
    // w_right = (nu / nh) * hat
    const double g_hat_dot = dot(g_right, p.hat);
    const double g_nu = g_hat_dot / p.nh;
    const double ratio = p.nu / p.nh;
    Vec g_hat(n);
    for (std::size_t i = 0; i < n; ++i)
        g_hat[i] = ratio * (g_right[i] - g_hat_dot * p.hat[i] / (p.nh * p.nh));
    // hat = phi - coef * u, coef = <phi,u> / ||u||^2
    const double uu = p.nu * p.nu;
    const double g_coef = -dot(g_hat, u);
    Vec g_u(n), g_phi(n);
    for (std::size_t i = 0; i < n; ++i) {
        g_phi[i] = g_hat[i] + g_coef * u[i] / uu;
        g_u[i] = g_nu * u[i] / p.nu - p.coef * g_hat[i] + g_coef * (phi[i] - 2.0 * p.coef * u[i]) / uu;
    }
    return {std::move(g_u), std::move(g_phi)};
}

void materialize_into(const PlaneParams& plane, std::span<const double> w_right, CellCoord c, std::span<double> out) {
    const double a = plane.scale * c.alpha, b = plane.scale * c.beta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = plane.w_origin[i] + (a * w_right[i] + b * plane.w_up[i]);
}

nn::FlatWeights materialize(const PlaneParams& plane, CellCoord c) {
    const Vec w_right = orthogonalize(plane.w_up, plane.phi_right);
    nn::FlatWeights w(plane.dim());
    materialize_into(plane, w_right, c, w);
    return w;
}

PullbackAccumulator::PullbackAccumulator(std::size_t n) : sum_(n, 0.0), sum_alpha_(n, 0.0), sum_beta_(n, 0.0) {}

void PullbackAccumulator::add(CellCoord c, std::span<const double> grad, double weight) {
    if (grad.size() != sum_.size()) throw InputError("cell gradient has wrong length");
    const double wa = weight * c.alpha, wb = weight * c.beta;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        sum_[i] += weight * grad[i];
        sum_alpha_[i] += wa * grad[i];
        sum_beta_[i] += wb * grad[i];
    }
}

PlaneGrads PullbackAccumulator::finish(const PlaneParams& plane) const {
    const std::size_t n = sum_.size();
    if (plane.dim() != n) throw InputError("plane dimension does not match gradients");
    const Vec w_right = orthogonalize(plane.w_up, plane.phi_right);
    PlaneGrads g;
    g.g_origin = sum_;
    g.g_scale = dot(sum_alpha_, w_right) + dot(sum_beta_, plane.w_up);
    Vec g_right(n);
    for (std::size_t i = 0; i < n; ++i) g_right[i] = plane.scale * sum_alpha_[i];
    auto [g_up_via_right, g_phi] = orthogonalize_vjp(plane.w_up, plane.phi_right, g_right);
    g.g_up.resize(n);
    for (std::size_t i = 0; i < n; ++i) g.g_up[i] = plane.scale * sum_beta_[i] + g_up_via_right[i];
    g.g_phi_right = std::move(g_phi);
    return g;
}

PlaneGrads pullback(const PlaneParams& plane, std::span<const CellGrad> cell_grads) {
    PullbackAccumulator acc(plane.dim());
    for (const auto& cg : cell_grads) acc.add(cg.coord, cg.grad);
    return acc.finish(plane);
}

OrthoResidual ortho_residual(std::span<const double> w_up, std::span<const double> w_right) {
    const double nu = norm(w_up), nr = norm(w_right);
    return {std::abs(dot(w_up, w_right)) / (nu * nr), std::abs(nr - nu) / nu};
}

PlaneParams init_plane(const nn::ModelSpec& spec, std::uint64_t seed, double scale) {
    PlaneParams p;
    p.w_origin = nn::init_weights(spec, seed * 3 + 0);
    p.w_up = nn::init_weights(spec, seed * 3 + 1);
    p.phi_right = nn::init_weights(spec, seed * 3 + 2);
    p.scale = scale;
    return p;
}

}  // namespace mpo
