#include "mpo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "mpo/rng.hpp"
#include "mpo/train.hpp"

namespace mpo {

namespace {

Vec flatten(const PlaneGrads& g) {
    Vec out = g.g_origin;
    out.insert(out.end(), g.g_up.begin(), g.g_up.end());
    out.insert(out.end(), g.g_phi_right.begin(), g.g_phi_right.end());
    out.push_back(g.g_scale);
    return out;
}

Vec flatten(const PlaneParams& p) {
    Vec out = p.w_origin;
    out.insert(out.end(), p.w_up.begin(), p.w_up.end());
    out.insert(out.end(), p.phi_right.begin(), p.phi_right.end());
    out.push_back(p.scale);
    return out;
}

PlaneParams unflatten(const Vec& t, std::size_t n) {
    const auto b = t.begin();
    return {Vec(b, b + n), Vec(b + n, b + 2 * n), Vec(b + 2 * n, b + 3 * n), t[3 * n]};
}

nn::ModelSpec random_model(Rng& rng, bool conv) {
    const int side = 3 + static_cast<int>(rng.below(3));
    const int classes = 2 + static_cast<int>(rng.below(3));
    if (!conv) return nn::make_mlp({1, side, side}, classes, {{3 + static_cast<int>(rng.below(6))}});
    const int ch = 2 + static_cast<int>(rng.below(3));
    return nn::make_conv_net({1, side, side}, classes, {{ch}, false, 2, 6});
}

Vec central_differences(const std::function<double(const Vec&)>& f, Vec x, double h) {
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

double rel_err(const Vec& a, const Vec& b) {
    double diff = 0, scale = 1e-300;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    return diff / scale;
}

}  // namespace

std::vector<GradCheckResult> check_mpo_gradients(int instances, std::uint64_t seed, double h) {
    std::vector<GradCheckResult> out;
    const Mask mask = checkerboard(3, 3);
    const CellSets cells = derive_cell_sets(mask);
    const double clamp = TrainConfig{}.white_ce_clamp;
    std::uint64_t draw = 0;
    for (int k = 0; k < instances; ++k) {
        const bool conv = k % 2 == 1;
        for (int redraws = 0;; ++redraws) {
            Rng rng(seed * 1000003ull + draw++);
            const nn::ModelSpec spec = random_model(rng, conv);
            const std::size_t n = spec.param_count();
            PlaneParams plane = init_plane(spec, rng.next(), 0.2 + 0.3 * rng.uniform());
            // Perturb away from the init so no structure (zero biases) is special.
            for (Vec* v : {&plane.w_origin, &plane.w_up, &plane.phi_right})
                for (double& x : *v) x += 0.05 * rng.normal();

            Batch batch;
            batch.inputs = Tensor(4 + static_cast<int>(rng.below(4)), spec.input_shape());
            for (double& v : batch.inputs.data) v = rng.uniform();
            for (int i = 0; i < batch.size(); ++i)
                batch.labels.push_back(static_cast<int>(rng.below(spec.num_classes())));
            const auto sampled = sample_cells(cells, 9, rng);

            auto f = [&](const Vec& t) { return mpo_objective(spec, unflatten(t, n), sampled, batch, clamp).value; };
            const Vec theta = flatten(plane);
            const Vec fd = central_differences(f, theta, h);
            if (rel_err(fd, central_differences(f, theta, h / 4)) > 1e-5 && redraws < 100) continue;
            const Vec analytic = flatten(mpo_objective(spec, plane, sampled, batch, clamp).grads);
            out.push_back({conv ? "conv" : "mlp", n, rel_err(analytic, fd), redraws});
            break;
        }
    }
    return out;
}

}  // namespace mpo
