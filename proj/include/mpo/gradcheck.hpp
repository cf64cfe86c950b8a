#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mpo {

struct GradCheckResult {
    std::string model;  // "mlp" or "conv"
    std::size_t n = 0;  // model parameter count
    double max_rel_err = 0;
    int redraws = 0;  // candidate instances skipped as nonsmooth
};

/// Audits the full pattern-objective gradient w.r.t. (w_origin, w_up,
/// phi_right, s) against central differences with step `h` on seeded
/// random instances: alternating small MLPs and single-conv nets (n <= 500),
/// a 3x3 checkerboard pattern and a random batch. The error of an instance
/// is max|analytic - fd| / max(|analytic|_inf, |fd|_inf). A candidate whose
/// stencil straddles a ReLU kink or the white-cell clamp (detected as
/// disagreement between steps h and h/4) is replaced by a fresh draw.
std::vector<GradCheckResult> check_mpo_gradients(int instances, std::uint64_t seed, double h = 1e-5);

}  // namespace mpo
