#pragma once

#include "uvweave/gradcore.hpp"
#include "uvweave/warpmap.hpp"

#include <vector>

namespace uvweave {

struct OptConfig {
    double alpha1 = 100.0;
    double alpha2 = 10.0;
    double lr = 10.0;
    int max_steps = 16500;
    double rel_tol = 1e-6;  // relative improvement over `window` steps
    int window = 100;
    // Halve lr whenever a step would raise the loss, double it back (up to lr)
    // after 10 accepted steps. Without it the loop is plain descent.
    bool backtracking = true;
    TextureSize tex{};

    void validate() const;
};

struct OptTrace {
    std::vector<double> loss;  // L_app + L_r, entry 0 is the initial value
    std::vector<double> l_app;
    std::vector<double> lr;    // step size used for each accepted step
    int steps = 0;             // accepted steps
    int rejected = 0;          // halvings
    int clamped = 0;           // UV entries pulled back into [-1, 2]
    bool early_stop = false;
    double seconds = 0.0;
};

struct OptResult {
    UVMap uv;
    OptTrace trace;
};

// Gradient descent on L_app + L_r starting from `init`. Silhouette, part
// channel and background UVs are left untouched. Throws NumericalError
// ("divergence; reduce lr") if the loss stays above 10x its initial value for
// 50 consecutive steps.
OptResult optimize_uv(const UVMap& init, const Field2& image, const OptConfig& cfg = {});

}  // namespace uvweave
