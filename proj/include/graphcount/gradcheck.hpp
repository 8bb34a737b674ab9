#pragma once

// Central finite-difference verification of every backward rule, plus the
// end-to-end joint loss with the discrete structures (graph adjacency,
// matching) held fixed.

#include <functional>
#include <string>
#include <vector>

#include "graphcount/tensor.hpp"

namespace graphcount {

// Rebuilds f on a fresh tape per evaluation. Compares the analytic gradient of
// every element of every tensor in wrt against (f(x+e)-f(x-e))/2e and returns
// the worst relative error |a-fd| / max(1, |a|, |fd|).
double max_rel_err_fd(const std::vector<Tensor>& wrt,
                      const std::function<Tensor(Tape&)>& f, double eps = 1e-6);

struct GradCheck {
    std::string name;
    double max_rel_err = 0.0;
    unsigned long long worst_seed = 0;
    bool pass = false;
};

// One named check per differentiable operation and per composite path,
// each evaluated over `seeds` random draws.
std::vector<GradCheck> gradcheck_suite(int seeds, double tol);

}  // namespace graphcount
