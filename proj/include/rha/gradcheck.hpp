#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rha/tensor.hpp"

namespace rha {

// f builds a fresh forward pass on the given graph and returns a scalar
// loss; it must be deterministic (dropout off) and may read the tensors in
// params. Central finite differences with step eps are compared
// per-coordinate against the reverse-mode gradient. Relative error uses
// denominator max(|fd|, |grad|, 1e-8).

// Worst relative error per named parameter group, in input order.
std::vector<std::pair<std::string, double>> grad_check_groups(
    const std::function<TensorPtr(Graph&)>& f,
    const std::vector<std::pair<std::string, TensorPtr>>& params, double eps = 1e-5);

// Worst relative error over all coordinates of all params.
double grad_check(const std::function<TensorPtr(Graph&)>& f, const std::vector<TensorPtr>& params,
                  double eps = 1e-5);

}  // namespace rha
