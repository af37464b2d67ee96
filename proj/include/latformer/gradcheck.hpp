#pragma once

#include "latformer/array.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace latformer::ad {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;   // coordinates excluded by the routing-flip filter
};

// Central differences against the analytic gradient for every listed leaf.
// `fwd` rebuilds the scalar loss from the leaves' current values. A coordinate
// is excluded when the discrete routing (gate masks, relu signs, max winners)
// differs between x +- margin_steps*step, i.e. when the point sits within
// margin_steps*step of a non-differentiable boundary. Relative error uses a
// max(1, |analytic|) denominator. When max_coords > 0, a deterministic random
// subset of that size is checked (spread over all leaves).
GradCheckReport grad_check_leaves(const std::function<Array()>& fwd,
                                  const std::vector<Array>& leaves,
                                  double step,
                                  double margin_steps = 10.0,
                                  std::size_t max_coords = 0,
                                  std::uint64_t subset_seed = 0);

// Single-input convenience form: fn maps a leaf to a scalar output.
GradCheckReport grad_check(const std::function<Array(const Array&)>& fn,
                           const Array& point, double step,
                           double margin_steps = 10.0);

} // namespace latformer::ad
