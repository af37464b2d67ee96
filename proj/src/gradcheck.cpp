#include "latformer/gradcheck.hpp"

#include "latformer/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace latformer::ad {

namespace {

double eval_value(const std::function<Array()>& fwd) {
    InferenceMode guard;
    return fwd().item();
}

std::uint64_t eval_routing(const std::function<Array()>& fwd) {
    InferenceMode guard;
    RoutingTrace trace;
    (void)fwd().item();
    return trace.hash();
}

} // namespace

GradCheckReport grad_check_leaves(const std::function<Array()>& fwd,
                                  const std::vector<Array>& leaves,
                                  double step, double margin_steps,
                                  std::size_t max_coords,
                                  std::uint64_t subset_seed) {
    if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
    for (const auto& l : leaves)
        if (!l.requires_grad() || !l.node()->is_leaf())
            throw std::invalid_argument("grad_check: all checked arrays must be "
                                        "requires_grad leaves");

    // Analytic pass.
    std::vector<std::vector<double>> analytic(leaves.size());
    {
        for (const auto& l : leaves) const_cast<Array&>(l).zero_grad();
        Array loss = fwd();
        backward(loss);
        for (std::size_t i = 0; i < leaves.size(); ++i)
            analytic[i] = leaves[i].grad();
    }

    // Candidate coordinates, optionally subsampled (deterministically).
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t li = 0; li < leaves.size(); ++li)
        for (std::size_t ci = 0; ci < leaves[li].size(); ++ci)
            coords.emplace_back(li, ci);
    if (max_coords > 0 && coords.size() > max_coords) {
        rng::SplitMix64 g(rng::derive(subset_seed, "gradcheck-subset"));
        g.shuffle(coords);
        coords.resize(max_coords);
        std::sort(coords.begin(), coords.end());
    }

    GradCheckReport rep;
    const double margin = margin_steps * step;
    for (const auto& [li, ci] : coords) {
        auto& value = const_cast<Array&>(leaves[li]).leaf_value();
        const double saved = value[ci];

        value[ci] = saved + margin;
        const std::uint64_t sig_hi = eval_routing(fwd);
        value[ci] = saved - margin;
        const std::uint64_t sig_lo = eval_routing(fwd);
        if (sig_hi != sig_lo) {
            value[ci] = saved;
            ++rep.skipped;
            continue;
        }

        value[ci] = saved + step;
        const double f_hi = eval_value(fwd);
        value[ci] = saved - step;
        const double f_lo = eval_value(fwd);
        value[ci] = saved;

        const double numeric = (f_hi - f_lo) / (2.0 * step);
        const double a = analytic[li][ci];
        const double rel = std::abs(numeric - a) / std::max(1.0, std::abs(a));
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
        ++rep.checked;
    }
    return rep;
}

GradCheckReport grad_check(const std::function<Array(const Array&)>& fn,
                           const Array& point, double step, double margin_steps) {
    return grad_check_leaves([&] { return fn(point); }, {point}, step, margin_steps);
}

} // namespace latformer::ad
