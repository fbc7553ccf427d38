#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "ul/rng.hpp"
#include "ul/tape.hpp"

namespace ul {

// Builds a scalar loss node on the tape from already-pushed parameter leaves.
template <class S>
using LossBuilder = std::function<typename TapeT<S>::Id(TapeT<S>&, const std::vector<typename TapeT<S>::Id>&)>;

struct GradCheckOptions {
    double step = 1e-3;            // central-difference step h
    int max_coords_per_param = 0;  // 0 = every coordinate
    uint64_t sample_seed = 0;      // coordinate subsampling stream
    // Coordinates where analytic and numeric are both below this magnitude
    // count as agreement: a finite difference cannot certify gradients under
    // its own noise floor. 0 disables the floor.
    double zero_floor = 0.0;
};

// Central-difference verification of the tape gradient.
// Returns max over checked coordinates of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <class S>
double finite_difference_check(const LossBuilder<S>& build_loss, std::vector<ArrayT<S>> params,
                               const GradCheckOptions& opts = {}) {
    auto eval = [&](const std::vector<ArrayT<S>>& ps, bool with_grad,
                    std::vector<ArrayT<S>>* grads_out) -> double {
        TapeT<S> tape;
        std::vector<typename TapeT<S>::Id> ids;
        ids.reserve(ps.size());
        for (const auto& p : ps) ids.push_back(tape.leaf(p, with_grad));
        auto root = build_loss(tape, ids);
        const auto& loss = tape.val(root);
        if (loss.numel() != 1) throw std::runtime_error("finite_difference_check: loss is not scalar");
        const double value = static_cast<double>(loss.v[0]);
        if (!std::isfinite(value)) throw std::runtime_error("finite_difference_check: non-finite loss");
        if (with_grad) {
            tape.backward(root);
            grads_out->clear();
            for (auto id : ids) grads_out->push_back(tape.grad(id));
        }
        return value;
    };

    std::vector<ArrayT<S>> analytic;
    eval(params, true, &analytic);

    Rng rng(opts.sample_seed);
    const double h = opts.step;
    double max_rel = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        const size_t n = params[pi].numel();
        std::vector<size_t> coords;
        if (opts.max_coords_per_param > 0 && n > static_cast<size_t>(opts.max_coords_per_param)) {
            for (int c = 0; c < opts.max_coords_per_param; ++c) coords.push_back(rng.below(n));
        } else {
            coords.resize(n);
            for (size_t c = 0; c < n; ++c) coords[c] = c;
        }
        for (size_t c : coords) {
            const S saved = params[pi].v[c];
            params[pi].v[c] = static_cast<S>(static_cast<double>(saved) + h);
            const double up = eval(params, false, nullptr);
            params[pi].v[c] = static_cast<S>(static_cast<double>(saved) - h);
            const double down = eval(params, false, nullptr);
            params[pi].v[c] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = static_cast<double>(analytic[pi].v[c]);
            if (std::abs(a) < opts.zero_floor && std::abs(numeric) < opts.zero_floor) continue;
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace ul
