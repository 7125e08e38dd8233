#pragma once

// Finite-difference gradient harness. The engine computes a loss and analytic
// gradients in float32; an independently written double-precision replica of
// the same loss is differentiated by central differences and the two are
// compared coordinate by coordinate.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <synthval/rng.hpp>
#include <synthval/tensor.hpp>

#include "oracle/refd.hpp"

namespace oracle {

using Params = std::map<std::string, refd::vecd>;

struct FdReport {
    double max_rel_err = 0.0;
    int checked = 0;
    std::string worst_name;
    int worst_index = -1;
    double worst_fd = 0.0, worst_analytic = 0.0;
};

/// `named` carries the engine's analytic gradients (backward() already run).
/// `loss_d` evaluates the double-precision replica on perturbed values.
/// Probes up to `samples` coordinates per tensor, chosen deterministically.
inline FdReport compare_gradients(
    const std::vector<std::pair<std::string, synthval::Tensor>>& named,
    const std::function<double(const Params&)>& loss_d, int samples, double h,
    synthval::Rng& rng) {
    Params base;
    for (const auto& [name, t] : named) {
        refd::vecd v(t.values().begin(), t.values().end());
        base[name] = std::move(v);
    }

    FdReport rep;
    Params work = base;
    for (const auto& [name, t] : named) {
        const auto grad = t.grad();
        const int n = static_cast<int>(grad.size());
        const int probes = std::min(samples, n);
        for (int s = 0; s < probes; ++s) {
            const int i = (probes == n) ? s : rng.uniform_int(0, n - 1);
            refd::vecd& pv = work[name];
            const double orig = pv[(size_t)i];
            pv[(size_t)i] = orig + h;
            const double lp = loss_d(work);
            pv[(size_t)i] = orig - h;
            const double lm = loss_d(work);
            pv[(size_t)i] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = grad[(size_t)i];
            const double denom = std::max({1e-4, std::fabs(fd), std::fabs(an)});
            const double rel = std::fabs(fd - an) / denom;
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_name = name;
                rep.worst_index = i;
                rep.worst_fd = fd;
                rep.worst_analytic = an;
            }
        }
    }
    return rep;
}

}  // namespace oracle
