#include "crys/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace crys {

GradCheckReport grad_check(ParamStore& store,
                           const std::function<double(bool with_grad)>& loss_fn,
                           double epsilon, double tolerance, int samples_per_param,
                           Rng& rng) {
    if (!(epsilon > 0.0)) throw ConfigError("grad_check epsilon must be > 0");
    if (!(tolerance > 0.0)) throw ConfigError("grad_check tolerance must be > 0");
    if (samples_per_param < 1) throw ConfigError("grad_check samples_per_param must be >= 1");

    GradCheckReport report;
    store.zero_grads();
    const double base = loss_fn(true);
    if (!std::isfinite(base)) {
        report.finite = false;
        return report;
    }

    for (const std::string& name : store.names()) {
        Tensor& p = store.at(name);
        const std::vector<double> analytic = p.grad;
        report.worst_by_param[name] = 0.0;

        std::vector<int> idx(p.values.size());
        std::iota(idx.begin(), idx.end(), 0);
        if (static_cast<int>(idx.size()) > samples_per_param) {
            rng.shuffle(idx);
            idx.resize(static_cast<std::size_t>(samples_per_param));
        }

        for (int k : idx) {
            const std::size_t u = static_cast<std::size_t>(k);
            const double orig = p.values[u];
            p.values[u] = orig + epsilon;
            const double lp = loss_fn(false);
            p.values[u] = orig - epsilon;
            const double lm = loss_fn(false);
            p.values[u] = orig;
            if (!std::isfinite(lp) || !std::isfinite(lm)) {
                report.finite = false;
                continue;
            }
            const double numeric = (lp - lm) / (2.0 * epsilon);
            const double a = analytic[u];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
            ++report.samples;
            double& worst = report.worst_by_param[name];
            worst = std::max(worst, rel);
            if (rel > report.worst_rel_error) {
                report.worst_rel_error = rel;
                report.worst_param = name;
            }
        }
    }

    store.zero_grads();
    report.pass = report.finite && report.worst_rel_error < tolerance;
    return report;
}

}  // namespace crys
