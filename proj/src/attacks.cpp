#include "a2pd/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "a2pd/losses.hpp"

namespace a2pd {

void AttackSpec::validate() const {
    if (epsilon < 0.0) throw std::invalid_argument("AttackSpec: epsilon must be >= 0");
    if (steps < 1) throw std::invalid_argument("AttackSpec: steps must be >= 1");
    if (family == AttackFamily::Jsma && jsma_budget < 1)
        throw std::invalid_argument("AttackSpec: jsma_budget must be >= 1");
}

std::string AttackSpec::label() const {
    switch (family) {
    case AttackFamily::None: return "none";
    case AttackFamily::Fgsm: return "fgsm(eps=" + std::to_string(epsilon) + ")";
    case AttackFamily::Pgd:
        return "pgd(eps=" + std::to_string(epsilon) + ";k=" + std::to_string(steps) + ")";
    case AttackFamily::Jsma:
        return "jsma(eps=" + std::to_string(epsilon) + ";budget=" +
               std::to_string(jsma_budget) + ")";
    }
    return "?";
}

namespace {

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

Tensor as_row_matrix(const Tensor& obs) {
    return Tensor({1, obs.numel()},
                  std::vector<double>(obs.data(), obs.data() + obs.numel()));
}

Tensor as_vector(const Tensor& row) {
    return Tensor({row.numel()},
                  std::vector<double>(row.data(), row.data() + row.numel()));
}

} // namespace

Tensor ce_input_gradient(const PolicyNet& net, const Tensor& states,
                         std::span<const std::size_t> a_t) {
    Tape t;
    std::vector<Val> param_consts;
    for (const Tensor& p : net.params()) param_consts.push_back(t.constant(p));
    Val x = t.var(states);
    Val logits = mlp_logits(t, param_consts, x, Activation::Tanh);
    Val presc = prescription_rows(t, logits);
    Val root = t.sum(ce_rows(t, presc, a_t));
    Val wrt[] = {x};
    return t.backward(root, wrt)[0].value();
}

namespace {

Tensor pgd_batch_impl(const PolicyNet& net, const Tensor& states,
                      std::span<const std::size_t> a_t, double eps, int k,
                      GradProjection projection) {
    if (k < 1) throw std::invalid_argument("pgd: k must be >= 1");
    if (eps < 0.0) throw std::invalid_argument("pgd: eps must be >= 0");
    const double step = eps / double(k);
    Tensor cur = states;
    std::size_t batch = states.shape()[0], d = states.shape()[1];
    for (int it = 0; it < k; ++it) {
        Tensor g = ce_input_gradient(net, cur, a_t);
        for (std::size_t b = 0; b < batch; ++b) {
            double ginf = 0.0;
            if (projection == GradProjection::Renorm)
                for (std::size_t i = 0; i < d; ++i)
                    ginf = std::max(ginf, std::abs(g.at(b, i)));
            for (std::size_t i = 0; i < d; ++i) {
                double dir = projection == GradProjection::Sign
                                 ? sign0(g.at(b, i))
                                 : (ginf > 0.0 ? g.at(b, i) / ginf : 0.0);
                double v = cur.at(b, i) + step * dir;
                double lo = std::max(0.0, states.at(b, i) - eps);
                double hi = std::min(1.0, states.at(b, i) + eps);
                cur.at(b, i) = std::clamp(v, lo, hi);
            }
        }
    }
    return cur;
}

} // namespace

Tensor fgsm(const PolicyNet& net, const Tensor& obs, std::size_t a_t, double eps) {
    if (eps < 0.0) throw std::invalid_argument("fgsm: eps must be >= 0");
    std::size_t idx[] = {a_t};
    Tensor g = ce_input_gradient(net, as_row_matrix(obs), idx);
    Tensor out({obs.numel()});
    for (std::size_t i = 0; i < obs.numel(); ++i)
        out[i] = std::clamp(obs[i] + eps * sign0(g[i]), 0.0, 1.0);
    return out;
}

Tensor pgd(const PolicyNet& net, const Tensor& obs, std::size_t a_t, double eps, int k,
           GradProjection projection) {
    std::size_t idx[] = {a_t};
    return as_vector(pgd_batch_impl(net, as_row_matrix(obs), idx, eps, k, projection));
}

Tensor pgd_batch(const PolicyNet& net, const Tensor& states,
                 std::span<const std::size_t> a_t, double eps, int k,
                 GradProjection projection) {
    if (states.rank() != 2) throw std::invalid_argument("pgd_batch: states must be [B x d]");
    return pgd_batch_impl(net, states, a_t, eps, k, projection);
}

Tensor jsma(const PolicyNet& net, const Tensor& obs, std::size_t a_t, double eps,
            int budget) {
    if (budget < 1) throw std::invalid_argument("jsma: budget must be >= 1");
    if (eps < 0.0) throw std::invalid_argument("jsma: eps must be >= 0");
    std::size_t idx[] = {a_t};
    Tensor g = ce_input_gradient(net, as_row_matrix(obs), idx);
    std::vector<std::size_t> order(obs.numel());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(g[a]) > std::abs(g[b]);
    });
    Tensor out = obs;
    int touched = 0;
    for (std::size_t i : order) {
        if (touched >= budget) break;
        if (g[i] == 0.0) break; // zero-gradient coordinates have no ascent direction
        out[i] = std::clamp(obs[i] + eps * sign0(g[i]), 0.0, 1.0);
        ++touched;
    }
    return out;
}

Tensor apply_attack(const PolicyNet& net, const Tensor& obs, const AttackSpec& spec) {
    spec.validate();
    switch (spec.family) {
    case AttackFamily::None:
        return obs;
    case AttackFamily::Fgsm:
        return fgsm(net, obs, select_action(prescribe(net, obs)), spec.epsilon);
    case AttackFamily::Pgd:
        return pgd(net, obs, select_action(prescribe(net, obs)), spec.epsilon, spec.steps,
                   spec.projection);
    case AttackFamily::Jsma:
        return jsma(net, obs, select_action(prescribe(net, obs)), spec.epsilon,
                    spec.jsma_budget);
    }
    return obs;
}

} // namespace a2pd
