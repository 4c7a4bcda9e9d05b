#include "a2pd/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace a2pd {

void LossConfig::validate() const {
    if (!(eta > 0.0 && eta <= 1.0))
        throw std::invalid_argument("LossConfig: eta must be in (0,1]");
    if (beta < 0.0) throw std::invalid_argument("LossConfig: beta must be >= 0");
    if (smoothing < 0.0) throw std::invalid_argument("LossConfig: smoothing must be >= 0");
    if (log_base != 0.0 && log_base <= 1.0)
        throw std::invalid_argument("LossConfig: log_base must be 0 (natural) or > 1");
}

double LossConfig::log_scale() const {
    return log_base == 0.0 ? 1.0 : 1.0 / std::log(log_base);
}

namespace {

double log_scale_of(double base) { return base == 0.0 ? 1.0 : 1.0 / std::log(base); }

void check_action(const Prescription& p, std::size_t a_t, const char* who) {
    if (p.size() < 2) throw std::invalid_argument(std::string(who) + ": need >= 2 actions");
    if (a_t >= p.size()) throw std::invalid_argument(std::string(who) + ": action out of range");
}

} // namespace

double pgm_loss(const Prescription& p, std::size_t a_t, double eta, double log_base) {
    check_action(p, a_t, "pgm_loss");
    if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("pgm_loss: eta must be in (0,1]");
    double c = p[a_t];
    // direct sum instead of 1-c: avoids cancellation when c is near 1
    double rest = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a)
        if (a != a_t) rest += p[a];
    double h = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
        if (a == a_t) continue;
        double q = p[a] / rest;
        if (q > 0.0) h -= q * std::log(q);
    }
    return -std::pow(c, eta) * h * log_scale_of(log_base);
}

double ce_loss(const Prescription& p, std::size_t a_t, double log_base) {
    if (a_t >= p.size()) throw std::invalid_argument("ce_loss: action out of range");
    return -std::log(p[a_t]) * log_scale_of(log_base);
}

double kl_pd_loss(const Prescription& student, const Prescription& teacher, double log_base) {
    if (student.size() != teacher.size())
        throw std::invalid_argument("kl_pd_loss: prescription sizes differ");
    double kl = 0.0;
    for (std::size_t a = 0; a < student.size(); ++a)
        kl += teacher[a] * (std::log(teacher[a]) - std::log(student[a]));
    return std::max(kl, 0.0) * log_scale_of(log_base);
}

Val pgm_rows(Tape& t, Val prescriptions, std::span<const std::size_t> a_t,
             double eta, double log_base) {
    const Tensor& p = prescriptions.value();
    if (p.rank() != 2 || p.shape()[1] < 2)
        throw std::invalid_argument("pgm_rows: expected [B x A] with A >= 2");
    std::size_t batch = p.shape()[0], na = p.shape()[1];
    if (a_t.size() != batch) throw std::invalid_argument("pgm_rows: action count != batch");

    std::vector<std::size_t> idx(a_t.begin(), a_t.end());
    Val c = t.pick_rows(prescriptions, idx);
    Tensor mask = Tensor::full({batch, na}, 1.0);
    for (std::size_t b = 0; b < batch; ++b) mask.at(b, idx[b]) = 0.0;
    Val masked = t.mul(prescriptions, t.constant(std::move(mask)));
    // renormalizer as the direct non-target sum (equals 1-c, better conditioned)
    Val inv_rest = t.pow_c(t.row_sum(masked), -1.0);
    Val q = t.mul(masked, t.bcols(inv_rest, na));
    Val entropy = t.neg(t.row_sum(t.xlogx(q)));
    Val pgm = t.neg(t.mul(t.pow_c(c, eta), entropy));
    double sc = log_scale_of(log_base);
    return sc == 1.0 ? pgm : t.scale(pgm, sc);
}

Val ce_rows(Tape& t, Val prescriptions, std::span<const std::size_t> a_t, double log_base) {
    const Tensor& p = prescriptions.value();
    if (p.rank() != 2) throw std::invalid_argument("ce_rows: expected [B x A]");
    if (a_t.size() != p.shape()[0]) throw std::invalid_argument("ce_rows: action count != batch");
    std::vector<std::size_t> idx(a_t.begin(), a_t.end());
    Val ce = t.neg(t.log(t.pick_rows(prescriptions, idx)));
    double sc = log_scale_of(log_base);
    return sc == 1.0 ? ce : t.scale(ce, sc);
}

Val kl_rows(Tape& t, Val student_prescriptions, const Tensor& teacher_prescriptions,
            double log_base) {
    const Tensor& s = student_prescriptions.value();
    if (!s.same_shape(teacher_prescriptions))
        throw std::invalid_argument("kl_rows: student/teacher shape mismatch");
    std::size_t batch = s.shape()[0];
    Tensor tlogt({batch});
    for (std::size_t b = 0; b < batch; ++b) {
        double acc = 0.0;
        for (std::size_t a = 0; a < s.shape()[1]; ++a) {
            double tv = teacher_prescriptions.at(b, a);
            acc += tv * std::log(tv);
        }
        tlogt[b] = acc;
    }
    Val cross = t.row_sum(t.mul(t.constant(teacher_prescriptions), t.log(student_prescriptions)));
    Val kl = t.sub(t.constant(std::move(tlogt)), cross);
    double sc = log_scale_of(log_base);
    return sc == 1.0 ? kl : t.scale(kl, sc);
}

A2pdBatch a2pd_batch_objective(std::span<const Tensor> params, const Tensor& states,
                               std::span<const std::size_t> a_t, const LossConfig& cfg,
                               bool force_jr) {
    cfg.validate();
    if (states.rank() != 2) throw std::invalid_argument("a2pd_batch_objective: states must be [B x d]");
    std::size_t batch = states.shape()[0];

    A2pdBatch out;
    out.tape = std::make_unique<Tape>();
    Tape& t = *out.tape;
    for (const Tensor& p : params) out.param_vars.push_back(t.var(p));
    Val x = t.var(states);
    Val logits = mlp_logits(t, out.param_vars, x, Activation::Tanh);
    Val presc = prescription_rows(t, logits);
    Val pgm_b = pgm_rows(t, presc, a_t, cfg.eta, cfg.log_base);
    // summing (not averaging) keeps row b of d(sum)/d(states) equal to the
    // per-sample input gradient the JR norm is defined on
    Val pgm_sum = t.sum(pgm_b);
    out.pgm_mean = pgm_sum.value()[0] / double(batch);

    Val objective = t.scale(pgm_sum, 1.0 / double(batch));
    if (cfg.beta != 0.0 || force_jr) {
        Val wrt[] = {x};
        Val gx = t.backward(pgm_sum, wrt)[0];
        Val sq = t.row_sum(t.mul(gx, gx));
        Val jr_b = cfg.squared_norm ? t.add_c(sq, cfg.smoothing)
                                    : t.pow_c(t.add_c(sq, cfg.smoothing), 0.5);
        Val jr_sum = t.sum(jr_b);
        out.jr_mean = jr_sum.value()[0] / double(batch);
        if (cfg.beta != 0.0)
            objective = t.add(objective, t.scale(jr_sum, cfg.beta / double(batch)));
    }
    out.objective = objective;
    out.total = objective.value()[0];
    return out;
}

double jr_loss(const PolicyNet& net, const Tensor& obs, std::size_t a_t,
               const LossConfig& cfg) {
    cfg.validate();
    if (a_t >= net.num_actions()) throw std::invalid_argument("jr_loss: action out of range");
    Tensor row({1, obs.numel()}, std::vector<double>(obs.data(), obs.data() + obs.numel()));
    std::size_t idx[] = {a_t};
    LossConfig probe = cfg;
    A2pdBatch b = a2pd_batch_objective(net.params(), row, idx, probe, /*force_jr=*/true);
    return b.jr_mean;
}

A2pdParts a2pd_loss(const PolicyNet& net, const Tensor& obs, std::size_t a_t,
                    const LossConfig& cfg) {
    cfg.validate();
    Tensor row({1, obs.numel()}, std::vector<double>(obs.data(), obs.data() + obs.numel()));
    std::size_t idx[] = {a_t};
    A2pdBatch b = a2pd_batch_objective(net.params(), row, idx, cfg, /*force_jr=*/true);
    A2pdParts parts;
    parts.pgm = b.pgm_mean;
    parts.jr = b.jr_mean;
    parts.total = b.pgm_mean + cfg.beta * b.jr_mean;
    return parts;
}

} // namespace a2pd
