#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "a2pd/losses.hpp"
#include "a2pd/policy.hpp"
#include "a2pd/rng.hpp"
#include "oracles.hpp"

using namespace a2pd;

namespace {

Prescription clamped(std::vector<double> probs) {
    double s = 0.0;
    for (double& v : probs) {
        v = std::clamp(v, kProbClamp, 1.0 - kProbClamp);
        s += v;
    }
    for (double& v : probs) v /= s;
    return Prescription{std::move(probs)};
}

PolicyNet zero_net(std::vector<std::size_t> sizes) {
    Rng rng(0);
    PolicyNet net(std::move(sizes), rng);
    for (Tensor& p : net.params_mut())
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] = 0.0;
    return net;
}

} // namespace

TEST_CASE("pgm_loss: all non-target mass on one action means zero entropy") {
    // raw zeros: exact
    CHECK(pgm_loss(Prescription{{0.4, 0.6, 0.0, 0.0}}, 0, 1.0 / 3.0) == 0.0);
    // after clamping the zeros carry 1e-6 each; the loss stays ~0
    CHECK(std::abs(pgm_loss(clamped({0.4, 0.6, 0.0, 0.0}), 0, 1.0 / 3.0)) < 1e-3);
}

TEST_CASE("pgm_loss: frozen values from direct evaluation") {
    // C = 0.4, non-target uniform: -0.4^(1/3) * ln 3
    double expected = -std::pow(0.4, 1.0 / 3.0) * std::log(3.0);
    CHECK(expected == doctest::Approx(-0.8095).epsilon(2e-4));
    CHECK(pgm_loss(Prescription{{0.4, 0.2, 0.2, 0.2}}, 0, 1.0 / 3.0) ==
          doctest::Approx(expected).epsilon(1e-12));

    // uniform over 4, eta = 1: -0.25 * ln 3
    CHECK(pgm_loss(Prescription{{0.25, 0.25, 0.25, 0.25}}, 0, 1.0) ==
          doctest::Approx(-0.25 * std::log(3.0)).epsilon(1e-12));

    // general random prescriptions against the straight-line formula
    Rng rng(17);
    for (int i = 0; i < 100; ++i) {
        std::size_t na = 2 + rng.below(5);
        std::vector<double> logits(na);
        for (double& v : logits) v = rng.uniform(-4.0, 4.0);
        Prescription p = softmax_prescription(logits);
        std::size_t a_t = rng.below(na);
        double eta = rng.uniform(0.1, 1.0);
        CHECK(pgm_loss(p, a_t, eta) ==
              doctest::Approx(oracle::pgm_direct(p.probs, a_t, eta)).epsilon(1e-12));
    }
}

TEST_CASE("pgm_loss bounds: within [-log(|A|-1), 0] for clamped prescriptions") {
    Rng rng(23);
    for (int i = 0; i < 500; ++i) {
        std::size_t na = 2 + rng.below(7);
        std::vector<double> logits(na);
        for (double& v : logits) v = rng.uniform(-25.0, 25.0);
        Prescription p = softmax_prescription(logits);
        double v = pgm_loss(p, rng.below(na), rng.uniform(0.05, 1.0));
        // saturated prescriptions sit on the bounds up to rounding
        CHECK(v <= 1e-12);
        CHECK(v >= -std::log(double(na - 1)) - 1e-12);
    }
    CHECK_THROWS_AS((void)pgm_loss(Prescription{{1.0}}, 0, 0.5), std::invalid_argument);
}

TEST_CASE("pgm_loss with a log base rescales by 1/ln(base)") {
    Prescription p{{0.4, 0.2, 0.2, 0.2}};
    double nat = pgm_loss(p, 0, 0.5);
    double base2 = pgm_loss(p, 0, 0.5, 2.0);
    CHECK(base2 == doctest::Approx(nat / std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("fixed target probability: entropy ascent flattens the non-target simplex") {
    // C fixed at 0.4, |A| = 4: projected descent on pgm_loss converges to
    // the uniform non-target distribution; gap hits (|A|C-1)/(|A|-1)
    const double c = 0.4;
    const std::size_t na = 4, a_t = 0;
    std::vector<double> x{0.55, 0.04, 0.01}; // non-target probs, sum 0.6
    auto loss_of = [&](const std::vector<double>& nt) {
        Prescription p{{c, nt[0], nt[1], nt[2]}};
        return pgm_loss(p, a_t, 1.0 / 3.0);
    };
    for (int it = 0; it < 4000; ++it) {
        auto g = oracle::central_diff(loss_of, x, 1e-6);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] -= 0.05 * g[i];
        x = oracle::project_to_simplex(x, 1.0 - c);
    }
    for (double v : x) CHECK(std::abs(v - 0.2) < 1e-6);
    Prescription p{{c, x[0], x[1], x[2]}};
    CHECK(action_gap(p, a_t) ==
          doctest::Approx((double(na) * c - 1.0) / double(na - 1)).epsilon(1e-7));
}

TEST_CASE("jr_loss: constant net has only the smoothing floor") {
    PolicyNet net = zero_net({4, 3});
    LossConfig cfg;
    double v = jr_loss(net, Tensor({4}, {0.1, 0.2, 0.3, 0.4}), 0, cfg);
    CHECK(v <= std::sqrt(cfg.smoothing) + 1e-15);
}

TEST_CASE("jr_loss: random policy matches the finite-difference norm") {
    Rng rng(11);
    PolicyNet net({4, 6, 3}, rng);
    std::vector<double> x{0.2, 0.8, 0.5, 0.3};
    LossConfig cfg;
    double analytic = jr_loss(net, Tensor({4}, std::vector<double>(x.begin(), x.end())), 1, cfg);

    auto fd = oracle::central_diff(
        [&](const std::vector<double>& xv) {
            auto p = oracle::softmax_clamped(oracle::mlp_forward(net.params(), xv));
            return oracle::pgm_direct(p, 1, cfg.eta);
        },
        x);
    double sq = cfg.smoothing;
    for (double v : fd) sq += v * v;
    CHECK(analytic == doctest::Approx(std::sqrt(sq)).epsilon(1e-4));
}

TEST_CASE("a2pd_loss composition") {
    Rng rng(29);
    PolicyNet net({3, 5, 4}, rng);
    Tensor obs({3}, {0.3, 0.6, 0.9});

    LossConfig with_jr;
    with_jr.beta = 0.01;
    A2pdParts parts = a2pd_loss(net, obs, 2, with_jr);
    CHECK(parts.total == doctest::Approx(parts.pgm + 0.01 * parts.jr).epsilon(1e-15));
    CHECK(parts.jr > 0.0);

    LossConfig no_jr;
    no_jr.beta = 0.0;
    A2pdParts base = a2pd_loss(net, obs, 2, no_jr);
    CHECK(base.total == doctest::Approx(base.pgm).epsilon(1e-15));

    // constant net: jr collapses to the smoothing floor, total ~ pgm
    PolicyNet flat = zero_net({3, 4});
    A2pdParts fparts = a2pd_loss(flat, obs, 0, with_jr);
    CHECK(fparts.total == doctest::Approx(fparts.pgm).epsilon(1e-7));

    // component arithmetic at the documented operating point
    CHECK(-0.8095 + 0.01 * 0.25 == doctest::Approx(-0.8070).epsilon(1e-12));
}

TEST_CASE("ce_loss values") {
    CHECK(ce_loss(Prescription{{1.0 - kProbClamp, kProbClamp}}, 0) ==
          doctest::Approx(0.0).epsilon(1e-5));
    CHECK(ce_loss(Prescription{{0.5, 0.5}}, 0) == doctest::Approx(std::log(2.0)));
    CHECK(ce_loss(Prescription{{0.25, 0.75}}, 0) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("kl_pd_loss values") {
    Prescription u{{0.5, 0.5}};
    CHECK(kl_pd_loss(u, u) == 0.0);
    Prescription teacher = clamped({1.0, 0.0});
    double v = kl_pd_loss(u, teacher);
    CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-4));
    Prescription u4{{0.25, 0.25, 0.25, 0.25}};
    CHECK(kl_pd_loss(u4, u4) == 0.0);
    // non-negative over random pairs
    Rng rng(31);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> a(3), b(3);
        for (double& x : a) x = rng.uniform(-3.0, 3.0);
        for (double& x : b) x = rng.uniform(-3.0, 3.0);
        double kl = kl_pd_loss(softmax_prescription(a), softmax_prescription(b));
        CHECK(kl >= 0.0);
    }
}

TEST_CASE("batched rows agree with the scalar entry points") {
    Rng rng(41);
    PolicyNet net({4, 5, 3}, rng);
    std::size_t batch = 6;
    Tensor x({batch, 4});
    std::vector<std::size_t> a_t(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < 4; ++j) x.at(b, j) = rng.uniform();
        a_t[b] = rng.below(3);
    }
    Tape t;
    std::vector<Val> pv;
    for (const Tensor& p : net.params()) pv.push_back(t.constant(p));
    Val presc = prescription_rows(t, mlp_logits(t, pv, t.var(x), Activation::Tanh));
    Val pgm_b = pgm_rows(t, presc, a_t, 1.0 / 3.0);
    Val ce_b = ce_rows(t, presc, a_t);
    for (std::size_t b = 0; b < batch; ++b) {
        Tensor row({4});
        for (std::size_t j = 0; j < 4; ++j) row[j] = x.at(b, j);
        Prescription p = prescribe(net, row);
        CHECK(pgm_b.value()[b] == doctest::Approx(pgm_loss(p, a_t[b], 1.0 / 3.0)).epsilon(1e-12));
        CHECK(ce_b.value()[b] == doctest::Approx(ce_loss(p, a_t[b])).epsilon(1e-12));
    }

    LossConfig cfg;
    cfg.beta = 0.01;
    A2pdBatch ab = a2pd_batch_objective(net.params(), x, a_t, cfg);
    double pgm_mean = 0.0, jr_mean = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        Tensor row({4});
        for (std::size_t j = 0; j < 4; ++j) row[j] = x.at(b, j);
        Prescription p = prescribe(net, row);
        pgm_mean += pgm_loss(p, a_t[b], cfg.eta);
        jr_mean += jr_loss(net, row, a_t[b], cfg);
    }
    pgm_mean /= double(batch);
    jr_mean /= double(batch);
    CHECK(ab.pgm_mean == doctest::Approx(pgm_mean).epsilon(1e-10));
    CHECK(ab.jr_mean == doctest::Approx(jr_mean).epsilon(1e-10));
    CHECK(ab.total == doctest::Approx(pgm_mean + cfg.beta * jr_mean).epsilon(1e-10));
}

TEST_CASE("first-order robustness bound: |L(s+d) - L(s)| via the jr norm") {
    Rng rng(53);
    PolicyNet net({5, 7, 4}, rng);
    std::vector<double> x{0.4, 0.6, 0.2, 0.8, 0.5};
    Tensor obs({5}, std::vector<double>(x.begin(), x.end()));
    std::size_t a_t = 1;
    LossConfig cfg;
    double jr = jr_loss(net, obs, a_t, cfg);
    auto g = oracle::pgm_input_grad(net.params(), x, a_t, cfg.eta);

    auto loss_at = [&](const std::vector<double>& xv) {
        auto p = oracle::softmax_clamped(oracle::mlp_forward(net.params(), xv));
        return oracle::pgm_direct(p, a_t, cfg.eta);
    };
    double l0 = loss_at(x);
    const double eps = 1e-3;
    const double sqrt_d = std::sqrt(5.0);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> delta(5), xp = x;
        for (std::size_t j = 0; j < 5; ++j) {
            delta[j] = rng.uniform(-eps, eps);
            xp[j] += delta[j];
        }
        // the linear term obeys Cauchy-Schwarz against the smoothed norm
        double lin = 0.0;
        for (std::size_t j = 0; j < 5; ++j) lin += delta[j] * g[j];
        CHECK(std::abs(lin) <= eps * sqrt_d * jr + 1e-12);

        // and the remainder decays quadratically in the perturbation size
        double r_full = std::abs(loss_at(xp) - l0 - lin);
        std::vector<double> xh = x;
        double lin_h = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            xh[j] += 0.5 * delta[j];
            lin_h += 0.5 * delta[j] * g[j];
        }
        double r_half = std::abs(loss_at(xh) - l0 - lin_h);
        CHECK(r_half <= 0.35 * r_full + 1e-10);
    }
}

TEST_CASE("config validation") {
    LossConfig bad;
    bad.eta = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.eta = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.eta = 1.0; // boundary included
    CHECK_NOTHROW(bad.validate());
    bad.beta = -0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
