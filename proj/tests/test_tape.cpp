#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "a2pd/losses.hpp"
#include "a2pd/policy.hpp"
#include "a2pd/rng.hpp"
#include "a2pd/tape.hpp"
#include "oracles.hpp"

using namespace a2pd;

namespace {

PolicyNet random_net(std::vector<std::size_t> sizes, std::uint64_t seed) {
    Rng rng(seed);
    return PolicyNet(std::move(sizes), rng);
}

std::vector<double> flatten(std::span<const Tensor> ts) {
    std::vector<double> out;
    for (const Tensor& t : ts)
        out.insert(out.end(), t.data(), t.data() + t.numel());
    return out;
}

// pgm loss of a net at (x, a_t) evaluated straight-line; used as the
// finite-difference target below.
double pgm_of_net(std::span<const Tensor> params, const std::vector<double>& x,
                  std::size_t a_t, double eta) {
    auto p = oracle::softmax_clamped(oracle::mlp_forward(params, x));
    return oracle::pgm_direct(p, a_t, eta);
}

} // namespace

TEST_CASE("forward_record: identity single layer reproduces its input") {
    // weights = I, bias = 0
    Tensor w({2, 2}, {1, 0, 0, 1});
    Tensor b({2});
    std::vector<Tensor> params{w, b};
    Tensor input({2}, {0.3, 0.7});
    auto rec = forward_record(params, input);
    CHECK(rec.output.value().numel() == 2);
    CHECK(rec.output.value()[0] == doctest::Approx(0.3));
    CHECK(rec.output.value()[1] == doctest::Approx(0.7));
}

TEST_CASE("forward_record: zero weights yield the bias vector") {
    Tensor w({3, 2});
    Tensor b({3}, {0.5, -1.0, 2.0});
    std::vector<Tensor> params{w, b};
    Tensor input({2}, {0.9, 0.1});
    auto rec = forward_record(params, input);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(rec.output.value()[i] == doctest::Approx(b[i]));
}

TEST_CASE("forward_record: random two-layer net matches straight-line evaluation") {
    PolicyNet net = random_net({4, 6, 3}, 7);
    Tensor input = Tensor::full({4}, 0.5);
    auto rec = forward_record(net.params(), input);
    auto ref = oracle::mlp_forward(net.params(), {0.5, 0.5, 0.5, 0.5});
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(rec.output.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    // recorded tape replays to the eager result bit for bit
    Tensor in_mat({1, 4}, {0.5, 0.5, 0.5, 0.5});
    Tensor eager = mlp_logits_eager(net.params(), in_mat, Activation::Tanh);
    CHECK(std::memcmp(rec.output.value().data(), eager.data(), 3 * sizeof(double)) == 0);
}

TEST_CASE("grad: square and constant") {
    Tape t;
    Val x = t.var(Tensor::scalar(3.0));
    Val y = t.mul(x, x);
    Val wrt[] = {x};
    auto g = grad(t, y, wrt);
    CHECK(g[0][0] == doctest::Approx(6.0));

    Tape t2;
    Val x2 = t2.var(Tensor::scalar(3.0));
    Val c = t2.constant(Tensor::scalar(5.0));
    Val root = t2.mul(c, c);
    Val wrt2[] = {x2};
    auto g2 = grad(t2, root, wrt2);
    CHECK(g2[0][0] == 0.0);
}

TEST_CASE("grad: errors on non-scalar roots and foreign variables") {
    Tape t;
    Val v = t.var(Tensor({3}, {1, 2, 3}));
    Val wrt[] = {v};
    CHECK_THROWS_AS((void)t.backward(v, wrt), std::invalid_argument);

    Tape other;
    Val w = other.var(Tensor::scalar(1.0));
    Val root = t.sum(v);
    Val wrt2[] = {w};
    CHECK_THROWS_AS((void)t.backward(root, wrt2), std::invalid_argument);
}

TEST_CASE("every primitive composite: gradients match central differences") {
    // gradient of the full pgm pipeline wrt the input state, random nets.
    // |A| >= 3 keeps the loss non-constant; the two-action case (loss
    // identically zero) is asserted separately below.
    Rng meta(2024);
    int cases = 0;
    int matched = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::size_t d = 2 + meta.below(5);
        std::size_t h = 3 + meta.below(6);
        std::size_t na = 3 + meta.below(3);
        PolicyNet net = random_net({d, h, na}, 1000 + seed);
        std::vector<double> x(d);
        for (double& v : x) v = meta.uniform(0.05, 0.95);
        std::size_t a_t = meta.below(na);
        double eta = 1.0 / 3.0;

        Tape t;
        std::vector<Val> pv;
        for (const Tensor& p : net.params()) pv.push_back(t.var(p));
        Val xs = t.var(Tensor({1, d}, std::vector<double>(x.begin(), x.end())));
        Val presc = prescription_rows(t, mlp_logits(t, pv, xs, Activation::Tanh));
        std::size_t idx[] = {a_t};
        Val root = t.sum(pgm_rows(t, presc, idx, eta));
        Val wrt[] = {xs};
        auto g = grad(t, root, wrt);

        auto fd = oracle::central_diff(
            [&](const std::vector<double>& xv) { return pgm_of_net(net.params(), xv, a_t, eta); },
            x);
        auto hand = oracle::pgm_input_grad(net.params(), x, a_t, eta);
        bool ok = oracle::grad_matches(std::span(g[0].data(), d), fd, 1e-5) &&
                  oracle::grad_matches(std::span(g[0].data(), d), hand, 1e-9, 1e-12);
        if (ok) ++matched;
        ++cases;
    }
    CHECK(cases == 100);
    CHECK(matched == cases);
}

TEST_CASE("two-action prescriptions make the gap loss identically zero") {
    // single non-target action: the renormalized distribution is a point
    // mass, so the entropy term vanishes for every input
    Rng meta(31);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        PolicyNet net = random_net({3, 5, 2}, 400 + seed);
        std::vector<double> x{meta.uniform(), meta.uniform(), meta.uniform()};
        Tape t;
        std::vector<Val> pv;
        for (const Tensor& p : net.params()) pv.push_back(t.var(p));
        Val xs = t.var(Tensor({1, 3}, std::vector<double>(x.begin(), x.end())));
        Val presc = prescription_rows(t, mlp_logits(t, pv, xs, Activation::Tanh));
        std::size_t idx[] = {seed % 2};
        Val root = t.sum(pgm_rows(t, presc, idx, 0.5));
        CHECK(std::abs(root.value()[0]) < 1e-12);
        Val wrt[] = {xs};
        auto g = grad(t, root, wrt);
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(g[0][i]) < 1e-9);
    }
}

TEST_CASE("grad_of_grad_norm: bilinear toy has sign(theta) parameter gradient") {
    Tape t;
    Val s = t.var(Tensor::scalar(0.8));
    Val theta = t.var(Tensor::scalar(2.0));
    Val root = t.mul(s, theta);
    Val inner[] = {s};
    Val outer[] = {theta};
    auto res = grad_of_grad_norm(t, root, inner, outer, 1e-12);
    CHECK(res.norm == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(res.outer_grads[0][0] == doctest::Approx(1.0).epsilon(1e-6));

    Tape t2;
    Val s2 = t2.var(Tensor::scalar(0.8));
    Val th2 = t2.var(Tensor::scalar(-2.0));
    Val root2 = t2.mul(s2, th2);
    Val inner2[] = {s2};
    Val outer2[] = {th2};
    auto res2 = grad_of_grad_norm(t2, root2, inner2, outer2, 1e-12);
    CHECK(res2.outer_grads[0][0] == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("grad_of_grad_norm: identically zero inner gradient") {
    // root does not depend on s at all
    Tape t;
    Val s = t.var(Tensor::scalar(0.4));
    Val theta = t.var(Tensor::scalar(1.5));
    Val root = t.mul(theta, theta);
    Val inner[] = {s};
    Val outer[] = {theta};
    auto res = grad_of_grad_norm(t, root, inner, outer, 1e-12);
    CHECK(res.norm == doctest::Approx(1e-6).epsilon(1e-9)); // sqrt(smoothing)
    CHECK(res.outer_grads[0][0] == 0.0);
}

TEST_CASE("grad_of_grad_norm: 3-4-5 input gradient") {
    Tape t;
    Val s = t.var(Tensor({2}, {0.5, 0.25}));
    Val coeff = t.constant(Tensor({2}, {3.0, 4.0}));
    Val root = t.sum(t.mul(s, coeff));
    Val inner[] = {s};
    std::span<const Val> outer;
    auto res = grad_of_grad_norm(t, root, inner, outer, 0.0);
    CHECK(res.norm == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("grad_of_grad_norm: matches finite differences of the norm on real policies") {
    Rng meta(555);
    int matched = 0;
    int cases = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::size_t d = 2 + meta.below(4);
        std::size_t h = 3 + meta.below(4);
        std::size_t na = 3 + meta.below(3);
        PolicyNet net = random_net({d, h, na}, 9000 + seed);
        std::vector<double> x(d);
        for (double& v : x) v = meta.uniform(0.1, 0.9);
        std::size_t a_t = meta.below(na);
        const double eta = 1.0 / 3.0, smoothing = 1e-12;

        Tape t;
        std::vector<Val> pv;
        for (const Tensor& p : net.params()) pv.push_back(t.var(p));
        Val xs = t.var(Tensor({1, d}, std::vector<double>(x.begin(), x.end())));
        Val presc = prescription_rows(t, mlp_logits(t, pv, xs, Activation::Tanh));
        std::size_t idx[] = {a_t};
        Val root = t.sum(pgm_rows(t, presc, idx, eta));
        Val inner[] = {xs};
        auto res = grad_of_grad_norm(t, root, inner, pv, smoothing);
        std::vector<double> analytic = flatten(res.outer_grads);

        // finite differences of the smoothed norm with respect to theta;
        // the inner input gradient comes from the hand-written backprop
        std::vector<double> theta0 = flatten(net.params());
        auto norm_at = [&](const std::vector<double>& th) {
            PolicyNet probe = net;
            std::size_t off = 0;
            for (Tensor& p : probe.params_mut()) {
                for (std::size_t i = 0; i < p.numel(); ++i) p[i] = th[off + i];
                off += p.numel();
            }
            auto g = oracle::pgm_input_grad(probe.params(), x, a_t, eta);
            double sq = smoothing;
            for (double v : g) sq += v * v;
            return std::sqrt(sq);
        };
        auto fd = oracle::central_diff(norm_at, theta0, 1e-5);
        if (oracle::grad_matches(analytic, fd, 1e-4, 1e-8)) ++matched;
        ++cases;
    }
    CHECK(cases == 50);
    CHECK(matched == cases);
}

TEST_CASE("backward visits each reachable node exactly once and twice-built tapes stay valid") {
    PolicyNet net = random_net({3, 5, 2}, 42);
    Tensor x({1, 3}, {0.2, 0.5, 0.8});
    Tape t;
    std::vector<Val> pv;
    for (const Tensor& p : net.params()) pv.push_back(t.var(p));
    Val xs = t.var(x);
    Val presc = prescription_rows(t, mlp_logits(t, pv, xs, Activation::Tanh));
    std::size_t idx[] = {0};
    Val root = t.sum(pgm_rows(t, presc, idx, 0.5));

    std::size_t before = t.size();
    Val wrt[] = {xs};
    auto g1 = t.backward(root, wrt);
    CHECK(t.last_backward_visits() > 0);
    CHECK(t.last_backward_visits() <= before);
    CHECK(t.size() > before);

    // second-order pass over the extended tape
    Val norm = t.pow_c(t.add_c(t.sum(t.mul(g1[0], g1[0])), 1e-12), 0.5);
    auto g2 = t.backward(norm, pv);
    CHECK(g2.size() == pv.size());
    for (const Val& v : g2) CHECK(v.value().all_finite());
}

TEST_CASE("determinism: identical seeds give bit-identical gradients") {
    auto run = [] {
        PolicyNet net = random_net({5, 8, 3}, 77);
        Tensor x({1, 5}, {0.1, 0.3, 0.5, 0.7, 0.9});
        Tape t;
        std::vector<Val> pv;
        for (const Tensor& p : net.params()) pv.push_back(t.var(p));
        Val xs = t.var(x);
        Val presc = prescription_rows(t, mlp_logits(t, pv, xs, Activation::Tanh));
        std::size_t idx[] = {1};
        Val root = t.sum(pgm_rows(t, presc, idx, 1.0 / 3.0));
        return flatten(grad(t, root, pv));
    };
    auto a = run();
    auto b = run();
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("non-finite intermediates are reported") {
    Tape t;
    Val x = t.var(Tensor::scalar(-1.0));
    CHECK_THROWS_AS((void)t.log(x), std::runtime_error);
}

TEST_CASE("grad_of_grad_norm rejects negative smoothing") {
    Tape t;
    Val s = t.var(Tensor::scalar(1.0));
    Val theta = t.var(Tensor::scalar(2.0));
    Val root = t.mul(s, theta);
    Val inner[] = {s};
    Val outer[] = {theta};
    CHECK_THROWS_AS((void)grad_of_grad_norm(t, root, inner, outer, -1.0),
                    std::invalid_argument);
}
