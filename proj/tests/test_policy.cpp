#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "a2pd/policy.hpp"
#include "a2pd/rng.hpp"
#include "oracles.hpp"

using namespace a2pd;

TEST_CASE("prescribe: equal logits give the uniform prescription") {
    // zero-weight net, zero bias: all logits equal
    Rng rng(0);
    PolicyNet net({3, 4}, rng);
    for (Tensor& p : net.params_mut())
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] = 0.0;
    Prescription p = prescribe(net, Tensor({3}, {0.2, 0.4, 0.6}));
    for (double v : p.probs) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("prescribe: softmax closed form for logits ln2 and 0") {
    std::vector<double> logits{std::log(2.0), 0.0};
    Prescription p = softmax_prescription(logits);
    CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("prescribe: random net matches the straight-line softmax evaluation") {
    Rng rng(3);
    PolicyNet net({5, 8, 4}, rng);
    std::vector<double> x{0.1, 0.9, 0.4, 0.6, 0.2};
    Prescription p = prescribe(net, Tensor({5}, std::vector<double>(x.begin(), x.end())));
    auto ref = oracle::softmax_clamped(oracle::mlp_forward(net.params(), x));
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(p[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("prescribe: dimension mismatch is an error") {
    Rng rng(0);
    PolicyNet net({3, 4}, rng);
    CHECK_THROWS_AS((void)prescribe(net, Tensor({2}, {0.1, 0.2})), std::invalid_argument);
}

TEST_CASE("prescription invariants: positive entries summing to one") {
    Rng rng(12);
    for (int i = 0; i < 200; ++i) {
        std::size_t na = 2 + rng.below(6);
        std::vector<double> logits(na);
        for (double& v : logits) v = rng.uniform(-30.0, 30.0); // saturating range
        Prescription p = softmax_prescription(logits);
        double sum = 0.0;
        for (double v : p.probs) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        // clamping never changes the argmax
        std::size_t raw_arg = 0;
        for (std::size_t a = 1; a < na; ++a)
            if (logits[a] > logits[raw_arg]) raw_arg = a;
        CHECK(select_action(p) == raw_arg);
    }
}

TEST_CASE("select_action tie-breaks to the smallest index") {
    CHECK(select_action({{0.1, 0.7, 0.2}}) == 1);
    CHECK(select_action({{0.5, 0.5}}) == 0);
    CHECK(select_action({{0.25, 0.25, 0.25, 0.25}}) == 0);
}

TEST_CASE("prescription_gap basics") {
    CHECK(prescription_gap({{0.7, 0.2, 0.1}}) == doctest::Approx(0.5));
    CHECK(prescription_gap({{0.25, 0.25, 0.25, 0.25}}) == doctest::Approx(0.0));
    // closed form at uniform non-target mass: (nA*C-1)/(nA-1)
    Prescription p{{0.4, 0.2, 0.2, 0.2}};
    double na = 4.0, c = 0.4;
    CHECK(prescription_gap(p) == doctest::Approx((na * c - 1.0) / (na - 1.0)).epsilon(1e-12));
    CHECK_THROWS_AS((void)prescription_gap({{1.0}}), std::invalid_argument);
}

TEST_CASE("prescription_gap positive iff argmax unique") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        std::size_t na = 2 + rng.below(4);
        std::vector<double> logits(na);
        for (double& v : logits) v = rng.uniform(-3.0, 3.0);
        if (i % 3 == 0) logits[1 % na] = logits[0]; // force ties sometimes
        Prescription p = softmax_prescription(logits);
        std::size_t arg = select_action(p);
        bool unique = true;
        for (std::size_t a = 0; a < na; ++a)
            if (a != arg && p[a] == p[arg]) unique = false;
        CHECK((prescription_gap(p) > 0.0) == unique);
    }
}

TEST_CASE("action_gap measures the designated action") {
    Prescription p{{0.2, 0.5, 0.3}};
    CHECK(action_gap(p, 1) == doctest::Approx(0.2));
    CHECK(action_gap(p, 0) == doctest::Approx(-0.3));
}

TEST_CASE("deterministic prescriptions") {
    Rng rng(8);
    PolicyNet net({4, 6, 3}, rng);
    Tensor obs({4}, {0.3, 0.1, 0.8, 0.5});
    Prescription a = prescribe(net, obs);
    Prescription b = prescribe(net, obs);
    CHECK(std::memcmp(a.probs.data(), b.probs.data(), 3 * sizeof(double)) == 0);
}

TEST_CASE("checkpoint round trip and format layout") {
    Rng rng(21);
    PolicyNet net({3, 5, 2}, rng);
    std::string path = (std::filesystem::temp_directory_path() / "a2pd_ckpt_test.bin").string();
    save_checkpoint(net, path);

    // magic + version + layer count up front
    std::ifstream f(path, std::ios::binary);
    char magic[4];
    f.read(magic, 4);
    CHECK(std::memcmp(magic, "A2PD", 4) == 0);
    std::uint32_t version = 0, layers = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    f.read(reinterpret_cast<char*>(&layers), 4);
    CHECK(version == kCheckpointVersion);
    CHECK(layers == 2);
    std::uint32_t rows = 0, cols = 0;
    f.read(reinterpret_cast<char*>(&rows), 4);
    f.read(reinterpret_cast<char*>(&cols), 4);
    CHECK(rows == 5);
    CHECK(cols == 3);
    double w00 = 0.0;
    f.read(reinterpret_cast<char*>(&w00), 8);
    CHECK(w00 == net.params()[0][0]);

    PolicyNet loaded = load_checkpoint(path);
    CHECK(loaded == net);

    // exact expected byte size: header 12 + per layer (8 + rows*cols*8 + rows*8)
    auto size = std::filesystem::file_size(path);
    CHECK(size == 12 + (8 + 5 * 3 * 8 + 5 * 8) + (8 + 2 * 5 * 8 + 2 * 8));
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint rejects damaged files") {
    std::string path = (std::filesystem::temp_directory_path() / "a2pd_ckpt_bad.bin").string();
    {
        std::ofstream f(path, std::ios::binary);
        f << "NOPE";
    }
    CHECK_THROWS_AS((void)load_checkpoint(path), std::runtime_error);
    std::filesystem::remove(path);
    CHECK_THROWS_AS((void)load_checkpoint(path), std::runtime_error);
}
