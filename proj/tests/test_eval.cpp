#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "a2pd/evalharness.hpp"
#include "a2pd/rng.hpp"

using namespace a2pd;

namespace {

PolicyNet random_policy(const GridConfig& env, std::uint64_t seed) {
    Rng rng(seed);
    return PolicyNet({env.obs_dim(), 16, kNumActions}, rng);
}

} // namespace

TEST_CASE("evaluate: deterministic setup gives zero std") {
    GridConfig env;
    PolicyNet policy = random_policy(env, 1);
    AttackSpec none;
    EvalStats s = evaluate(policy, env, none, 10, 100);
    CHECK(s.returns.size() == 10);
    CHECK(s.std_return == 0.0);
    for (double r : s.returns) CHECK(r == s.returns.front());
}

TEST_CASE("evaluate: zero-budget PGD equals no attack") {
    GridConfig env;
    PolicyNet policy = random_policy(env, 2);
    AttackSpec none;
    AttackSpec pgd0;
    pgd0.family = AttackFamily::Pgd;
    pgd0.epsilon = 0.0;
    pgd0.steps = 10;
    EvalStats a = evaluate(policy, env, none, 5, 7);
    EvalStats b = evaluate(policy, env, pgd0, 5, 7);
    CHECK(a.mean_return == b.mean_return);
    CHECK(a.returns == b.returns);
}

TEST_CASE("evaluate: parallel episodes match serial bit for bit") {
    GridConfig env;
    PolicyNet policy = random_policy(env, 3);
    AttackSpec fg;
    fg.family = AttackFamily::Fgsm;
    fg.epsilon = 0.02;
#ifdef _OPENMP
    omp_set_num_threads(1);
    EvalStats serial = evaluate(policy, env, fg, 8, 50);
    omp_set_num_threads(2);
    EvalStats parallel = evaluate(policy, env, fg, 8, 50);
    omp_set_num_threads(2);
    CHECK(serial.returns == parallel.returns);
    CHECK(serial.mean_gap == parallel.mean_gap);
    CHECK(serial.mean_jr == parallel.mean_jr);
#else
    EvalStats once = evaluate(policy, env, fg, 8, 50);
    EvalStats twice = evaluate(policy, env, fg, 8, 50);
    CHECK(once.returns == twice.returns);
#endif
}

TEST_CASE("relative_robustness: frozen reference values") {
    CHECK(relative_robustness(564.0, 1308.4) == doctest::Approx(43.1).epsilon(2e-3));
    CHECK(relative_robustness(81.9, 74.2) == doctest::Approx(110.4).epsilon(2e-3));
    CHECK(relative_robustness(5.5, 5.5) == doctest::Approx(100.0));
    CHECK_THROWS_AS((void)relative_robustness(1.0, 0.0), std::domain_error);
}

TEST_CASE("gap_report: saturated and uniform policies") {
    GridConfig env;
    std::vector<Tensor> states;
    GridWorld world(env);
    states.push_back(world.reset(0));
    states.push_back(world.observation_of({2, 2}));

    // one dominant logit: gap approaches 1 - |A|*clamp
    Rng rng(5);
    PolicyNet sat({env.obs_dim(), kNumActions}, rng);
    for (Tensor& p : sat.params_mut())
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] = 0.0;
    sat.params_mut()[1][2] = 60.0; // bias drives action 2
    GapReport rs = gap_report(sat, states);
    CHECK(rs.mean == doctest::Approx(1.0 - double(kNumActions) * kProbClamp).epsilon(1e-6));
    CHECK(rs.histogram[19] == states.size());

    PolicyNet uniform({env.obs_dim(), kNumActions}, rng);
    for (Tensor& p : uniform.params_mut())
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] = 0.0;
    GapReport ru = gap_report(uniform, states);
    CHECK(ru.mean == doctest::Approx(0.0));
    CHECK(ru.histogram[0] == states.size());

    CHECK_THROWS_AS((void)gap_report(uniform, {}), std::invalid_argument);
}

TEST_CASE("timing_report: single config and repeatability") {
    TrainLog log;
    log.rows.push_back({1, 0, 0, 0, 0, 2.5});
    auto rep = timing_report({{"only", log}});
    CHECK(rep.size() == 1);
    CHECK(rep[0].second == doctest::Approx(2.5));

    // only the first 50 epochs count
    TrainLog big;
    for (std::size_t e = 1; e <= 80; ++e)
        big.rows.push_back({e, 0, 0, 0, 0, e <= 50 ? 1.0 : 100.0});
    CHECK(timing_report({{"capped", big}})[0].second == doctest::Approx(1.0));

    // wall-clock repeatability on a real workload: two timed runs of the
    // same loop agree within 20%
    auto timed_run = [] {
        double sink = 0.0;
        auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < 6'000'000; ++i) sink += std::sqrt(double(i));
        asm volatile("" : : "r,m"(sink) : "memory");
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    timed_run(); // warm up
    double a = timed_run();
    double b = timed_run();
    CHECK(std::abs(a - b) / std::max(a, b) < 0.2);
}

TEST_CASE("eval report JSON carries exactly the documented keys") {
    EvalReport rep;
    rep.policy_id = "student_beta0.01";
    rep.attack.family = AttackFamily::Pgd;
    rep.attack.epsilon = 8.0 / 255.0;
    rep.attack.steps = 10;
    rep.episodes = 50;
    rep.mean_return = 9.3;
    rep.std_return = 0.0;
    rep.relative_robustness_pct = 100.0;
    rep.mean_gap = 0.99;
    rep.mean_jr_norm = 0.002;
    auto j = nlohmann::json::parse(eval_report_json(rep));
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    std::vector<std::string> expect{"attack",      "episodes",  "mean_gap",
                                    "mean_jr_norm", "mean_return", "policy_id",
                                    "relative_robustness_pct", "std_return"};
    CHECK(keys == expect);
    CHECK(j["attack"]["family"] == "pgd");
    CHECK(j["episodes"] == 50);
}

TEST_CASE("results CSV ledger appends with one header") {
    auto path = (std::filesystem::temp_directory_path() / "a2pd_results.csv").string();
    std::filesystem::remove(path);
    EvalReport rep;
    rep.policy_id = "teacher";
    rep.episodes = 2;
    rep.mean_return = 1.0;
    append_results_csv(rep, path);
    rep.policy_id = "student";
    append_results_csv(rep, path);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line ==
          "policy_id,attack,episodes,mean_return,std_return,relative_robustness_pct,"
          "mean_gap,mean_jr_norm");
    int rows = 0;
    while (std::getline(f, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
    std::filesystem::remove(path);
}

TEST_CASE("the environment always steps on the true state") {
    // a huge-budget attack cannot change the trajectory of a policy that
    // ignores its input: rewards depend only on the true state
    GridConfig env;
    Rng rng(9);
    PolicyNet constant({env.obs_dim(), kNumActions}, rng);
    for (Tensor& p : constant.params_mut())
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] = 0.0;
    constant.params_mut()[1][1] = 5.0; // always picks action 1 (down)
    AttackSpec strong;
    strong.family = AttackFamily::Pgd;
    strong.epsilon = 1.0;
    strong.steps = 5;
    AttackSpec none;
    EvalStats clean = evaluate(constant, env, none, 3, 11);
    EvalStats attacked = evaluate(constant, env, strong, 3, 11);
    CHECK(clean.returns == attacked.returns);
}
