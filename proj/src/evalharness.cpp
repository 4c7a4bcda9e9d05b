#include "a2pd/evalharness.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "a2pd/losses.hpp"

namespace a2pd {

namespace {

struct EpisodeOutcome {
    double ret = 0.0;
    double gap_sum = 0.0;
    double jr_sum = 0.0;
    std::size_t steps = 0;
};

EpisodeOutcome run_episode(const PolicyNet& policy, const GridConfig& env_cfg,
                           const AttackSpec& attack, std::uint64_t seed, double jr_eta) {
    GridWorld env(env_cfg);
    LossConfig jr_cfg;
    jr_cfg.eta = jr_eta;
    EpisodeOutcome out;
    Tensor obs = env.reset(seed);
    while (!env.done()) {
        Prescription clean_p = prescribe(policy, obs);
        out.gap_sum += prescription_gap(clean_p);
        out.jr_sum += jr_loss(policy, obs, select_action(clean_p), jr_cfg);
        ++out.steps;

        Tensor seen = apply_attack(policy, obs, attack);
        std::size_t a = select_action(prescribe(policy, seen));
        StepResult res = env.step(Action(a));
        out.ret += res.reward;
        obs = res.obs; // true state; the perturbation never enters the environment
    }
    return out;
}

} // namespace

EvalStats evaluate(const PolicyNet& policy, const GridConfig& env_cfg,
                   const AttackSpec& attack, std::size_t episodes,
                   std::uint64_t base_seed, double jr_eta) {
    if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
    attack.validate();

    std::vector<EpisodeOutcome> outcomes(episodes);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long long e = 0; e < (long long)episodes; ++e)
        outcomes[std::size_t(e)] =
            run_episode(policy, env_cfg, attack, base_seed + std::uint64_t(e), jr_eta);

    EvalStats stats;
    stats.returns.reserve(episodes);
    double gap_sum = 0.0, jr_sum = 0.0;
    std::size_t steps = 0;
    for (const EpisodeOutcome& o : outcomes) {
        stats.returns.push_back(o.ret);
        gap_sum += o.gap_sum;
        jr_sum += o.jr_sum;
        steps += o.steps;
    }

    bool constant = true;
    for (double r : stats.returns) constant &= (r == stats.returns.front());
    if (constant) {
        stats.mean_return = stats.returns.front();
        stats.std_return = 0.0;
    } else {
        double sum = 0.0;
        for (double r : stats.returns) sum += r;
        stats.mean_return = sum / double(episodes);
        double ss = 0.0;
        for (double r : stats.returns) ss += (r - stats.mean_return) * (r - stats.mean_return);
        stats.std_return = episodes > 1 ? std::sqrt(ss / double(episodes - 1)) : 0.0;
    }
    stats.mean_gap = steps ? gap_sum / double(steps) : 0.0;
    stats.mean_jr = steps ? jr_sum / double(steps) : 0.0;
    return stats;
}

double relative_robustness(double r_attacked, double r_clean) {
    if (r_clean == 0.0)
        throw std::domain_error("relative_robustness: clean return is zero, ratio undefined");
    return 100.0 * r_attacked / r_clean;
}

GapReport gap_report(const PolicyNet& policy, const std::vector<Tensor>& states) {
    if (states.empty()) throw std::invalid_argument("gap_report: no states");
    GapReport rep;
    for (const Tensor& s : states) {
        double g = prescription_gap(prescribe(policy, s));
        rep.mean += g;
        std::size_t bin = std::min<std::size_t>(19, std::size_t(g * 20.0));
        ++rep.histogram[bin];
    }
    rep.mean /= double(states.size());
    return rep;
}

std::vector<std::pair<std::string, double>>
timing_report(const std::vector<std::pair<std::string, TrainLog>>& configs) {
    if (configs.empty()) throw std::invalid_argument("timing_report: no configs");
    std::vector<std::pair<std::string, double>> out;
    out.reserve(configs.size());
    for (const auto& [label, log] : configs)
        out.emplace_back(label, log.mean_epoch_seconds(50));
    return out;
}

std::string eval_report_json(const EvalReport& report) {
    nlohmann::json j;
    j["policy_id"] = report.policy_id;
    j["attack"] = {{"family", [&] {
                        switch (report.attack.family) {
                        case AttackFamily::None: return "none";
                        case AttackFamily::Fgsm: return "fgsm";
                        case AttackFamily::Pgd: return "pgd";
                        case AttackFamily::Jsma: return "jsma";
                        }
                        return "?";
                    }()},
                   {"epsilon", report.attack.epsilon},
                   {"steps", report.attack.steps},
                   {"jsma_budget", report.attack.jsma_budget}};
    j["episodes"] = report.episodes;
    j["mean_return"] = report.mean_return;
    j["std_return"] = report.std_return;
    j["relative_robustness_pct"] = report.relative_robustness_pct;
    j["mean_gap"] = report.mean_gap;
    j["mean_jr_norm"] = report.mean_jr_norm;
    return j.dump(2);
}

void append_results_csv(const EvalReport& report, const std::string& path) {
    bool fresh = !std::filesystem::exists(path);
    std::ofstream f(path, std::ios::app);
    if (!f) throw std::runtime_error("results csv: cannot open: " + path);
    if (fresh)
        f << "policy_id,attack,episodes,mean_return,std_return,"
             "relative_robustness_pct,mean_gap,mean_jr_norm\n";
    f << report.policy_id << ',' << report.attack.label() << ',' << report.episodes << ','
      << report.mean_return << ',' << report.std_return << ','
      << report.relative_robustness_pct << ',' << report.mean_gap << ','
      << report.mean_jr_norm << '\n';
    if (!f) throw std::runtime_error("results csv: write failed: " + path);
}

} // namespace a2pd
