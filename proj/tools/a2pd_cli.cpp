// Command-line driver: train-teacher -> collect -> distill -> eval -> report,
// each step reading the shared JSON config and leaving reproducible
// artifacts (with .meta.json sidecars carrying the config hash and seed).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "a2pd/config.hpp"
#include "a2pd/distill.hpp"
#include "a2pd/dqn.hpp"
#include "a2pd/evalharness.hpp"

namespace fs = std::filesystem;
using namespace a2pd;

namespace {

struct CliState {
    std::string config_path;
    std::uint64_t seed_override = 0;
    bool has_seed_override = false;
    std::string out_override;
    bool quiet = false;
    int jobs = 0;
};

ExperimentConfig load_config(CliState& st) {
    if (!fs::exists(st.config_path))
        throw std::invalid_argument("config file not found: " + st.config_path);
    ExperimentConfig cfg = load_experiment_config(st.config_path);
    if (st.has_seed_override) {
        cfg.seed = st.seed_override;
        cfg.teacher.seed = st.seed_override;
        cfg.distill.seed = st.seed_override;
    }
    if (!st.out_override.empty()) cfg.out_dir = st.out_override;
#ifdef _OPENMP
    if (st.jobs > 0) omp_set_num_threads(st.jobs);
#endif
    fs::create_directories(cfg.out_dir);
    return cfg;
}

void say(const CliState& st, const std::string& msg) {
    if (!st.quiet) std::cout << msg << std::endl;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string student_stem(const DistillConfig& d) {
    return "student_" + baseline_name(d.baseline) + "_beta" + fmt(d.beta) + "_eta" +
           fmt(d.eta);
}

std::string attack_file_tag(const AttackSpec& a) {
    switch (a.family) {
    case AttackFamily::None: return "none";
    case AttackFamily::Fgsm: return "fgsm_eps" + fmt(a.epsilon);
    case AttackFamily::Pgd: return "pgd_k" + std::to_string(a.steps) + "_eps" + fmt(a.epsilon);
    case AttackFamily::Jsma:
        return "jsma_b" + std::to_string(a.jsma_budget) + "_eps" + fmt(a.epsilon);
    }
    return "unknown";
}

int cmd_train_teacher(CliState& st) {
    ExperimentConfig cfg = load_config(st);
    std::string hash = config_hash(cfg);
    say(st, "training teacher (seed " + std::to_string(cfg.seed) + ", " +
                std::to_string(cfg.teacher.total_steps) + " steps)");
    TeacherResult res = train_teacher(cfg.env, cfg.teacher);
    double ret = greedy_return(res.q_net, cfg.env, 20);
    double best = optimal_return(cfg.env);

    std::string ckpt = cfg.out_dir + "/teacher.ckpt";
    save_checkpoint(res.q_net, ckpt);
    write_artifact_meta(ckpt, hash, cfg.seed, "train-teacher");
    std::string curve = cfg.out_dir + "/teacher_curve.csv";
    write_teacher_curve_csv(res.curve, curve);
    write_artifact_meta(curve, hash, cfg.seed, "train-teacher");
    say(st, "teacher greedy return " + fmt(ret) + " (optimal " + fmt(best) + ") -> " + ckpt);
    return 0;
}

int cmd_collect(CliState& st) {
    ExperimentConfig cfg = load_config(st);
    std::string hash = config_hash(cfg);
    std::string ckpt = cfg.out_dir + "/teacher.ckpt";
    if (!fs::exists(ckpt))
        throw std::runtime_error("missing upstream artifact: " + ckpt +
                                 " (run train-teacher first)");
    PolicyNet teacher = load_checkpoint(ckpt);
    say(st, "collecting " + std::to_string(cfg.collect.n) + " records");
    Dataset ds = collect_dataset(teacher, cfg.env, cfg.collect.n, cfg.seed,
                                 cfg.collect.mode, cfg.collect.explore_eps);
    std::string path = cfg.out_dir + "/dataset.a2ds";
    save_dataset(ds, path);
    write_artifact_meta(path, hash, cfg.seed, "collect");
    say(st, "dataset -> " + path);
    return 0;
}

int cmd_distill(CliState& st) {
    ExperimentConfig cfg = load_config(st);
    std::string hash = config_hash(cfg);
    std::string data_path = cfg.out_dir + "/dataset.a2ds";
    if (!fs::exists(data_path))
        throw std::runtime_error("missing upstream artifact: " + data_path +
                                 " (run collect first)");
    Dataset ds = load_dataset(data_path);
    say(st, "distilling " + baseline_name(cfg.distill.baseline) + " student (beta " +
                fmt(cfg.distill.beta) + ", eta " + fmt(cfg.distill.eta) + ")");
    TrainResult res = cfg.distill.baseline == Baseline::AdvtrainPgd
                          ? train_student_advtrain(ds, cfg.distill, cfg.advtrain_attack)
                          : train_student(ds, cfg.distill);

    std::string stem = student_stem(cfg.distill);
    std::string ckpt = cfg.out_dir + "/" + stem + ".ckpt";
    save_checkpoint(res.net, ckpt);
    write_artifact_meta(ckpt, hash, cfg.seed, "distill");
    std::string log_path = cfg.out_dir + "/trainlog_" + stem + ".csv";
    res.log.write_csv(log_path);
    write_artifact_meta(log_path, hash, cfg.seed, "distill");
    say(st, "student (best epoch " + std::to_string(res.best_epoch) + ", val acc " +
                fmt(res.log.rows[res.best_epoch - 1].val_acc) + ") -> " + ckpt);
    return 0;
}

int cmd_eval(CliState& st, const std::string& policy_path) {
    ExperimentConfig cfg = load_config(st);
    std::string hash = config_hash(cfg);
    std::string path = policy_path;
    if (path.empty()) path = cfg.out_dir + "/" + student_stem(cfg.distill) + ".ckpt";
    if (!fs::exists(path))
        throw std::runtime_error("missing policy checkpoint: " + path);
    PolicyNet policy = load_checkpoint(path);
    std::string policy_id = fs::path(path).stem().string();

    // clean run first: the relative-robustness baseline
    AttackSpec none;
    EvalStats clean = evaluate(policy, cfg.env, none, cfg.eval_episodes, cfg.seed);
    auto emit = [&](const AttackSpec& attack, const EvalStats& stats) {
        EvalReport rep;
        rep.policy_id = policy_id;
        rep.attack = attack;
        rep.episodes = cfg.eval_episodes;
        rep.mean_return = stats.mean_return;
        rep.std_return = stats.std_return;
        rep.relative_robustness_pct = relative_robustness(stats.mean_return, clean.mean_return);
        rep.mean_gap = stats.mean_gap;
        rep.mean_jr_norm = stats.mean_jr;
        std::string jpath =
            cfg.out_dir + "/eval_" + policy_id + "_" + attack_file_tag(attack) + ".json";
        std::ofstream jf(jpath, std::ios::trunc);
        jf << eval_report_json(rep) << '\n';
        write_artifact_meta(jpath, hash, cfg.seed, "eval");
        append_results_csv(rep, cfg.out_dir + "/results.csv");
        say(st, "  " + rep.attack.label() + ": mean " + fmt(rep.mean_return) + " (rel " +
                    fmt(rep.relative_robustness_pct) + "%)");
    };
    say(st, "evaluating " + policy_id + " over " + std::to_string(cfg.eval_episodes) +
                " episodes");
    emit(none, clean);
    for (const AttackSpec& attack : cfg.attacks) {
        if (attack.family == AttackFamily::None) continue; // clean already emitted
        EvalStats stats = evaluate(policy, cfg.env, attack, cfg.eval_episodes, cfg.seed);
        emit(attack, stats);
    }
    write_artifact_meta(cfg.out_dir + "/results.csv", hash, cfg.seed, "eval");
    return 0;
}

int cmd_report(CliState& st) {
    ExperimentConfig cfg = load_config(st);
    std::string results = cfg.out_dir + "/results.csv";
    if (!fs::exists(results))
        throw std::runtime_error("missing upstream artifact: " + results + " (run eval first)");
    ArtifactMeta meta = read_artifact_meta(results);
    if (meta.format_version != kArtifactFormatVersion)
        throw std::runtime_error("results.csv format version " +
                                 std::to_string(meta.format_version) +
                                 " does not match this binary (" +
                                 std::to_string(kArtifactFormatVersion) + ")");

    std::ifstream f(results);
    std::string line;
    std::getline(f, line); // header
    struct Row {
        std::string policy, attack;
        double mean = 0, stddev = 0, rel = 0, gap = 0, jr = 0;
        std::size_t episodes = 0;
    };
    std::vector<Row> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        Row r;
        std::size_t pos = 0;
        auto next = [&] {
            std::size_t comma = line.find(',', pos);
            std::string tok = line.substr(pos, comma - pos);
            pos = comma == std::string::npos ? line.size() : comma + 1;
            return tok;
        };
        r.policy = next();
        r.attack = next();
        r.episodes = std::stoul(next());
        r.mean = std::stod(next());
        r.stddev = std::stod(next());
        r.rel = std::stod(next());
        r.gap = std::stod(next());
        r.jr = std::stod(next());
        rows.push_back(std::move(r));
    }

    std::string md_path = cfg.out_dir + "/summary.md";
    {
        std::ofstream md(md_path, std::ios::trunc);
        md << "# Evaluation summary\n\n";
        md << "| policy | attack | episodes | mean return | std | relative robustness % | "
              "mean gap | mean jr |\n";
        md << "|---|---|---|---|---|---|---|---|\n";
        for (const Row& r : rows)
            md << "| " << r.policy << " | " << r.attack << " | " << r.episodes << " | "
               << r.mean << " | " << r.stddev << " | " << r.rel << " | " << r.gap << " | "
               << r.jr << " |\n";

        // per-epoch timing section when training logs are present
        std::vector<std::pair<std::string, TrainLog>> logs;
        for (const auto& entry : fs::directory_iterator(cfg.out_dir)) {
            std::string name = entry.path().filename().string();
            if (name.rfind("trainlog_", 0) == 0 && entry.path().extension() == ".csv")
                logs.emplace_back(entry.path().stem().string().substr(9),
                                  TrainLog::read_csv(entry.path().string()));
        }
        if (!logs.empty()) {
            md << "\n## Mean seconds per training epoch (first 50 epochs)\n\n";
            md << "| configuration | s/epoch |\n|---|---|\n";
            for (const auto& [label, secs] : timing_report(logs))
                md << "| " << label << " | " << secs << " |\n";
        }
    }
    write_artifact_meta(md_path, config_hash(cfg), cfg.seed, "report");
    say(st, "summary -> " + md_path);

    // beta sweep extraction: policies named ..._beta<value>_...
    std::map<std::string, std::vector<const Row*>> by_beta;
    for (const Row& r : rows) {
        std::size_t p = r.policy.find("_beta");
        if (p == std::string::npos) continue;
        std::size_t start = p + 5;
        std::size_t end = r.policy.find('_', start);
        by_beta[r.policy.substr(start, end - start)].push_back(&r);
    }
    if (by_beta.size() >= 2) {
        std::string sweep_path = cfg.out_dir + "/beta_sweep.csv";
        std::ofstream sw(sweep_path, std::ios::trunc);
        sw << "beta,attack,mean_return,std_return,relative_robustness_pct\n";
        for (const auto& [beta, group] : by_beta)
            for (const Row* r : group)
                sw << beta << ',' << r->attack << ',' << r->mean << ',' << r->stddev << ','
                   << r->rel << '\n';
        write_artifact_meta(sweep_path, config_hash(cfg), cfg.seed, "report");
        say(st, "beta sweep -> " + sweep_path);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversary-agnostic policy distillation pipeline"};
    app.require_subcommand(1);

    CliState st;
    app.add_option("--config", st.config_path, "experiment config (JSON)")->required();
    auto* seed_opt = app.add_option("--seed", st.seed_override, "override the config seed");
    app.add_option("--out", st.out_override, "override the output directory");
    app.add_flag("--quiet", st.quiet, "suppress progress output");
    app.add_option("--jobs", st.jobs, "cap episode-level parallelism");

    auto* t = app.add_subcommand("train-teacher", "train the DQN teacher");
    auto* c = app.add_subcommand("collect", "roll out the teacher into a dataset");
    auto* d = app.add_subcommand("distill", "train a student on the dataset");
    auto* e = app.add_subcommand("eval", "evaluate a policy under the configured attacks");
    std::string policy_path;
    e->add_option("--policy", policy_path, "checkpoint to evaluate (default: the configured student)");
    auto* r = app.add_subcommand("report", "summarize results.csv into markdown/CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& help) {
        return app.exit(help);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return 2;
    }
    st.has_seed_override = seed_opt->count() > 0;

    try {
        if (t->parsed()) return cmd_train_teacher(st);
        if (c->parsed()) return cmd_collect(st);
        if (d->parsed()) return cmd_distill(st);
        if (e->parsed()) return cmd_eval(st, policy_path);
        if (r->parsed()) return cmd_report(st);
    } catch (const std::invalid_argument& err) {
        std::cerr << "config error: " << err.what() << std::endl;
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << std::endl;
        return 3;
    }
    return 2;
}
