#include "a2pd/config.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace a2pd {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) ok |= (it.key() == k);
        if (!ok)
            throw std::invalid_argument("config: unknown key \"" + it.key() + "\" in " + where);
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

Cell parse_cell(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2)
        throw std::invalid_argument("config: " + where + " must be [row, col]");
    return Cell{j.at(0).get<int>(), j.at(1).get<int>()};
}

json cell_json(Cell c) { return json::array({c.row, c.col}); }

GridConfig parse_grid_config(const json& j) {
    reject_unknown_keys(j,
                        {"size", "start", "goal", "hazards", "goal_reward", "hazard_reward",
                         "step_penalty", "max_steps", "obs_blur"},
                        "env");
    GridConfig g;
    get_if(j, "size", g.size);
    if (j.contains("start")) g.start = parse_cell(j.at("start"), "env.start");
    if (j.contains("goal")) g.goal = parse_cell(j.at("goal"), "env.goal");
    if (j.contains("hazards")) {
        g.hazards.clear();
        for (const auto& h : j.at("hazards")) g.hazards.push_back(parse_cell(h, "env.hazards"));
    }
    get_if(j, "goal_reward", g.goal_reward);
    get_if(j, "hazard_reward", g.hazard_reward);
    get_if(j, "step_penalty", g.step_penalty);
    get_if(j, "max_steps", g.max_steps);
    get_if(j, "obs_blur", g.obs_blur);
    return g;
}

json grid_config_json(const GridConfig& g) {
    json h = json::array();
    for (Cell c : g.hazards) h.push_back(cell_json(c));
    return {{"size", g.size},         {"start", cell_json(g.start)},
            {"goal", cell_json(g.goal)}, {"hazards", h},
            {"goal_reward", g.goal_reward}, {"hazard_reward", g.hazard_reward},
            {"step_penalty", g.step_penalty}, {"max_steps", g.max_steps},
            {"obs_blur", g.obs_blur}};
}

DqnConfig parse_dqn_config(const json& j) {
    reject_unknown_keys(j,
                        {"gamma", "replay_capacity", "batch_size", "learning_rate",
                         "target_update", "eps_start", "eps_end", "eps_decay_steps",
                         "total_steps", "start_steps", "hidden"},
                        "teacher");
    DqnConfig c;
    get_if(j, "gamma", c.gamma);
    get_if(j, "replay_capacity", c.replay_capacity);
    get_if(j, "batch_size", c.batch_size);
    get_if(j, "learning_rate", c.learning_rate);
    get_if(j, "target_update", c.target_update);
    get_if(j, "eps_start", c.eps_start);
    get_if(j, "eps_end", c.eps_end);
    get_if(j, "eps_decay_steps", c.eps_decay_steps);
    get_if(j, "total_steps", c.total_steps);
    get_if(j, "start_steps", c.start_steps);
    get_if(j, "hidden", c.hidden);
    return c;
}

json dqn_config_json(const DqnConfig& c) {
    return {{"gamma", c.gamma},
            {"replay_capacity", c.replay_capacity},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"target_update", c.target_update},
            {"eps_start", c.eps_start},
            {"eps_end", c.eps_end},
            {"eps_decay_steps", c.eps_decay_steps},
            {"total_steps", c.total_steps},
            {"start_steps", c.start_steps},
            {"hidden", c.hidden}};
}

CollectConfig parse_collect_config(const json& j) {
    reject_unknown_keys(j, {"n", "teacher_mode", "explore_eps"}, "collect");
    CollectConfig c;
    get_if(j, "n", c.n);
    if (j.contains("teacher_mode")) {
        std::string m = j.at("teacher_mode").get<std::string>();
        if (m == "onehot")
            c.mode = TeacherMode::OneHot;
        else if (m == "softmax")
            c.mode = TeacherMode::Softmax;
        else
            throw std::invalid_argument("config: teacher_mode must be onehot or softmax");
    }
    get_if(j, "explore_eps", c.explore_eps);
    return c;
}

json collect_config_json(const CollectConfig& c) {
    return {{"n", c.n},
            {"teacher_mode", c.mode == TeacherMode::OneHot ? "onehot" : "softmax"},
            {"explore_eps", c.explore_eps}};
}

DistillConfig parse_distill_config(const json& j) {
    reject_unknown_keys(j,
                        {"eta", "beta", "batch_size", "learning_rate", "phi1", "phi2",
                         "adam_eps", "max_epochs", "patience", "split", "min_val_delta", "stop_rule",
                         "hidden", "baseline", "smoothing", "squared_jr"},
                        "distill");
    DistillConfig c;
    get_if(j, "eta", c.eta);
    get_if(j, "beta", c.beta);
    get_if(j, "batch_size", c.batch_size);
    get_if(j, "learning_rate", c.learning_rate);
    get_if(j, "phi1", c.phi1);
    get_if(j, "phi2", c.phi2);
    get_if(j, "adam_eps", c.adam_eps);
    get_if(j, "max_epochs", c.max_epochs);
    get_if(j, "patience", c.patience);
    get_if(j, "split", c.split);
    get_if(j, "min_val_delta", c.min_val_delta);
    if (j.contains("stop_rule")) {
        std::string r = j.at("stop_rule").get<std::string>();
        if (r == "accuracy")
            c.stop_rule = StopRule::AccuracyOnly;
        else if (r == "accuracy_then_loss")
            c.stop_rule = StopRule::AccuracyThenLoss;
        else
            throw std::invalid_argument("config: stop_rule must be accuracy or accuracy_then_loss");
    }
    get_if(j, "hidden", c.hidden);
    if (j.contains("baseline")) c.baseline = baseline_from_name(j.at("baseline"));
    get_if(j, "smoothing", c.smoothing);
    get_if(j, "squared_jr", c.squared_jr);
    return c;
}

json distill_config_json(const DistillConfig& c) {
    return {{"eta", c.eta},
            {"beta", c.beta},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"phi1", c.phi1},
            {"phi2", c.phi2},
            {"adam_eps", c.adam_eps},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"split", c.split},
            {"min_val_delta", c.min_val_delta},
            {"stop_rule", c.stop_rule == StopRule::AccuracyOnly ? "accuracy" : "accuracy_then_loss"},
            {"hidden", c.hidden},
            {"baseline", baseline_name(c.baseline)},
            {"smoothing", c.smoothing},
            {"squared_jr", c.squared_jr}};
}

} // namespace

AttackSpec parse_attack_spec(const json& j) {
    reject_unknown_keys(j, {"family", "epsilon", "steps", "jsma_budget", "projection"},
                        "attack");
    AttackSpec s;
    if (j.contains("family")) {
        std::string f = j.at("family").get<std::string>();
        if (f == "none")
            s.family = AttackFamily::None;
        else if (f == "fgsm")
            s.family = AttackFamily::Fgsm;
        else if (f == "pgd")
            s.family = AttackFamily::Pgd;
        else if (f == "jsma")
            s.family = AttackFamily::Jsma;
        else
            throw std::invalid_argument("config: unknown attack family " + f);
    }
    get_if(j, "epsilon", s.epsilon);
    get_if(j, "steps", s.steps);
    get_if(j, "jsma_budget", s.jsma_budget);
    if (j.contains("projection")) {
        std::string p = j.at("projection").get<std::string>();
        if (p == "sign")
            s.projection = GradProjection::Sign;
        else if (p == "renorm")
            s.projection = GradProjection::Renorm;
        else
            throw std::invalid_argument("config: projection must be sign or renorm");
    }
    s.validate();
    return s;
}

json attack_spec_json(const AttackSpec& s) {
    const char* fam = "none";
    switch (s.family) {
    case AttackFamily::None: fam = "none"; break;
    case AttackFamily::Fgsm: fam = "fgsm"; break;
    case AttackFamily::Pgd: fam = "pgd"; break;
    case AttackFamily::Jsma: fam = "jsma"; break;
    }
    return {{"family", fam},
            {"epsilon", s.epsilon},
            {"steps", s.steps},
            {"jsma_budget", s.jsma_budget},
            {"projection", s.projection == GradProjection::Sign ? "sign" : "renorm"}};
}

void ExperimentConfig::validate() const {
    env.validate();
    teacher.validate();
    distill.validate();
    if (collect.n < 1) throw std::invalid_argument("config: collect.n must be >= 1");
    if (eval_episodes < 1) throw std::invalid_argument("config: eval_episodes must be >= 1");
    for (const AttackSpec& a : attacks) a.validate();
    if (out_dir.empty()) throw std::invalid_argument("config: out_dir must not be empty");
}

ExperimentConfig parse_experiment_config(const json& j) {
    reject_unknown_keys(j,
                        {"seed", "out_dir", "env", "teacher", "collect", "distill",
                         "advtrain_attack", "attacks", "eval_episodes"},
                        "config");
    ExperimentConfig c;
    get_if(j, "seed", c.seed);
    get_if(j, "out_dir", c.out_dir);
    if (j.contains("env")) c.env = parse_grid_config(j.at("env"));
    if (j.contains("teacher")) c.teacher = parse_dqn_config(j.at("teacher"));
    if (j.contains("collect")) c.collect = parse_collect_config(j.at("collect"));
    if (j.contains("distill")) c.distill = parse_distill_config(j.at("distill"));
    if (j.contains("advtrain_attack")) c.advtrain_attack = parse_attack_spec(j.at("advtrain_attack"));
    if (j.contains("attacks")) {
        c.attacks.clear();
        for (const auto& a : j.at("attacks")) c.attacks.push_back(parse_attack_spec(a));
    }
    get_if(j, "eval_episodes", c.eval_episodes);
    c.teacher.seed = c.seed;
    c.distill.seed = c.seed;
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config: cannot open file: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config: JSON parse error in " + path + ": " + e.what());
    }
    return parse_experiment_config(j);
}

json experiment_config_json(const ExperimentConfig& c) {
    json attacks = json::array();
    for (const AttackSpec& a : c.attacks) attacks.push_back(attack_spec_json(a));
    return {{"seed", c.seed},
            {"out_dir", c.out_dir},
            {"env", grid_config_json(c.env)},
            {"teacher", dqn_config_json(c.teacher)},
            {"collect", collect_config_json(c.collect)},
            {"distill", distill_config_json(c.distill)},
            {"advtrain_attack", attack_spec_json(c.advtrain_attack)},
            {"attacks", attacks},
            {"eval_episodes", c.eval_episodes}};
}

std::string config_hash(const ExperimentConfig& cfg) {
    std::string dump = experiment_config_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return std::string(buf);
}

void write_artifact_meta(const std::string& artifact_path, const std::string& cfg_hash,
                         std::uint64_t seed, const std::string& command) {
    json j = {{"config_hash", cfg_hash},
              {"seed", seed},
              {"format_version", kArtifactFormatVersion},
              {"command", command}};
    std::ofstream f(artifact_path + ".meta.json", std::ios::trunc);
    if (!f) throw std::runtime_error("meta: cannot open for writing: " + artifact_path);
    f << j.dump(2) << '\n';
}

ArtifactMeta read_artifact_meta(const std::string& artifact_path) {
    std::ifstream f(artifact_path + ".meta.json");
    if (!f) throw std::runtime_error("meta: missing sidecar for " + artifact_path);
    json j;
    f >> j;
    ArtifactMeta m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.format_version = j.at("format_version").get<std::uint32_t>();
    m.command = j.value("command", "");
    return m;
}

} // namespace a2pd
