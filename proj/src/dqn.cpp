#include "a2pd/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "a2pd/adam.hpp"
#include "a2pd/tape.hpp"

namespace a2pd {

void DqnConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("DqnConfig: gamma must be in (0,1)");
    if (replay_capacity == 0 || batch_size == 0 || total_steps == 0 || target_update == 0)
        throw std::invalid_argument("DqnConfig: capacities and periods must be positive");
    if (batch_size > replay_capacity)
        throw std::invalid_argument("DqnConfig: batch size exceeds replay capacity");
    if (learning_rate <= 0.0) throw std::invalid_argument("DqnConfig: learning rate must be > 0");
    if (eps_decay_steps == 0) throw std::invalid_argument("DqnConfig: eps_decay_steps must be > 0");
}

void ReplayBuffer::push(Transition t) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t k, Rng& rng) const {
    if (k > data_.size())
        throw std::invalid_argument("ReplayBuffer: batch larger than buffer");
    // partial Fisher-Yates over an index vector
    std::vector<std::size_t> idx(data_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + std::size_t(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
        out[i] = idx[i];
    }
    return out;
}

namespace {

std::size_t argmax_row(const double* v, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

} // namespace

TeacherResult train_teacher(const GridConfig& env_cfg, const DqnConfig& cfg) {
    cfg.validate();
    GridWorld env(env_cfg);
    std::size_t d = env.obs_dim();

    std::vector<std::size_t> sizes{d};
    for (std::size_t h : cfg.hidden) sizes.push_back(h);
    sizes.push_back(kNumActions);

    Rng rng(cfg.seed);
    PolicyNet online(sizes, rng);
    PolicyNet target = online;
    ReplayBuffer replay(cfg.replay_capacity);
    Adam opt(cfg.learning_rate);

    TeacherResult result{online, {}};
    Tensor obs = env.reset(cfg.seed);
    double ep_return = 0.0;
    double last_loss = 0.0;
    std::size_t warmup = std::max(cfg.start_steps, cfg.batch_size);

    for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
        double frac = std::min(1.0, double(step) / double(cfg.eps_decay_steps));
        double eps = cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start);

        std::size_t a;
        if (rng.uniform() < eps) {
            a = std::size_t(rng.below(kNumActions));
        } else {
            Tensor q = online.logits(obs);
            a = argmax_row(q.data(), q.numel());
        }
        StepResult res = env.step(Action(a));
        ep_return += res.reward;
        replay.push({obs, a, res.reward, res.obs, res.done});
        if (res.done) {
            result.curve.push_back({step, ep_return, last_loss});
            ep_return = 0.0;
            obs = env.reset(cfg.seed + step);
        } else {
            obs = res.obs;
        }

        if (replay.size() >= warmup) {
            auto batch = replay.sample_indices(cfg.batch_size, rng);
            std::size_t bsz = batch.size();

            Tensor states({bsz, d});
            Tensor next_states({bsz, d});
            std::vector<std::size_t> actions(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                const Transition& tr = replay[batch[i]];
                for (std::size_t j = 0; j < d; ++j) {
                    states.at(i, j) = tr.s[j];
                    next_states.at(i, j) = tr.s_next[j];
                }
                actions[i] = tr.a;
            }
            Tensor next_q = mlp_logits_eager(target.params(), next_states, Activation::Tanh);
            Tensor targets({bsz});
            for (std::size_t i = 0; i < bsz; ++i) {
                const Transition& tr = replay[batch[i]];
                double best = next_q.at(i, argmax_row(&next_q.at(i, 0), kNumActions));
                targets[i] = tr.r + (tr.done ? 0.0 : cfg.gamma * best);
            }

            Tape t;
            std::vector<Val> pvars;
            for (const Tensor& p : online.params()) pvars.push_back(t.var(p));
            Val x = t.var(states);
            Val q = mlp_logits(t, pvars, x, Activation::Tanh);
            Val q_sel = t.pick_rows(q, actions);
            Val diff = t.sub(q_sel, t.constant(targets));
            Val loss = t.scale(t.sum(t.mul(diff, diff)), 1.0 / double(bsz));
            last_loss = loss.value()[0];
            if (!std::isfinite(last_loss))
                throw std::runtime_error("train_teacher: TD loss diverged (non-finite)");

            auto grads = grad(t, loss, pvars);
            opt.step(online.params_mut(), grads);
        }

        if (step % cfg.target_update == 0) target = online;
    }

    result.q_net = online;
    return result;
}

Prescription teacher_prescription(const PolicyNet& q_net, const Tensor& obs,
                                  TeacherMode mode) {
    Tensor q = q_net.logits(obs);
    if (mode == TeacherMode::Softmax)
        return softmax_prescription(std::span<const double>(q.data(), q.numel()));
    std::vector<double> probs(q.numel(), 0.0);
    probs[argmax_row(q.data(), q.numel())] = 1.0;
    return Prescription{std::move(probs)};
}

double greedy_return(const PolicyNet& net, const GridConfig& env_cfg,
                     std::size_t episodes) {
    if (episodes == 0) throw std::invalid_argument("greedy_return: episodes must be >= 1");
    GridWorld env(env_cfg);
    double total = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
        Tensor obs = env.reset(e);
        double ret = 0.0;
        while (!env.done()) {
            Tensor q = net.logits(obs);
            StepResult res = env.step(Action(argmax_row(q.data(), q.numel())));
            ret += res.reward;
            obs = res.obs;
        }
        total += ret;
    }
    return total / double(episodes);
}

void write_teacher_curve_csv(const std::vector<TeacherCurveRow>& curve,
                             const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "step,episode_return,loss\n";
    for (const auto& row : curve)
        f << row.step << ',' << row.episode_return << ',' << row.loss << '\n';
    if (!f) throw std::runtime_error("write failed: " + path);
}

} // namespace a2pd
