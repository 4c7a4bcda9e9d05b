#include "a2pd/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "a2pd/adam.hpp"

namespace a2pd {

namespace {

std::size_t argmax_row(const double* v, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

} // namespace

Dataset collect_dataset(const PolicyNet& teacher, const GridConfig& env_cfg,
                        std::size_t n, std::uint64_t seed, TeacherMode mode,
                        double explore_eps) {
    if (n < 1) throw std::invalid_argument("collect_dataset: n must be >= 1");
    if (explore_eps < 0.0 || explore_eps > 1.0)
        throw std::invalid_argument("collect_dataset: explore_eps must be in [0,1]");
    GridWorld env(env_cfg);
    if (teacher.input_dim() != env.obs_dim())
        throw std::invalid_argument("collect_dataset: teacher input dim " +
                                    std::to_string(teacher.input_dim()) +
                                    " != observation dim " + std::to_string(env.obs_dim()));

    Dataset ds;
    ds.obs_dim = env.obs_dim();
    ds.num_actions = teacher.num_actions();
    ds.mode = mode;
    ds.records.reserve(n);

    Rng rng(seed);
    std::uint64_t episode = 0;
    Tensor obs = env.reset(seed + episode);
    while (ds.records.size() < n) {
        Tensor q = teacher.logits(obs);
        std::size_t greedy = argmax_row(q.data(), q.numel());

        DistillRecord rec;
        rec.s = obs;
        rec.a_t = greedy;
        if (mode == TeacherMode::Softmax)
            rec.teacher_p = softmax_prescription(std::span<const double>(q.data(), q.numel()));
        ds.records.push_back(std::move(rec));

        std::size_t act = rng.uniform() < explore_eps ? std::size_t(rng.below(kNumActions))
                                                      : greedy;
        StepResult res = env.step(Action(act));
        obs = res.done ? env.reset(seed + (++episode)) : res.obs;
    }
    return ds;
}

namespace {

template <typename T>
void write_raw(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw std::runtime_error("dataset: truncated file");
    return v;
}

} // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("dataset: cannot open for writing: " + path);
    f.write("A2DS", 4);
    write_raw<std::uint32_t>(f, kDatasetVersion);
    write_raw<std::uint64_t>(f, ds.records.size());
    write_raw<std::uint32_t>(f, std::uint32_t(ds.obs_dim));
    write_raw<std::uint32_t>(f, std::uint32_t(ds.num_actions));
    write_raw<std::uint8_t>(f, std::uint8_t(ds.mode));
    for (const DistillRecord& r : ds.records) {
        if (r.s.numel() != ds.obs_dim)
            throw std::invalid_argument("dataset: record dim mismatch");
        f.write(reinterpret_cast<const char*>(r.s.data()), std::streamsize(ds.obs_dim * 8));
        write_raw<std::uint16_t>(f, std::uint16_t(r.a_t));
        if (ds.mode == TeacherMode::Softmax) {
            if (!r.teacher_p || r.teacher_p->size() != ds.num_actions)
                throw std::invalid_argument("dataset: softmax mode record lacks prescription");
            f.write(reinterpret_cast<const char*>(r.teacher_p->probs.data()),
                    std::streamsize(ds.num_actions * 8));
        }
    }
    if (!f) throw std::runtime_error("dataset: write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("dataset: cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "A2DS", 4) != 0)
        throw std::runtime_error("dataset: bad magic in " + path);
    auto version = read_raw<std::uint32_t>(f);
    if (version != kDatasetVersion)
        throw std::runtime_error("dataset: unsupported format version " +
                                 std::to_string(version));
    auto count = read_raw<std::uint64_t>(f);
    auto d = read_raw<std::uint32_t>(f);
    auto na = read_raw<std::uint32_t>(f);
    auto mode = read_raw<std::uint8_t>(f);
    if (mode > 1) throw std::runtime_error("dataset: bad teacher mode");
    Dataset ds;
    ds.obs_dim = d;
    ds.num_actions = na;
    ds.mode = TeacherMode(mode);
    ds.records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        DistillRecord r;
        Tensor s({d});
        f.read(reinterpret_cast<char*>(s.data()), std::streamsize(std::size_t(d) * 8));
        r.s = std::move(s);
        r.a_t = read_raw<std::uint16_t>(f);
        if (ds.mode == TeacherMode::Softmax) {
            std::vector<double> p(na);
            f.read(reinterpret_cast<char*>(p.data()), std::streamsize(std::size_t(na) * 8));
            r.teacher_p = Prescription{std::move(p)};
        }
        if (!f) throw std::runtime_error("dataset: truncated file");
        ds.records.push_back(std::move(r));
    }
    return ds;
}

std::string baseline_name(Baseline b) {
    switch (b) {
    case Baseline::A2pd: return "a2pd";
    case Baseline::Kl: return "kl";
    case Baseline::Ce: return "ce";
    case Baseline::AdvtrainPgd: return "advtrain_pgd";
    }
    return "?";
}

Baseline baseline_from_name(const std::string& name) {
    if (name == "a2pd") return Baseline::A2pd;
    if (name == "kl") return Baseline::Kl;
    if (name == "ce") return Baseline::Ce;
    if (name == "advtrain_pgd") return Baseline::AdvtrainPgd;
    throw std::invalid_argument("unknown baseline: " + name);
}

void DistillConfig::validate() const {
    loss_config().validate();
    if (batch_size == 0) throw std::invalid_argument("DistillConfig: batch_size must be > 0");
    if (learning_rate <= 0.0)
        throw std::invalid_argument("DistillConfig: learning rate must be > 0");
    if (!(split > 0.0 && split < 1.0))
        throw std::invalid_argument("DistillConfig: split must be in (0,1)");
    if (max_epochs == 0) throw std::invalid_argument("DistillConfig: max_epochs must be > 0");
    if (patience > max_epochs)
        throw std::invalid_argument("DistillConfig: patience must be <= max_epochs");
}

LossConfig DistillConfig::loss_config() const {
    LossConfig lc;
    lc.eta = eta;
    lc.beta = beta;
    lc.smoothing = smoothing;
    lc.squared_norm = squared_jr;
    return lc;
}

void TrainLog::write_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("trainlog: cannot open for writing: " + path);
    f << "epoch,train_loss,pgm,jr,val_acc,seconds\n";
    f.precision(17);
    for (const TrainLogRow& r : rows)
        f << r.epoch << ',' << r.train_loss << ',' << r.pgm << ',' << r.jr << ','
          << r.val_acc << ',' << r.seconds << '\n';
    if (!f) throw std::runtime_error("trainlog: write failed: " + path);
}

TrainLog TrainLog::read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("trainlog: cannot open: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "epoch,train_loss,pgm,jr,val_acc,seconds")
        throw std::runtime_error("trainlog: bad header in " + path);
    TrainLog log;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        TrainLogRow r;
        char comma;
        ss >> r.epoch >> comma >> r.train_loss >> comma >> r.pgm >> comma >> r.jr >>
            comma >> r.val_acc >> comma >> r.seconds;
        if (!ss) throw std::runtime_error("trainlog: bad row in " + path);
        log.rows.push_back(r);
    }
    return log;
}

bool TrainLog::same_numbers(const TrainLog& o) const {
    if (rows.size() != o.rows.size()) return false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const TrainLogRow& a = rows[i];
        const TrainLogRow& b = o.rows[i];
        if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.pgm != b.pgm ||
            a.jr != b.jr || a.val_acc != b.val_acc)
            return false;
    }
    return true;
}

double TrainLog::mean_epoch_seconds(std::size_t max_epochs) const {
    if (rows.empty()) throw std::logic_error("trainlog: no epochs timed");
    std::size_t n = std::min(max_epochs, rows.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += rows[i].seconds;
    return acc / double(n);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(std::size_t n, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split_indices: fraction must be in (0,1)");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng = Rng::derive(seed, 0x5eed5117ULL);
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = std::size_t(rng.below(i));
        std::swap(idx[i - 1], idx[j]);
    }
    std::size_t ntrain = std::max<std::size_t>(1, std::size_t(std::floor(double(n) * train_fraction)));
    if (ntrain >= n) ntrain = n - 1;
    std::vector<std::size_t> train(idx.begin(), idx.begin() + std::ptrdiff_t(ntrain));
    std::vector<std::size_t> val(idx.begin() + std::ptrdiff_t(ntrain), idx.end());
    return {std::move(train), std::move(val)};
}

double action_match_accuracy(const PolicyNet& net, const Dataset& ds,
                             std::span<const std::size_t> idx) {
    if (idx.empty()) throw std::invalid_argument("action_match_accuracy: empty index set");
    std::size_t d = ds.obs_dim;
    Tensor x({idx.size(), d});
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) x.at(i, j) = ds.records[idx[i]].s[j];
    Tensor z = mlp_logits_eager(net.params(), x, Activation::Tanh);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < idx.size(); ++i)
        if (argmax_row(&z.at(i, 0), ds.num_actions) == ds.records[idx[i]].a_t) ++hits;
    return double(hits) / double(idx.size());
}

double mean_jr(const PolicyNet& net, const Dataset& ds,
               std::span<const std::size_t> idx, const LossConfig& cfg) {
    if (idx.empty()) throw std::invalid_argument("mean_jr: empty index set");
    double acc = 0.0;
    for (std::size_t i : idx)
        acc += jr_loss(net, ds.records[i].s, ds.records[i].a_t, cfg);
    return acc / double(idx.size());
}

namespace {

// Shared trainer skeleton: shuffled minibatches, per-epoch validation
// accuracy, patience-based early stop, best-checkpoint restore.
struct BatchStats {
    double loss = 0.0;
    double pgm = 0.0;
    double jr = 0.0;
};

// Validation value of the configured objective, evaluated in chunks.
// Adversarial training validates on clean cross entropy.
double val_objective(const PolicyNet& net, const Dataset& ds,
                     std::span<const std::size_t> idx, const DistillConfig& cfg) {
    const std::size_t chunk = 256;
    LossConfig lc = cfg.loss_config();
    double acc = 0.0;
    for (std::size_t off = 0; off < idx.size(); off += chunk) {
        std::size_t bsz = std::min(chunk, idx.size() - off);
        Tensor x({bsz, ds.obs_dim});
        std::vector<std::size_t> a_t(bsz);
        for (std::size_t i = 0; i < bsz; ++i) {
            const DistillRecord& r = ds.records[idx[off + i]];
            for (std::size_t j = 0; j < ds.obs_dim; ++j) x.at(i, j) = r.s[j];
            a_t[i] = r.a_t;
        }
        double batch_val = 0.0;
        if (cfg.baseline == Baseline::A2pd) {
            A2pdBatch b = a2pd_batch_objective(net.params(), x, a_t, lc);
            batch_val = b.total;
        } else {
            Tape t;
            std::vector<Val> pv;
            for (const Tensor& p : net.params()) pv.push_back(t.constant(p));
            Val presc = prescription_rows(t, mlp_logits(t, pv, t.var(x), Activation::Tanh));
            Val loss = t.scale(t.sum(ce_rows(t, presc, a_t)), 1.0 / double(bsz));
            batch_val = loss.value()[0];
        }
        acc += batch_val * double(bsz);
    }
    return acc / double(idx.size());
}

template <typename BatchStep>
TrainResult run_training(const Dataset& ds, const DistillConfig& cfg, BatchStep step_fn) {
    cfg.validate();
    if (ds.records.empty()) throw std::invalid_argument("train_student: empty dataset");
    if (ds.num_actions < 2) throw std::invalid_argument("train_student: need >= 2 actions");

    auto [train_idx, val_idx] = split_indices(ds.records.size(), cfg.split, cfg.seed);

    std::vector<std::size_t> sizes{ds.obs_dim};
    for (std::size_t h : cfg.hidden) sizes.push_back(h);
    sizes.push_back(ds.num_actions);
    Rng init_rng = Rng::derive(cfg.seed, 0xa11ce);
    PolicyNet net(sizes, init_rng);
    Adam opt(cfg.learning_rate, cfg.phi1, cfg.phi2, cfg.adam_eps);

    TrainResult result;
    result.train_idx = train_idx;
    result.val_idx = val_idx;

    PolicyNet best = net;
    double best_acc = -1.0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t wait = 0;

    std::vector<std::size_t> order = train_idx;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        double t0 = now_seconds();
        Rng shuffle_rng = Rng::derive(cfg.seed, 0xe90c4 + epoch);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[std::size_t(shuffle_rng.below(i))]);

        double loss_acc = 0.0, pgm_acc = 0.0, jr_acc = 0.0;
        std::size_t seen = 0;
        for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
            std::size_t bsz = std::min(cfg.batch_size, order.size() - off);
            Tensor x({bsz, ds.obs_dim});
            std::vector<std::size_t> a_t(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                const DistillRecord& r = ds.records[order[off + i]];
                for (std::size_t j = 0; j < ds.obs_dim; ++j) x.at(i, j) = r.s[j];
                a_t[i] = r.a_t;
            }
            BatchStats st = step_fn(net, opt, x, a_t, order, off, bsz);
            if (!std::isfinite(st.loss))
                throw std::runtime_error("train_student: non-finite loss at epoch " +
                                         std::to_string(epoch));
            loss_acc += st.loss * double(bsz);
            pgm_acc += st.pgm * double(bsz);
            jr_acc += st.jr * double(bsz);
            seen += bsz;
        }

        double acc = action_match_accuracy(net, ds, val_idx);
        double vloss = cfg.stop_rule == StopRule::AccuracyThenLoss
                           ? val_objective(net, ds, val_idx, cfg)
                           : 0.0;
        double secs = now_seconds() - t0;
        result.log.rows.push_back({epoch, loss_acc / double(seen), pgm_acc / double(seen),
                                   jr_acc / double(seen), acc, secs});

        bool improved = acc > best_acc;
        if (!improved && cfg.stop_rule == StopRule::AccuracyThenLoss)
            improved = acc >= best_acc && vloss < best_val_loss - cfg.min_val_delta;
        if (improved) {
            best_acc = acc;
            best_val_loss = vloss;
            best = net;
            best_epoch = epoch;
            wait = 0;
        } else {
            ++wait;
            if (wait >= cfg.patience) break;
        }
    }

    result.net = best;
    result.best_epoch = best_epoch;
    return result;
}

} // namespace

TrainResult train_student(const Dataset& ds, const DistillConfig& cfg) {
    LossConfig lc = cfg.loss_config();
    switch (cfg.baseline) {
    case Baseline::A2pd:
        return run_training(ds, cfg,
                            [&](PolicyNet& net, Adam& opt, const Tensor& x,
                                const std::vector<std::size_t>& a_t,
                                const std::vector<std::size_t>&, std::size_t, std::size_t) {
                                A2pdBatch b = a2pd_batch_objective(net.params(), x, a_t, lc);
                                auto grads = grad(*b.tape, b.objective, b.param_vars);
                                opt.step(net.params_mut(), grads);
                                return BatchStats{b.total, b.pgm_mean, b.jr_mean};
                            });
    case Baseline::Ce:
        return run_training(ds, cfg,
                            [&](PolicyNet& net, Adam& opt, const Tensor& x,
                                const std::vector<std::size_t>& a_t,
                                const std::vector<std::size_t>&, std::size_t, std::size_t bsz) {
                                Tape t;
                                std::vector<Val> pv;
                                for (const Tensor& p : net.params()) pv.push_back(t.var(p));
                                Val xs = t.var(x);
                                Val presc = prescription_rows(t, mlp_logits(t, pv, xs, Activation::Tanh));
                                Val loss = t.scale(t.sum(ce_rows(t, presc, a_t)), 1.0 / double(bsz));
                                auto grads = grad(t, loss, pv);
                                opt.step(net.params_mut(), grads);
                                return BatchStats{loss.value()[0], 0.0, 0.0};
                            });
    case Baseline::Kl:
        return run_training(
            ds, cfg,
            [&](PolicyNet& net, Adam& opt, const Tensor& x,
                const std::vector<std::size_t>& a_t, const std::vector<std::size_t>& order,
                std::size_t off, std::size_t bsz) {
                Tensor teacher({bsz, ds.num_actions});
                for (std::size_t i = 0; i < bsz; ++i) {
                    const DistillRecord& r = ds.records[order[off + i]];
                    Prescription tp;
                    if (r.teacher_p) {
                        tp = *r.teacher_p;
                    } else {
                        // clamped one-hot so the KL stays finite
                        std::vector<double> oh(ds.num_actions, 0.0);
                        oh[r.a_t] = 1.0;
                        double s = 0.0;
                        for (double& v : oh) {
                            v = std::clamp(v, kProbClamp, 1.0 - kProbClamp);
                            s += v;
                        }
                        for (double& v : oh) v /= s;
                        tp = Prescription{std::move(oh)};
                    }
                    for (std::size_t aidx = 0; aidx < ds.num_actions; ++aidx)
                        teacher.at(i, aidx) = tp[aidx];
                }
                (void)a_t;
                Tape t;
                std::vector<Val> pv;
                for (const Tensor& p : net.params()) pv.push_back(t.var(p));
                Val xs = t.var(x);
                Val presc = prescription_rows(t, mlp_logits(t, pv, xs, Activation::Tanh));
                Val loss = t.scale(t.sum(kl_rows(t, presc, teacher)), 1.0 / double(bsz));
                auto grads = grad(t, loss, pv);
                opt.step(net.params_mut(), grads);
                return BatchStats{loss.value()[0], 0.0, 0.0};
            });
    case Baseline::AdvtrainPgd:
        throw std::invalid_argument(
            "train_student: advtrain baseline requires train_student_advtrain()");
    }
    throw std::invalid_argument("train_student: unknown baseline");
}

TrainResult train_student_advtrain(const Dataset& ds, const DistillConfig& cfg,
                                   const AttackSpec& attack) {
    if (attack.family != AttackFamily::Pgd)
        throw std::invalid_argument("train_student_advtrain: attack family must be PGD");
    attack.validate();
    return run_training(ds, cfg,
                        [&](PolicyNet& net, Adam& opt, const Tensor& x,
                            const std::vector<std::size_t>& a_t,
                            const std::vector<std::size_t>&, std::size_t, std::size_t bsz) {
                            Tensor adv = pgd_batch(net, x, a_t, attack.epsilon, attack.steps,
                                                   attack.projection);
                            Tape t;
                            std::vector<Val> pv;
                            for (const Tensor& p : net.params()) pv.push_back(t.var(p));
                            Val xs = t.var(adv);
                            Val presc = prescription_rows(t, mlp_logits(t, pv, xs, Activation::Tanh));
                            Val loss = t.scale(t.sum(ce_rows(t, presc, a_t)), 1.0 / double(bsz));
                            auto grads = grad(t, loss, pv);
                            opt.step(net.params_mut(), grads);
                            return BatchStats{loss.value()[0], 0.0, 0.0};
                        });
}

} // namespace a2pd
