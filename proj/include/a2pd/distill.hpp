#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "a2pd/attacks.hpp"
#include "a2pd/dqn.hpp"
#include "a2pd/gridworld.hpp"
#include "a2pd/losses.hpp"
#include "a2pd/policy.hpp"

namespace a2pd {

// One distillation sample: observation, the teacher's greedy action and
// (in softmax mode) the teacher's full prescription.
struct DistillRecord {
    Tensor s;
    std::size_t a_t = 0;
    std::optional<Prescription> teacher_p;
};

struct Dataset {
    std::size_t obs_dim = 0;
    std::size_t num_actions = 0;
    TeacherMode mode = TeacherMode::OneHot;
    std::vector<DistillRecord> records;
};

// Rolls out the greedy teacher with light epsilon-exploration. Labels are
// always the teacher's greedy choice; the exploratory action only steers
// the rollout for state coverage.
Dataset collect_dataset(const PolicyNet& teacher, const GridConfig& env_cfg,
                        std::size_t n, std::uint64_t seed,
                        TeacherMode mode = TeacherMode::OneHot,
                        double explore_eps = 0.05);

// Binary dataset file ("A2DS" magic, little-endian). Prescriptions are
// stored only in softmax mode; one-hot labels reconstruct from the action.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);
constexpr std::uint32_t kDatasetVersion = 1;

enum class Baseline : std::uint8_t { A2pd, Kl, Ce, AdvtrainPgd };

std::string baseline_name(Baseline b);
Baseline baseline_from_name(const std::string& name);

// What counts as a validation improvement for early stopping.
// AccuracyOnly: strictly higher action-match accuracy.
// AccuracyThenLoss: accuracy first, ties broken by the validation loss
// falling by at least min_val_delta (useful when accuracy saturates).
enum class StopRule : std::uint8_t { AccuracyOnly, AccuracyThenLoss };

struct DistillConfig {
    double eta = 1.0 / 3.0;
    double beta = 0.01;
    std::size_t batch_size = 32;
    double learning_rate = 4e-5;
    double phi1 = 0.9;
    double phi2 = 0.999;
    double adam_eps = 1e-7;
    std::size_t max_epochs = 1000;
    std::size_t patience = 60;
    double split = 0.9; // train fraction
    // accuracy saturates quickly on small state spaces; ties are broken
    // by validation loss, and improvements below this delta do not reset
    // the early-stop counter
    double min_val_delta = 1e-4;
    StopRule stop_rule = StopRule::AccuracyThenLoss;
    std::uint64_t seed = 0;
    // single narrow hidden layer: a capacity-limited student keeps the
    // input-gradient regularizer measurable instead of letting the gap
    // loss saturate every state on its own
    std::vector<std::size_t> hidden{16};
    Baseline baseline = Baseline::A2pd;
    double smoothing = 1e-12;
    bool squared_jr = false;

    void validate() const;
    LossConfig loss_config() const;
};

struct TrainLogRow {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double pgm = 0.0;
    double jr = 0.0;
    double val_acc = 0.0;
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;

    void write_csv(const std::string& path) const;
    static TrainLog read_csv(const std::string& path);

    // equality of everything except wall time
    bool same_numbers(const TrainLog& o) const;

    double mean_epoch_seconds(std::size_t max_epochs = 50) const;
};

struct TrainResult {
    PolicyNet net;           // best-validation parameters
    TrainLog log;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    std::size_t best_epoch = 0; // 1-based epoch of the restored checkpoint
};

// Deterministic shuffled split of [0,n) into (train, validation).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(std::size_t n, double train_fraction, std::uint64_t seed);

// Distillation trainer. Minimizes the configured objective over shuffled
// minibatches; stops when validation action-match accuracy has not
// improved for `patience` epochs and restores the best checkpoint.
TrainResult train_student(const Dataset& ds, const DistillConfig& cfg);

// Adversarial-training baseline: every minibatch is attacked with PGD
// against the current student before the cross-entropy update. Exists
// for the training-time comparison.
TrainResult train_student_advtrain(const Dataset& ds, const DistillConfig& cfg,
                                   const AttackSpec& attack);

// Fraction of records whose student argmax matches a_t.
double action_match_accuracy(const PolicyNet& net, const Dataset& ds,
                             std::span<const std::size_t> idx);

// Mean smoothed input-gradient norm over the given records.
double mean_jr(const PolicyNet& net, const Dataset& ds,
               std::span<const std::size_t> idx, const LossConfig& cfg);

} // namespace a2pd
