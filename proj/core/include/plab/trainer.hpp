#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "plab/augment.hpp"
#include "plab/dataio.hpp"
#include "plab/loss_optim.hpp"
#include "plab/metrics.hpp"
#include "plab/model.hpp"

namespace plab {

enum class SelectionMetric { macro_f1, micro_f1 };

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    double learning_rate = 5e-4;
    double val_fraction = 0.15;
    LossConfig loss;
    AugmentConfig augment;
    ModelConfig model;
    std::uint64_t seed = 0;
    SelectionMetric selection_metric = SelectionMetric::macro_f1;
    std::size_t threads = 0;  // 0 = hardware concurrency

    void validate() const;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_macro_f1 = 0.0;
    double val_micro_f1 = 0.0;
    double seconds = 0.0;  // measured wall time; not part of reproducible artifacts
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
};

struct TrainResult {
    ModelParams best_params;
    TrainHistory history;
    std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
    double best_metric = 0.0;
};

using EpochCallback = std::function<void(std::size_t epoch, const EpochStats&)>;

// Full training loop: per-epoch shuffle, augmentation, forward/backward with
// per-item gradient buffers reduced in item order, Adam, validation, and
// best-checkpoint tracking (ties keep the earlier epoch). Deterministic under
// (dataset, config, seed) regardless of thread count.
TrainResult train(const TrainConfig& cfg, const Dataset& train_set,
                  const EpochCallback& on_epoch = {});

// history.csv: header `epoch,train_loss,val_macro_f1,val_micro_f1,seconds`.
// The seconds column is written as 0.000 unless with_timing is set, keeping
// rerun artifacts byte-identical by default.
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path,
                       bool with_timing);

struct ExperimentResult {
    TrainResult train;
    MetricsReport test_report;
};

// Loads the dataset, trains on its train split, evaluates the best checkpoint
// on the test split, and writes checkpoint.plab, history.csv and report.csv
// into out_dir. Model input_dim/num_classes are taken from the dataset.
ExperimentResult run_experiment(const std::filesystem::path& data_root, TrainConfig cfg,
                                const std::filesystem::path& out_dir, bool with_timing = false,
                                const EpochCallback& on_epoch = {});

}  // namespace plab
