#include "plab/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

namespace plab {
namespace {

// rng stream tags; dataio uses 1 and 2 internally
constexpr std::uint64_t kInitStream = 3;
constexpr std::uint64_t kShuffleStream = 4;
constexpr std::uint64_t kAugmentStream = 5;
constexpr std::uint64_t kDropoutStream = 6;

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    threads = std::min(threads, n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t k = next.fetch_add(1);
                if (k >= n) return;
                try {
                    fn(k);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0))
        throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("TrainConfig: val_fraction must be in (0,1)");
    loss.validate();
    augment.validate();
    model.validate();
}

TrainResult train(const TrainConfig& cfg, const Dataset& train_set,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    if (cfg.model.input_dim != train_set.feature_dim ||
        cfg.model.num_classes != train_set.num_classes())
        throw std::invalid_argument("train: dataset dims do not match model config");

    auto [tr, val] = split_train_val(train_set, cfg.val_fraction, cfg.seed);

    TrainResult result;
    ModelParams params = init_params(cfg.model, derive_seed(cfg.seed, {kInitStream}));
    AdamState adam = AdamState::init(params.values.size(), cfg.learning_rate);
    result.best_params = params;
    result.best_metric = -std::numeric_limits<double>::infinity();
    result.best_epoch = 0;

    std::size_t threads = cfg.threads;
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());

    Vec grads(params.values.size());
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();

        const auto batches =
            make_batches(tr, cfg.batch_size, true, derive_seed(cfg.seed, {kShuffleStream, epoch}));
        double loss_sum = 0.0;
        std::size_t item_count = 0;

        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            Rng aug_rng(derive_seed(cfg.seed, {kAugmentStream, epoch, bi}));
            const auto sub_batches = augment_batch(batches[bi], cfg.augment, aug_rng);

            std::vector<const TrainItem*> items;
            for (const auto& sub : sub_batches)
                for (const TrainItem& item : sub) items.push_back(&item);
            const std::size_t n = items.size();

            std::vector<Vec> item_grads(n);
            Vec item_loss(n, 0.0);
            parallel_for(n, threads, [&](std::size_t k) {
                ForwardCache cache;
                Rng drop_rng(derive_seed(cfg.seed, {kDropoutStream, epoch, bi, k}));
                model_forward(params, cfg.model, items[k]->features, Mode::train, &drop_rng,
                              &cache);
                const FocalResult fr = focal_loss(cache.clip_probs, items[k]->target, cfg.loss);
                item_loss[k] = fr.loss;
                ModelGrads g(params.layout);
                model_backward(params, cfg.model, cache, items[k]->features, fr.dloss_dp, g);
                item_grads[k] = std::move(g.values);
            });

            // thread-count-independent reduction: strict item order
            std::fill(grads.begin(), grads.end(), 0.0);
            for (std::size_t k = 0; k < n; ++k) {
                axpy(1.0, item_grads[k], grads);
                loss_sum += item_loss[k];
            }
            item_count += n;
            const double scale = 1.0 / static_cast<double>(n);
            for (double& g : grads) g *= scale;
            adam_step(params.values, grads, adam);
        }

        const double train_loss = loss_sum / static_cast<double>(item_count);
        if (!std::isfinite(train_loss))
            throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));

        const MetricsReport val_report = evaluate(params, cfg.model, val, 0.5);
        const auto t1 = std::chrono::steady_clock::now();

        EpochStats stats;
        stats.train_loss = train_loss;
        stats.val_macro_f1 = val_report.macro_f1;
        stats.val_micro_f1 = val_report.micro_f1;
        stats.seconds = std::chrono::duration<double>(t1 - t0).count();
        result.history.epochs.push_back(stats);

        const double metric = cfg.selection_metric == SelectionMetric::macro_f1
                                  ? val_report.macro_f1
                                  : val_report.micro_f1;
        if (metric > result.best_metric) {
            result.best_metric = metric;
            result.best_epoch = epoch;
            result.best_params = params;
        }
        if (on_epoch) on_epoch(epoch, stats);
    }
    return result;
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path,
                       bool with_timing) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write history: " + path.string());
    out << "epoch,train_loss,val_macro_f1,val_micro_f1,seconds\n";
    for (std::size_t e = 0; e < history.epochs.size(); ++e) {
        const EpochStats& s = history.epochs[e];
        out << (e + 1) << ',' << fmt("%.9g", s.train_loss) << ',' << fmt("%.6f", s.val_macro_f1)
            << ',' << fmt("%.6f", s.val_micro_f1) << ','
            << (with_timing ? fmt("%.3f", s.seconds) : std::string("0.000")) << '\n';
    }
}

ExperimentResult run_experiment(const std::filesystem::path& data_root, TrainConfig cfg,
                                const std::filesystem::path& out_dir, bool with_timing,
                                const EpochCallback& on_epoch) {
    const Dataset all = load_dataset(data_root);
    const Dataset train_split = subset(all, Split::train);
    const Dataset test_split = subset(all, Split::test);
    if (train_split.examples.empty()) throw std::runtime_error("run_experiment: empty train split");
    if (test_split.examples.empty()) throw std::runtime_error("run_experiment: empty test split");

    // audit: no test clip may reach training or validation
    std::set<std::string> train_ids;
    for (const Example& ex : train_split.examples) train_ids.insert(ex.clip_id);
    for (const Example& ex : test_split.examples)
        if (train_ids.count(ex.clip_id))
            throw std::logic_error("run_experiment: clip in both splits: " + ex.clip_id);

    cfg.model.input_dim = all.feature_dim;
    cfg.model.num_classes = all.num_classes();

    ExperimentResult result;
    result.train = train(cfg, train_split, on_epoch);
    result.test_report = evaluate(result.train.best_params, cfg.model, test_split, 0.5);

    std::filesystem::create_directories(out_dir);
    save_checkpoint(result.train.best_params, out_dir / "checkpoint.plab");
    write_history_csv(result.train.history, out_dir / "history.csv", with_timing);
    write_report_csv(result.test_report, out_dir / "report.csv");
    return result;
}

}  // namespace plab
