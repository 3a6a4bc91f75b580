#include "cli.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "f1_plot.hpp"
#include "plab/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

namespace plab::cli {
namespace {

using nlohmann::json;

SelectionMetric parse_selection(const std::string& s) {
    if (s == "macro_f1") return SelectionMetric::macro_f1;
    if (s == "micro_f1") return SelectionMetric::micro_f1;
    throw std::invalid_argument("selection_metric must be macro_f1 or micro_f1, got '" + s + "'");
}

const char* selection_name(SelectionMetric m) {
    return m == SelectionMetric::macro_f1 ? "macro_f1" : "micro_f1";
}

// Strict mirror of TrainConfig; unknown keys are rejected.
void apply_config_json(TrainConfig& cfg, const json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "epochs") {
            cfg.epochs = value.get<std::size_t>();
        } else if (key == "batch_size") {
            cfg.batch_size = value.get<std::size_t>();
        } else if (key == "learning_rate") {
            cfg.learning_rate = value.get<double>();
        } else if (key == "val_fraction") {
            cfg.val_fraction = value.get<double>();
        } else if (key == "seed") {
            cfg.seed = value.get<std::uint64_t>();
        } else if (key == "threads") {
            cfg.threads = value.get<std::size_t>();
        } else if (key == "selection_metric") {
            cfg.selection_metric = parse_selection(value.get<std::string>());
        } else if (key == "loss") {
            for (const auto& [k2, v2] : value.items()) {
                if (k2 == "alpha")
                    cfg.loss.alpha = v2.get<double>();
                else if (k2 == "gamma")
                    cfg.loss.gamma = v2.get<double>();
                else
                    throw std::invalid_argument("config: unknown key 'loss." + k2 + "'");
            }
        } else if (key == "augment") {
            for (const auto& [k2, v2] : value.items()) {
                if (k2 == "beta_alpha")
                    cfg.augment.beta_alpha = v2.get<double>();
                else if (k2 == "mixup_prob")
                    cfg.augment.mixup_prob = v2.get<double>();
                else if (k2 == "concat_prob")
                    cfg.augment.concat_prob = v2.get<double>();
                else
                    throw std::invalid_argument("config: unknown key 'augment." + k2 + "'");
            }
        } else if (key == "model") {
            for (const auto& [k2, v2] : value.items()) {
                if (k2 == "hidden")
                    cfg.model.hidden = v2.get<std::size_t>();
                else if (k2 == "dropout")
                    cfg.model.dropout = v2.get<double>();
                else if (k2 == "recurrent_dropout")
                    cfg.model.recurrent_dropout = v2.get<double>();
                else if (k2 == "attention_clip")
                    cfg.model.attention_clip = v2.get<double>();
                else if (k2 == "input_dim")
                    cfg.model.input_dim = v2.get<std::size_t>();
                else if (k2 == "num_classes")
                    cfg.model.num_classes = v2.get<std::size_t>();
                else
                    throw std::invalid_argument("config: unknown key 'model." + k2 + "'");
            }
        } else {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
    }
}

TrainConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    TrainConfig cfg;
    try {
        json j = json::parse(in);
        apply_config_json(cfg, j);
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: " + std::string(e.what()));
    }
    return cfg;
}

json config_to_json(const TrainConfig& cfg) {
    json j;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["learning_rate"] = cfg.learning_rate;
    j["val_fraction"] = cfg.val_fraction;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["selection_metric"] = selection_name(cfg.selection_metric);
    j["loss"] = {{"alpha", cfg.loss.alpha}, {"gamma", cfg.loss.gamma}};
    j["augment"] = {{"beta_alpha", cfg.augment.beta_alpha},
                    {"mixup_prob", cfg.augment.mixup_prob},
                    {"concat_prob", cfg.augment.concat_prob}};
    j["model"] = {{"input_dim", cfg.model.input_dim},
                  {"num_classes", cfg.model.num_classes},
                  {"hidden", cfg.model.hidden},
                  {"dropout", cfg.model.dropout},
                  {"recurrent_dropout", cfg.model.recurrent_dropout},
                  {"attention_clip", cfg.model.attention_clip}};
    return j;
}

struct SynthArgs {
    std::string out;
    std::size_t clips = 100;
    std::size_t classes = 5;
    std::size_t timesteps = 10;
    std::size_t dim = 16;
    double mask_rate = 0.0;
    double noise = 0.1;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
    const Dataset ds = generate_synthetic(a.clips, a.classes, a.timesteps, a.dim, a.mask_rate,
                                          a.noise, a.seed, a.test_fraction);
    save_dataset(ds, a.out);
    std::size_t train_count = 0;
    for (const Example& ex : ds.examples) train_count += ex.split == Split::train ? 1 : 0;
    std::fprintf(stderr, "wrote %zu clips (%zu train, %zu test) to %s\n", ds.size(), train_count,
                 ds.size() - train_count, a.out.c_str());
    return 0;
}

struct TrainArgs {
    std::string data, out, config_path, selection;
    std::size_t epochs = 0, batch_size = 0, hidden = 0, threads = 0;
    double lr = 0, val_fraction = 0, alpha = 0, gamma = 0, beta_alpha = 0, mixup_prob = 0,
           concat_prob = 0, dropout = 0, recurrent_dropout = 0, attention_clip = 0;
    std::uint64_t seed = 0;
    bool timing = false;

    CLI::Option *o_epochs = nullptr, *o_batch = nullptr, *o_hidden = nullptr,
                *o_threads = nullptr, *o_lr = nullptr, *o_val = nullptr, *o_alpha = nullptr,
                *o_gamma = nullptr, *o_beta = nullptr, *o_mixup = nullptr, *o_concat = nullptr,
                *o_dropout = nullptr, *o_rdropout = nullptr, *o_clip = nullptr, *o_seed = nullptr,
                *o_selection = nullptr;
};

int cmd_train(const TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config_path.empty()) cfg = load_config_file(a.config_path);
    // command-line flags override config-file values
    if (a.o_epochs->count()) cfg.epochs = a.epochs;
    if (a.o_batch->count()) cfg.batch_size = a.batch_size;
    if (a.o_hidden->count()) cfg.model.hidden = a.hidden;
    if (a.o_threads->count()) cfg.threads = a.threads;
    if (a.o_lr->count()) cfg.learning_rate = a.lr;
    if (a.o_val->count()) cfg.val_fraction = a.val_fraction;
    if (a.o_alpha->count()) cfg.loss.alpha = a.alpha;
    if (a.o_gamma->count()) cfg.loss.gamma = a.gamma;
    if (a.o_beta->count()) cfg.augment.beta_alpha = a.beta_alpha;
    if (a.o_mixup->count()) cfg.augment.mixup_prob = a.mixup_prob;
    if (a.o_concat->count()) cfg.augment.concat_prob = a.concat_prob;
    if (a.o_dropout->count()) cfg.model.dropout = a.dropout;
    if (a.o_rdropout->count()) cfg.model.recurrent_dropout = a.recurrent_dropout;
    if (a.o_clip->count()) cfg.model.attention_clip = a.attention_clip;
    if (a.o_seed->count()) cfg.seed = a.seed;
    if (a.o_selection->count()) cfg.selection_metric = parse_selection(a.selection);
    cfg.validate();

    // dims come from the dataset; read them off meta.json so the effective
    // config can be echoed up front, before the (possibly long) run
    {
        std::ifstream meta(std::filesystem::path(a.data) / "meta.json", std::ios::binary);
        if (!meta) throw std::runtime_error("cannot open " + a.data + "/meta.json");
        try {
            const json j = json::parse(meta);
            cfg.model.input_dim = j.at("feature_dim").get<std::size_t>();
            cfg.model.num_classes = j.at("class_names").size();
        } catch (const json::exception& e) {
            throw std::runtime_error("meta.json: " + std::string(e.what()));
        }
    }
    std::filesystem::create_directories(a.out);
    {
        std::ofstream echo(std::filesystem::path(a.out) / "config_effective.json",
                           std::ios::binary);
        if (!echo) throw std::runtime_error("cannot write config_effective.json");
        echo << config_to_json(cfg).dump(2) << "\n";
    }

    const std::size_t total_epochs = cfg.epochs;
    const ExperimentResult result = run_experiment(
        a.data, cfg, a.out, a.timing, [total_epochs](std::size_t epoch, const EpochStats& s) {
            std::fprintf(stderr,
                         "epoch %zu/%zu  loss=%.6f  val_macro_f1=%.4f  val_micro_f1=%.4f  (%.2fs)\n",
                         epoch, total_epochs, s.train_loss, s.val_macro_f1, s.val_micro_f1,
                         s.seconds);
        });

    std::printf("best_epoch %zu\n", result.train.best_epoch);
    std::printf("best_val_%s %.6f\n", selection_name(cfg.selection_metric),
                result.train.best_metric);
    std::printf("test_macro_f1 %.6f\n", result.test_report.macro_f1);
    std::printf("test_micro_f1 %.6f\n", result.test_report.micro_f1);
    return 0;
}

struct EvaluateArgs {
    std::string data, checkpoint, split = "test", report_path, plot_path;
    double threshold = 0.5;
    double attention_clip = 10.0;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const ModelParams params = load_checkpoint(a.checkpoint);
    Split split;
    if (a.split == "train") {
        split = Split::train;
    } else if (a.split == "test") {
        split = Split::test;
    } else {
        throw std::invalid_argument("--split must be train or test");
    }

    const Dataset all = load_dataset(a.data);
    const Dataset part = subset(all, split);
    if (part.examples.empty())
        throw std::runtime_error("evaluate: split '" + a.split + "' is empty");

    ModelConfig cfg;
    cfg.input_dim = params.layout.input_dim;
    cfg.hidden = params.layout.hidden;
    cfg.num_classes = params.layout.num_classes;
    cfg.dropout = 0.0;
    cfg.recurrent_dropout = 0.0;
    cfg.attention_clip = a.attention_clip;

    const MetricsReport report = evaluate(params, cfg, part, a.threshold);
    std::printf("macro_precision %.6f\n", report.macro_precision);
    std::printf("macro_recall %.6f\n", report.macro_recall);
    std::printf("macro_f1 %.6f\n", report.macro_f1);
    std::printf("micro_f1 %.6f\n", report.micro_f1);
    if (!a.report_path.empty()) write_report_csv(report, a.report_path);
    if (!a.plot_path.empty()) emit_f1_plot(report, a.plot_path);
    return 0;
}

struct GradcheckArgs {
    std::uint64_t seed = 0;
    double epsilon = 1e-5;
    double tolerance = 1e-4;
    std::size_t dim = 3, hidden = 2, classes = 2, timesteps = 4, clips = 3;
    double alpha = 0.75, gamma = 2.0;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    const Dataset ds = generate_synthetic(a.clips, a.classes, a.timesteps, a.dim,
                                          /*mask_rate=*/0.25, /*noise_scale=*/1.0,
                                          derive_seed(a.seed, {17}), /*test_fraction=*/0.0);
    std::vector<const Example*> batch;
    for (const Example& ex : ds.examples) batch.push_back(&ex);

    ModelConfig cfg;
    cfg.input_dim = a.dim;
    cfg.hidden = a.hidden;
    cfg.num_classes = a.classes;
    LossConfig loss_cfg{a.alpha, a.gamma};

    const double err = finite_difference_check(cfg, loss_cfg, batch, a.seed, a.epsilon);
    std::printf("max_relative_error %.9e\n", err);
    if (err < a.tolerance) return 0;
    std::fprintf(stderr, "gradient check failed: %.9e >= tolerance %.9e\n", err, a.tolerance);
    return 2;
}

struct PreviewArgs {
    std::string data, out = "-";
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    double beta_alpha = 0.2, mixup_prob = 0.5, concat_prob = 0.5;
};

int cmd_preview(const PreviewArgs& a) {
    const Dataset all = load_dataset(a.data);
    const Dataset train_split = subset(all, Split::train);
    if (train_split.examples.empty()) throw std::runtime_error("augment-preview: train split is empty");
    const auto batches = make_batches(train_split, a.batch_size, false, 0);

    AugmentConfig cfg{a.beta_alpha, a.mixup_prob, a.concat_prob};
    Rng rng(a.seed);
    const auto sub_batches = augment_batch(batches.front(), cfg, rng);

    json out;
    out["seed"] = a.seed;
    out["config"] = {{"beta_alpha", cfg.beta_alpha},
                     {"mixup_prob", cfg.mixup_prob},
                     {"concat_prob", cfg.concat_prob}};
    out["sub_batches"] = json::array();
    for (const auto& sub : sub_batches) {
        json jsub;
        jsub["timesteps"] = sub.front().features.timesteps;
        jsub["items"] = json::array();
        for (const TrainItem& item : sub) {
            double mean = 0.0, lo = item.features.data[0], hi = item.features.data[0];
            for (double v : item.features.data) {
                mean += v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            mean /= static_cast<double>(item.features.data.size());
            json ji;
            ji["provenance"] = item.provenance;
            ji["targets"] = item.target.targets;
            ji["mask"] = item.target.mask;
            ji["feature_mean"] = mean;
            ji["feature_min"] = lo;
            ji["feature_max"] = hi;
            jsub["items"].push_back(std::move(ji));
        }
        out["sub_batches"].push_back(std::move(jsub));
    }

    const std::string text = out.dump(2) + "\n";
    if (a.out == "-") {
        std::fputs(text.c_str(), stdout);
    } else {
        std::ofstream f(a.out, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + a.out);
        f << text;
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"plab: multi-label, partial-label sequence classifier over embedding sequences"};
    app.require_subcommand(1);

    SynthArgs sy;
    auto* synth = app.add_subcommand("synth", "generate a synthetic planted-pattern dataset");
    synth->add_option("--out", sy.out, "output dataset directory")->required();
    synth->add_option("--clips", sy.clips, "number of clips");
    synth->add_option("--classes", sy.classes, "number of classes");
    synth->add_option("--timesteps", sy.timesteps, "timesteps per clip");
    synth->add_option("--dim", sy.dim, "feature dimension");
    synth->add_option("--mask-rate", sy.mask_rate, "probability a label becomes unknown");
    synth->add_option("--noise", sy.noise, "noise scale");
    synth->add_option("--test-fraction", sy.test_fraction, "fraction of clips in the test split");
    synth->add_option("--seed", sy.seed, "generator seed");

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train on the train split, test on the test split");
    train->add_option("--data", ta.data, "dataset directory")->required();
    train->add_option("--out", ta.out, "output directory")->required();
    train->add_option("--config", ta.config_path, "JSON config file (flags override it)");
    ta.o_epochs = train->add_option("--epochs", ta.epochs, "training epochs");
    ta.o_batch = train->add_option("--batch-size", ta.batch_size, "batch size");
    ta.o_lr = train->add_option("--lr", ta.lr, "Adam learning rate");
    ta.o_seed = train->add_option("--seed", ta.seed, "run seed");
    ta.o_val = train->add_option("--val-fraction", ta.val_fraction, "validation fraction");
    ta.o_alpha = train->add_option("--alpha", ta.alpha, "focal loss alpha");
    ta.o_gamma = train->add_option("--gamma", ta.gamma, "focal loss gamma");
    ta.o_beta = train->add_option("--beta-alpha", ta.beta_alpha, "mix-up Beta shape");
    ta.o_mixup = train->add_option("--mixup-prob", ta.mixup_prob, "mix-up probability");
    ta.o_concat = train->add_option("--concat-prob", ta.concat_prob, "concat probability");
    ta.o_hidden = train->add_option("--hidden", ta.hidden, "LSTM units per direction");
    ta.o_dropout = train->add_option("--dropout", ta.dropout, "input dropout rate");
    ta.o_rdropout =
        train->add_option("--recurrent-dropout", ta.recurrent_dropout, "recurrent dropout rate");
    ta.o_clip = train->add_option("--attention-clip", ta.attention_clip, "attention score clamp");
    ta.o_selection =
        train->add_option("--selection", ta.selection, "checkpoint metric: macro_f1|micro_f1");
    ta.o_threads = train->add_option("--threads", ta.threads, "worker threads (0 = hardware)");
    train->add_flag("--timing", ta.timing, "write measured wall time into history.csv");

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset split");
    evaluate->add_option("--data", ev.data, "dataset directory")->required();
    evaluate->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
    evaluate->add_option("--split", ev.split, "train|test (default test)");
    evaluate->add_option("--threshold", ev.threshold, "decision threshold");
    evaluate->add_option("--attention-clip", ev.attention_clip, "attention score clamp");
    evaluate->add_option("--report", ev.report_path, "write per-class CSV report here");
    evaluate->add_option("--plot", ev.plot_path, "write per-class F1 SVG chart here");

    GradcheckArgs gc;
    auto* gradcheck =
        app.add_subcommand("gradcheck", "compare analytic gradients to central differences");
    gradcheck->add_option("--seed", gc.seed, "parameter/batch seed");
    gradcheck->add_option("--epsilon", gc.epsilon, "finite-difference step");
    gradcheck->add_option("--tolerance", gc.tolerance, "max relative error to pass");
    gradcheck->add_option("--dim", gc.dim, "input dimension");
    gradcheck->add_option("--hidden", gc.hidden, "LSTM units per direction");
    gradcheck->add_option("--classes", gc.classes, "number of classes");
    gradcheck->add_option("--timesteps", gc.timesteps, "timesteps per clip");
    gradcheck->add_option("--clips", gc.clips, "batch size");
    gradcheck->add_option("--alpha", gc.alpha, "focal loss alpha");
    gradcheck->add_option("--gamma", gc.gamma, "focal loss gamma");

    PreviewArgs pv;
    auto* preview =
        app.add_subcommand("augment-preview", "show augmentation outputs for the first batch");
    preview->add_option("--data", pv.data, "dataset directory")->required();
    preview->add_option("--out", pv.out, "output file, - for stdout");
    preview->add_option("--batch-size", pv.batch_size, "batch size");
    preview->add_option("--seed", pv.seed, "augmentation seed");
    preview->add_option("--beta-alpha", pv.beta_alpha, "mix-up Beta shape");
    preview->add_option("--mixup-prob", pv.mixup_prob, "mix-up probability");
    preview->add_option("--concat-prob", pv.concat_prob, "concat probability");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(sy);
        if (train->parsed()) return cmd_train(ta);
        if (evaluate->parsed()) return cmd_evaluate(ev);
        if (gradcheck->parsed()) return cmd_gradcheck(gc);
        if (preview->parsed()) return cmd_preview(pv);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace plab::cli
