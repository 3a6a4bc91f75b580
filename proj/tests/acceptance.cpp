// Acceptance suite: one check per shipped guarantee, one PASS/FAIL line each.
// Usage: acceptance [criterion-number ...] [--openmic DIR]
// Exit code is the number of failed criteria (skipped optional checks pass).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "plab/augment.hpp"
#include "plab/trainer.hpp"
#include "test_util.hpp"

using namespace plab;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    bool skipped = false;
    std::string detail;
};

Outcome pass(std::string detail) { return {true, false, std::move(detail)}; }
Outcome fail(std::string detail) { return {false, false, std::move(detail)}; }

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

// ---- 1: gradient fidelity -------------------------------------------------

Outcome criterion_gradients() {
    const auto t0 = Clock::now();
    ModelConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden = 2;
    cfg.num_classes = 2;
    const LossConfig loss_cfg;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Dataset ds =
            generate_synthetic(3, 2, 4, 3, 0.25, 1.0, derive_seed(seed, {17}), 0.0);
        std::vector<const Example*> batch;
        for (const auto& ex : ds.examples) batch.push_back(&ex);
        const double err = finite_difference_check(cfg, loss_cfg, batch, seed, 1e-5);
        worst = std::max(worst, err);
        if (err >= 1e-4)
            return fail("seed " + std::to_string(seed) + ": max rel err " + fmt("%.3e", err));
    }
    const double secs = seconds_since(t0);
    if (secs >= 60.0) return fail("runtime " + fmt("%.1f", secs) + "s >= 60s");
    return pass("worst of 5 seeds " + fmt("%.3e", worst) + " < 1e-4 in " + fmt("%.1f", secs) +
                "s");
}

// ---- 2: loss-formula oracle -----------------------------------------------

Outcome criterion_loss_oracle() {
    const LossConfig cfg;  // alpha 0.75, gamma 2
    // independently computed: 0.75*0.25*ln2 and 0.25*0.81*ln10
    const double want_pos = 0.12996509635498973;
    const double want_neg = 0.46627348133129426;
    const double got_pos = focal_loss(Vec{0.5}, TargetMask{{1.0}, {1}}, cfg).loss;
    const double got_neg = focal_loss(Vec{0.9}, TargetMask{{0.0}, {1}}, cfg).loss;
    if (std::abs(got_pos - want_pos) > 1e-9)
        return fail("positive branch " + fmt("%.12f", got_pos) + " != " + fmt("%.12f", want_pos));
    if (std::abs(got_neg - want_neg) > 1e-9)
        return fail("negative branch " + fmt("%.12f", got_neg) + " != " + fmt("%.12f", want_neg));

    const LossConfig bce_cfg{0.5, 0.0};
    Rng rng(404);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t c = 1 + rng.below(8);
        TargetMask tm;
        tm.targets.resize(c);
        tm.mask.resize(c);
        Vec p(c);
        for (std::size_t i = 0; i < c; ++i) {
            tm.targets[i] = rng.uniform();
            tm.mask[i] = rng.uniform() < 0.3 ? 0 : 1;
            p[i] = 1e-6 + (1.0 - 2e-6) * rng.uniform();
        }
        double expected = 0.0;
        std::size_t observed = 0;
        for (std::size_t i = 0; i < c; ++i) {
            if (!tm.mask[i]) continue;
            observed++;
            expected += -0.5 * (tm.targets[i] * std::log(p[i]) +
                                (1.0 - tm.targets[i]) * std::log(1.0 - p[i]));
        }
        expected /= std::max<std::size_t>(1, observed);
        worst = std::max(worst, std::abs(focal_loss(p, tm, bce_cfg).loss - expected));
    }
    if (worst > 1e-12) return fail("gamma=0 vs 0.5*BCE deviates by " + fmt("%.3e", worst));
    return pass("both frozen values within 1e-9; gamma=0 case within " + fmt("%.1e", worst) +
                " of 0.5*BCE on 1000 inputs");
}

// ---- 3: mask leakage ------------------------------------------------------

Outcome criterion_mask_leakage() {
    const LossConfig cfg;
    Rng rng(777);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t c = 2 + rng.below(8);
        TargetMask tm;
        tm.targets.resize(c);
        tm.mask.resize(c);
        Vec p(c);
        LabelVector labels(c);
        for (std::size_t i = 0; i < c; ++i) {
            tm.targets[i] = rng.uniform();
            tm.mask[i] = rng.uniform() < 0.5 ? 0 : 1;
            p[i] = rng.uniform();
            labels[i] = static_cast<std::int8_t>(static_cast<int>(rng.below(3)) - 1);
        }
        const FocalResult base = focal_loss(p, tm, cfg);
        Vec p2 = p;
        TargetMask tm2 = tm;
        for (std::size_t i = 0; i < c; ++i) {
            if (tm.mask[i]) continue;
            p2[i] = rng.uniform() * 20.0 - 10.0;
            tm2.targets[i] = rng.uniform() * 5.0;
        }
        const FocalResult perturbed = focal_loss(p2, tm2, cfg);
        if (perturbed.loss != base.loss) return fail("loss moved under masked perturbation");
        if (perturbed.dloss_dp != base.dloss_dp)
            return fail("gradient moved under masked perturbation");
        for (std::size_t i = 0; i < c; ++i)
            if (!tm.mask[i] && base.dloss_dp[i] != 0.0)
                return fail("masked class carries nonzero gradient");

        // metrics side: flipping predictions at unknown labels changes nothing
        Vec probs_row = p;
        for (double& v : probs_row) v = std::clamp(v, 0.0, 1.0);
        const auto counts1 = confusion_counts({probs_row}, {labels}, 0.5);
        Vec flipped = probs_row;
        for (std::size_t i = 0; i < c; ++i)
            if (labels[i] == kUnknown) flipped[i] = 1.0 - flipped[i];
        const auto counts2 = confusion_counts({flipped}, {labels}, 0.5);
        if (counts1 != counts2) return fail("confusion counts moved at unknown labels");
    }
    return pass("1000 instances: loss, gradients and counts bit-identical under masked "
                "perturbations");
}

// ---- 4: augmentation algebra ----------------------------------------------

Outcome criterion_augment_algebra() {
    const std::int8_t vals[3] = {-1, 0, 1};
    for (auto a : vals)
        for (auto b : vals) {
            const std::int8_t want = (a == 1 || b == 1) ? 1 : (a == -1 && b == -1) ? -1 : 0;
            if (label_or(a, b) != want) return fail("OR table mismatch");
            for (auto c : vals)
                if (label_or(label_or(a, b), c) != label_or(a, label_or(b, c)))
                    return fail("OR not associative");
        }

    Rng rng(88);
    Example ea, eb;
    ea.clip_id = "a";
    eb.clip_id = "b";
    ea.features = FeatureSequence(5, 3);
    eb.features = FeatureSequence(5, 3);
    for (double& v : ea.features.data) v = rng.normal();
    for (double& v : eb.features.data) v = rng.normal();
    ea.labels = {+1, -1, 0};
    eb.labels = {-1, -1, +1};
    for (int trial = 0; trial < 100; ++trial) {
        const double l = rng.uniform();
        const TrainItem m1 = mixup(ea, eb, l);
        const TrainItem m2 = mixup(eb, ea, 1.0 - l);
        if (m1.features.data != m2.features.data || m1.target.targets != m2.target.targets ||
            m1.target.mask != m2.target.mask)
            return fail("mixup symmetry broken at lambda=" + fmt("%.6f", l));
    }
    const TrainItem end = mixup(ea, eb, 1.0);
    if (end.features.data != ea.features.data) return fail("mixup endpoint broken");

    Rng brng(4242);
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double l = sample_mixup_weight(0.2, brng);
        sum += l;
        sum2 += l * l;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    if (std::abs(mean - 0.5) >= 0.02) return fail("Beta mean " + fmt("%.4f", mean));
    if (std::abs(var - 0.17857142857142858) >= 0.02) return fail("Beta var " + fmt("%.4f", var));
    return pass("27-case OR, bit-exact mixup identities, Beta(0.2,0.2) mean " +
                fmt("%.4f", mean) + " var " + fmt("%.4f", var));
}

// ---- 5: metrics oracle equivalence ----------------------------------------

Outcome criterion_metrics_oracle() {
    Rng rng(31337);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t clips = 1 + rng.below(10);
        const std::size_t classes = 1 + rng.below(5);
        std::vector<Vec> probs;
        std::vector<LabelVector> labels;
        for (std::size_t i = 0; i < clips; ++i) {
            Vec p(classes);
            LabelVector l(classes);
            for (std::size_t c = 0; c < classes; ++c) {
                p[c] = rng.uniform();
                l[c] = static_cast<std::int8_t>(static_cast<int>(rng.below(3)) - 1);
            }
            probs.push_back(std::move(p));
            labels.push_back(std::move(l));
        }
        MetricsReport rep;
        for (std::size_t c = 0; c < classes; ++c) rep.class_names.push_back("c");
        rep.counts = confusion_counts(probs, labels, 0.5);
        aggregate(rep);
        const auto naive = testutil::naive_metrics(probs, labels, classes, 0.5);
        for (std::size_t c = 0; c < classes; ++c) {
            if (rep.counts[c] != naive.counts[c]) return fail("count mismatch");
            if (rep.per_class[c].precision != naive.per_class[c].precision ||
                rep.per_class[c].recall != naive.per_class[c].recall ||
                rep.per_class[c].f1 != naive.per_class[c].f1)
                return fail("per-class rate mismatch");
        }
        if (rep.macro_f1 != naive.macro_f1 || rep.micro_f1 != naive.micro_f1 ||
            rep.macro_precision != naive.macro_p || rep.macro_recall != naive.macro_r)
            return fail("aggregate mismatch");
    }
    return pass("100 random instances match the pair-by-pair oracle exactly");
}

// ---- 6: desk-scale learning ------------------------------------------------

Outcome criterion_desk_scale() {
    const auto t0 = Clock::now();
    // 500 clips at test_fraction 0.2 -> exactly 400 train / 100 held out
    const Dataset all = generate_synthetic(500, 5, 10, 16, 0.5, 0.1, 7, 0.2);
    const Dataset train_split = subset(all, Split::train);
    const Dataset test_split = subset(all, Split::test);
    if (train_split.size() != 400) return fail("expected 400 train clips");

    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 32;
    cfg.learning_rate = 5e-4;
    cfg.seed = 7;
    cfg.model.input_dim = 16;
    cfg.model.hidden = 64;
    cfg.model.num_classes = 5;
    const TrainResult result = train(cfg, train_split);

    const MetricsReport on_train = evaluate(result.best_params, cfg.model, train_split, 0.5);
    const MetricsReport on_test = evaluate(result.best_params, cfg.model, test_split, 0.5);
    const double secs = seconds_since(t0);
    const std::string detail = "train macro-F1 " + fmt("%.4f", on_train.macro_f1) +
                               ", held-out macro-F1 " + fmt("%.4f", on_test.macro_f1) + " in " +
                               fmt("%.0f", secs) + "s";
    if (on_train.macro_f1 < 0.99) return fail(detail + " (train < 0.99)");
    if (on_test.macro_f1 < 0.90) return fail(detail + " (held-out < 0.90)");
    if (secs >= 900.0) return fail(detail + " (over 15 min)");
    return pass(detail);
}

// ---- 7: augmentation benefit (directional) ---------------------------------

Outcome criterion_augment_benefit() {
    // scarce-label regime: 200 train clips at mask 0.7 with noisy features and
    // the full-capacity model, where generalization (not optimization speed)
    // is the bottleneck augmentation addresses
    auto run_once = [](std::uint64_t seed, bool augmented) {
        const Dataset all = generate_synthetic(400, 5, 10, 16, 0.7, 0.3, 100 + seed, 0.5);
        const Dataset train_split = subset(all, Split::train);
        const Dataset test_split = subset(all, Split::test);
        TrainConfig cfg;
        cfg.epochs = 200;
        cfg.batch_size = 32;
        cfg.learning_rate = 5e-4;
        cfg.seed = 100 + seed;
        cfg.model.input_dim = 16;
        cfg.model.hidden = 64;
        cfg.model.num_classes = 5;
        if (!augmented) {
            cfg.augment.mixup_prob = 0.0;
            cfg.augment.concat_prob = 0.0;
        }
        const TrainResult result = train(cfg, train_split);
        return evaluate(result.best_params, cfg.model, test_split, 0.5).macro_f1;
    };
    std::vector<double> with_aug, without_aug;
    for (std::uint64_t s = 0; s < 5; ++s) {
        with_aug.push_back(run_once(s, true));
        without_aug.push_back(run_once(s, false));
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    const double m_aug = median(with_aug);
    const double m_plain = median(without_aug);
    const std::string detail = "median held-out macro-F1: augmented " + fmt("%.4f", m_aug) +
                               ", disabled " + fmt("%.4f", m_plain);
    if (m_aug < m_plain) return fail(detail);
    return pass(detail);
}

// ---- 8: determinism ---------------------------------------------------------

Outcome criterion_determinism() {
    testutil::TempDir data_dir("acc_det_data");
    save_dataset(generate_synthetic(60, 3, 8, 8, 0.3, 0.1, 19, 0.2), data_dir.path());
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.seed = 11;
    cfg.model.input_dim = 8;
    cfg.model.hidden = 8;
    cfg.model.num_classes = 3;

    testutil::TempDir out1("acc_det_out1");
    testutil::TempDir out2("acc_det_out2");
    run_experiment(data_dir.path(), cfg, out1.path());
    run_experiment(data_dir.path(), cfg, out2.path());
    if (testutil::slurp(out1.path() / "history.csv") !=
        testutil::slurp(out2.path() / "history.csv"))
        return fail("history.csv differs between reruns");
    if (testutil::slurp(out1.path() / "checkpoint.plab") !=
        testutil::slurp(out2.path() / "checkpoint.plab"))
        return fail("checkpoint differs between reruns");
    return pass("history.csv and checkpoint byte-identical across reruns");
}

// ---- 9: optional real-data smoke -------------------------------------------

Outcome criterion_openmic(const std::string& openmic_dir) {
    if (openmic_dir.empty())
        return {true, true,
                "no converted dataset supplied (pass --openmic DIR with the portable layout)"};

    const Dataset all = load_dataset(openmic_dir);
    const Dataset test_split = subset(all, Split::test);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 32;
    cfg.learning_rate = 5e-4;
    cfg.seed = 1;
    cfg.model.input_dim = all.feature_dim;
    cfg.model.num_classes = all.num_classes();
    const TrainResult result = train(cfg, subset(all, Split::train));
    const MetricsReport rep = evaluate(result.best_params, cfg.model, test_split, 0.5);

    // constant-predictor baselines over the same observed labels
    auto constant_macro_f1 = [&](double p) {
        std::vector<Vec> probs(test_split.size(), Vec(all.num_classes(), p));
        std::vector<LabelVector> labels;
        for (const auto& ex : test_split.examples) labels.push_back(ex.labels);
        MetricsReport r;
        r.class_names = all.class_names;
        r.counts = confusion_counts(probs, labels, 0.5);
        aggregate(r);
        return r.macro_f1;
    };
    const double all_pos = constant_macro_f1(0.99);
    const double all_neg = constant_macro_f1(0.01);
    const std::string detail = "model macro-F1 " + fmt("%.4f", rep.macro_f1) + " vs all-positive " +
                               fmt("%.4f", all_pos) + ", all-negative " + fmt("%.4f", all_neg);
    if (rep.macro_f1 <= all_pos || rep.macro_f1 <= all_neg) return fail(detail);
    return pass(detail);
}

}  // namespace

int main(int argc, char** argv) {
    std::string openmic_dir;
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--openmic" && i + 1 < argc) {
            openmic_dir = argv[++i];
        } else {
            selected.push_back(std::atoi(arg.c_str()));
        }
    }
    auto wanted = [&selected](int id) {
        return selected.empty() ||
               std::find(selected.begin(), selected.end(), id) != selected.end();
    };

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient fidelity (5 seeds, eps 1e-5, < 1e-4)", criterion_gradients},
        {"focal loss formula oracle", criterion_loss_oracle},
        {"mask leakage (loss, gradients, metrics)", criterion_mask_leakage},
        {"augmentation algebra", criterion_augment_algebra},
        {"metrics vs brute-force oracle", criterion_metrics_oracle},
        {"desk-scale learning on planted patterns", criterion_desk_scale},
        {"augmentation benefit under heavy masking", criterion_augment_benefit},
        {"byte-identical rerun artifacts", criterion_determinism},
        {"optional real-data smoke", [&] { return criterion_openmic(openmic_dir); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!wanted(id)) continue;
        Outcome outcome;
        try {
            outcome = criteria[i].second();
        } catch (const std::exception& e) {
            outcome = fail(std::string("exception: ") + e.what());
        }
        const char* tag = outcome.skipped ? "SKIP" : outcome.pass ? "PASS" : "FAIL";
        std::printf("[%s] %d. %s: %s\n", tag, id, criteria[i].first.c_str(),
                    outcome.detail.c_str());
        std::fflush(stdout);
        if (!outcome.pass) ++failures;
    }
    return failures;
}
