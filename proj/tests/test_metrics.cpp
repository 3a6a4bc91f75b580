#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "plab/metrics.hpp"
#include "plab/rng.hpp"
#include "test_util.hpp"

using namespace plab;

namespace {

struct RandomInstance {
    std::vector<Vec> probs;
    std::vector<LabelVector> labels;
    std::size_t num_classes;
};

RandomInstance random_instance(Rng& rng, std::size_t max_clips = 10, std::size_t max_classes = 5) {
    RandomInstance inst;
    const std::size_t clips = 1 + rng.below(max_clips);
    inst.num_classes = 1 + rng.below(max_classes);
    for (std::size_t i = 0; i < clips; ++i) {
        Vec p(inst.num_classes);
        LabelVector l(inst.num_classes);
        for (std::size_t c = 0; c < inst.num_classes; ++c) {
            p[c] = rng.uniform();
            l[c] = static_cast<std::int8_t>(static_cast<int>(rng.below(3)) - 1);
        }
        inst.probs.push_back(std::move(p));
        inst.labels.push_back(std::move(l));
    }
    return inst;
}

MetricsReport report_for(const RandomInstance& inst, double threshold = 0.5) {
    MetricsReport rep;
    rep.threshold = threshold;
    for (std::size_t c = 0; c < inst.num_classes; ++c)
        rep.class_names.push_back("c" + std::to_string(c));
    rep.counts = confusion_counts(inst.probs, inst.labels, threshold);
    aggregate(rep);
    return rep;
}

}  // namespace

TEST_CASE("confusion_counts basics") {
    SUBCASE("single observed positive above threshold") {
        const auto counts = confusion_counts({{0.9}}, {{+1}}, 0.5);
        CHECK(counts[0].tp == 1);
        CHECK(counts[0].fp + counts[0].fn + counts[0].tn == 0);
    }
    SUBCASE("unknown labels are excluded entirely") {
        const auto counts = confusion_counts({{0.9}}, {{0}}, 0.5);
        CHECK(counts[0].tp + counts[0].fp + counts[0].fn + counts[0].tn == 0);
    }
    SUBCASE("hand-tallied four-clip confusion") {
        const auto counts = confusion_counts({{0.9}, {0.6}, {0.4}, {0.2}},
                                             {{+1}, {-1}, {+1}, {-1}}, 0.5);
        CHECK(counts[0].tp == 1);
        CHECK(counts[0].fp == 1);
        CHECK(counts[0].fn == 1);
        CHECK(counts[0].tn == 1);
    }
    SUBCASE("a tie at the threshold counts as negative") {
        const auto counts = confusion_counts({{0.5}}, {{+1}}, 0.5);
        CHECK(counts[0].fn == 1);
        CHECK(counts[0].tp == 0);
    }
    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(confusion_counts({{0.5}}, {{+1}, {-1}}, 0.5), std::invalid_argument);
        CHECK_THROWS_AS(confusion_counts({{0.5}}, {{+1, -1}}, 0.5), std::invalid_argument);
    }
}

TEST_CASE("class_prf1") {
    SUBCASE("TP=2 FP=1 FN=1 gives two-thirds across the board") {
        const ClassPrf prf = class_prf1({2, 1, 1, 0});
        CHECK(prf.precision == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(prf.recall == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(prf.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK_FALSE(prf.degenerate);
    }
    SUBCASE("all-zero counts fall back to zero and get flagged") {
        const ClassPrf prf = class_prf1({0, 0, 0, 0});
        CHECK(prf.precision == 0.0);
        CHECK(prf.recall == 0.0);
        CHECK(prf.f1 == 0.0);
        CHECK(prf.degenerate);
    }
    SUBCASE("perfect class") {
        const ClassPrf prf = class_prf1({5, 0, 0, 3});
        CHECK(prf.precision == 1.0);
        CHECK(prf.recall == 1.0);
        CHECK(prf.f1 == 1.0);
    }
}

TEST_CASE("aggregate") {
    SUBCASE("macro F1 averages per-class F1") {
        MetricsReport rep;
        rep.class_names = {"a", "b"};
        rep.counts = {{5, 0, 0, 1}, {0, 2, 3, 1}};  // F1 = 1.0 and 0.0
        aggregate(rep);
        CHECK(rep.per_class[0].f1 == 1.0);
        CHECK(rep.per_class[1].f1 == 0.0);
        CHECK(rep.macro_f1 == 0.5);
    }
    SUBCASE("one class: macro equals micro equals the class F1") {
        MetricsReport rep;
        rep.class_names = {"a"};
        rep.counts = {{3, 1, 2, 4}};
        aggregate(rep);
        CHECK(rep.macro_f1 == rep.per_class[0].f1);
        CHECK(rep.micro_f1 == rep.per_class[0].f1);
    }
    SUBCASE("micro from summed counts") {
        MetricsReport rep;
        rep.class_names = {"a", "b"};
        rep.counts = {{1, 0, 1, 0}, {3, 1, 0, 0}};  // totals TP=4 FP=1 FN=1
        aggregate(rep);
        CHECK(rep.micro_precision == doctest::Approx(0.8).epsilon(1e-15));
        CHECK(rep.micro_recall == doctest::Approx(0.8).epsilon(1e-15));
        CHECK(rep.micro_f1 == doctest::Approx(0.8).epsilon(1e-15));
    }
}

TEST_CASE("metrics match the naive pair-by-pair oracle on random instances") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const RandomInstance inst = random_instance(rng);
        const MetricsReport rep = report_for(inst);
        const auto naive =
            testutil::naive_metrics(inst.probs, inst.labels, inst.num_classes, 0.5);
        for (std::size_t c = 0; c < inst.num_classes; ++c) {
            CHECK(rep.counts[c] == naive.counts[c]);
            CHECK(rep.per_class[c].precision == naive.per_class[c].precision);
            CHECK(rep.per_class[c].recall == naive.per_class[c].recall);
            CHECK(rep.per_class[c].f1 == naive.per_class[c].f1);
        }
        CHECK(rep.macro_f1 == naive.macro_f1);
        CHECK(rep.micro_f1 == naive.micro_f1);
    }
}

TEST_CASE("report invariants on random instances") {
    Rng rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        RandomInstance inst = random_instance(rng);
        const MetricsReport rep = report_for(inst);

        // all rates in [0,1]
        for (const ClassPrf& prf : rep.per_class) {
            CHECK(prf.precision >= 0.0);
            CHECK(prf.precision <= 1.0);
            CHECK(prf.f1 >= 0.0);
            CHECK(prf.f1 <= 1.0);
        }

        // counts conserve observed positives
        for (std::size_t c = 0; c < inst.num_classes; ++c) {
            std::size_t observed_pos = 0;
            for (const auto& l : inst.labels) observed_pos += l[c] == kPresent ? 1 : 0;
            CHECK(rep.counts[c].tp + rep.counts[c].fn == observed_pos);
        }

        // clip-order permutation leaves every number unchanged
        RandomInstance shuffled = inst;
        std::vector<std::size_t> perm(inst.probs.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        Rng prng(trial);
        prng.shuffle(perm);
        for (std::size_t i = 0; i < perm.size(); ++i) {
            shuffled.probs[i] = inst.probs[perm[i]];
            shuffled.labels[i] = inst.labels[perm[i]];
        }
        const MetricsReport rep2 = report_for(shuffled);
        CHECK(rep2.macro_f1 == rep.macro_f1);
        CHECK(rep2.micro_f1 == rep.micro_f1);
        for (std::size_t c = 0; c < inst.num_classes; ++c) CHECK(rep2.counts[c] == rep.counts[c]);

        // flipping predictions at unknown pairs changes nothing
        RandomInstance flipped = inst;
        bool any = false;
        for (std::size_t i = 0; i < flipped.probs.size(); ++i)
            for (std::size_t c = 0; c < inst.num_classes; ++c)
                if (flipped.labels[i][c] == kUnknown) {
                    flipped.probs[i][c] = 1.0 - flipped.probs[i][c];
                    any = true;
                }
        if (any) {
            const MetricsReport rep3 = report_for(flipped);
            CHECK(rep3.macro_f1 == rep.macro_f1);
            CHECK(rep3.micro_f1 == rep.micro_f1);
        }

        // duplicating every clip preserves all rates
        RandomInstance doubled = inst;
        doubled.probs.insert(doubled.probs.end(), inst.probs.begin(), inst.probs.end());
        doubled.labels.insert(doubled.labels.end(), inst.labels.begin(), inst.labels.end());
        const MetricsReport rep4 = report_for(doubled);
        for (std::size_t c = 0; c < inst.num_classes; ++c) {
            CHECK(rep4.per_class[c].precision == rep.per_class[c].precision);
            CHECK(rep4.per_class[c].recall == rep.per_class[c].recall);
            CHECK(rep4.per_class[c].f1 == rep.per_class[c].f1);
        }
        CHECK(rep4.macro_f1 == rep.macro_f1);
        CHECK(rep4.micro_f1 == rep.micro_f1);
    }
}

TEST_CASE("evaluate over a dataset") {
    ModelConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden = 3;
    cfg.num_classes = 2;
    const ModelParams params = init_params(cfg, 5);

    Dataset ds = generate_synthetic(8, 2, 5, 4, 0.0, 0.3, 9, 0.0);

    SUBCASE("all-unknown labels give all-zero counts and metrics") {
        Dataset blank = ds;
        for (auto& ex : blank.examples)
            std::fill(ex.labels.begin(), ex.labels.end(), kUnknown);
        const MetricsReport rep = evaluate(params, cfg, blank, 0.5);
        for (const auto& c : rep.counts) CHECK(c.tp + c.fp + c.fn + c.tn == 0);
        CHECK(rep.macro_f1 == 0.0);
        CHECK(rep.micro_f1 == 0.0);
    }
    SUBCASE("clip order does not matter") {
        Dataset reversed = ds;
        std::reverse(reversed.examples.begin(), reversed.examples.end());
        const MetricsReport a = evaluate(params, cfg, ds, 0.5);
        const MetricsReport b = evaluate(params, cfg, reversed, 0.5);
        CHECK(a.macro_f1 == b.macro_f1);
        CHECK(a.micro_f1 == b.micro_f1);
        for (std::size_t c = 0; c < 2; ++c) CHECK(a.counts[c] == b.counts[c]);
    }
    SUBCASE("duplicating every clip preserves the report rates") {
        Dataset doubled = ds;
        for (const auto& ex : ds.examples) {
            Example copy = ex;
            copy.clip_id += "_dup";
            doubled.examples.push_back(copy);
        }
        const MetricsReport a = evaluate(params, cfg, ds, 0.5);
        const MetricsReport b = evaluate(params, cfg, doubled, 0.5);
        CHECK(a.macro_f1 == b.macro_f1);
        CHECK(a.micro_f1 == b.micro_f1);
    }
    SUBCASE("dimension mismatch is rejected") {
        ModelConfig wrong = cfg;
        wrong.input_dim = 7;
        const ModelParams wrong_params = init_params(wrong, 5);
        CHECK_THROWS_AS(evaluate(wrong_params, wrong, ds, 0.5), std::invalid_argument);
    }
}

TEST_CASE("report CSV format") {
    MetricsReport rep;
    rep.class_names = {"guitar", "piano"};
    rep.counts = {{2, 1, 1, 3}, {0, 0, 0, 4}};
    rep.threshold = 0.5;
    aggregate(rep);
    const std::string csv = report_to_csv(rep);

    CHECK(csv.find("class,tp,fp,fn,tn,precision,recall,f1\n") == 0);
    CHECK(csv.find("guitar,2,1,1,3,0.666667,0.666667,0.666667\n") != std::string::npos);
    CHECK(csv.find("piano,0,0,0,4,0.000000,0.000000,0.000000\n") != std::string::npos);
    CHECK(csv.find("__macro__,2,1,1,7,") != std::string::npos);
    CHECK(csv.find("__micro__,2,1,1,7,") != std::string::npos);

    // trailing rows carry the aggregate rates at 6 decimals
    CHECK(csv.find("__macro__,2,1,1,7,0.333333,0.333333,0.333333\n") != std::string::npos);
}
