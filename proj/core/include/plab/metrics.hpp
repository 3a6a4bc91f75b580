#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "plab/dataio.hpp"
#include "plab/matrix.hpp"
#include "plab/model.hpp"

namespace plab {

struct ClassCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    bool operator==(const ClassCounts&) const = default;
};

using ConfusionCounts = std::vector<ClassCounts>;

struct ClassPrf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool degenerate = false;  // some 0/0 denominator hit the 0-convention
};

struct MetricsReport {
    std::vector<std::string> class_names;
    ConfusionCounts counts;
    std::vector<ClassPrf> per_class;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double micro_precision = 0.0;
    double micro_recall = 0.0;
    double micro_f1 = 0.0;
    double threshold = 0.5;
};

// Tallies per-class counts over observed (label != 0) pairs only; a prediction
// is positive iff p > threshold (ties at the threshold count negative).
ConfusionCounts confusion_counts(const std::vector<Vec>& clip_probs,
                                 const std::vector<LabelVector>& labels, double threshold);

// P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R); 0/0 yields 0.
ClassPrf class_prf1(const ClassCounts& counts);

// Fills macro (unweighted means) and micro (rates of summed counts) fields.
void aggregate(MetricsReport& report);

// Eval-mode forward over every clip, then the above. Deterministic.
MetricsReport evaluate(const ModelParams& params, const ModelConfig& cfg, const Dataset& dataset,
                       double threshold);

// CSV: header `class,tp,fp,fn,tn,precision,recall,f1`, one row per class,
// then `__macro__` and `__micro__` rows over summed counts; 6 decimals.
std::string report_to_csv(const MetricsReport& report);
void write_report_csv(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace plab
