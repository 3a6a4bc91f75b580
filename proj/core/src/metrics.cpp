#include "plab/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace plab {
namespace {

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

ClassPrf prf_from(std::size_t tp, std::size_t fp, std::size_t fn) {
    ClassPrf out;
    if (tp + fp == 0) {
        out.precision = 0.0;
        out.degenerate = true;
    } else {
        out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    if (tp + fn == 0) {
        out.recall = 0.0;
        out.degenerate = true;
    } else {
        out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
    if (out.precision + out.recall == 0.0) {
        out.f1 = 0.0;
        out.degenerate = true;
    } else {
        out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    }
    return out;
}

}  // namespace

ConfusionCounts confusion_counts(const std::vector<Vec>& clip_probs,
                                 const std::vector<LabelVector>& labels, double threshold) {
    if (clip_probs.size() != labels.size())
        throw std::invalid_argument("confusion_counts: clip count mismatch");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("confusion_counts: threshold must be in (0,1)");
    if (clip_probs.empty()) return {};

    const std::size_t num_classes = labels[0].size();
    ConfusionCounts counts(num_classes);
    for (std::size_t i = 0; i < clip_probs.size(); ++i) {
        if (clip_probs[i].size() != num_classes || labels[i].size() != num_classes)
            throw std::invalid_argument("confusion_counts: class count mismatch");
        for (std::size_t c = 0; c < num_classes; ++c) {
            if (labels[i][c] == kUnknown) continue;  // unobserved pairs are excluded entirely
            const bool predicted = clip_probs[i][c] > threshold;
            const bool actual = labels[i][c] == kPresent;
            if (actual && predicted)
                counts[c].tp += 1;
            else if (actual && !predicted)
                counts[c].fn += 1;
            else if (!actual && predicted)
                counts[c].fp += 1;
            else
                counts[c].tn += 1;
        }
    }
    return counts;
}

ClassPrf class_prf1(const ClassCounts& counts) {
    return prf_from(counts.tp, counts.fp, counts.fn);
}

void aggregate(MetricsReport& report) {
    if (report.counts.empty()) throw std::invalid_argument("aggregate: no classes");
    report.per_class.clear();
    double sum_p = 0.0, sum_r = 0.0, sum_f1 = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const ClassCounts& c : report.counts) {
        const ClassPrf prf = class_prf1(c);
        report.per_class.push_back(prf);
        sum_p += prf.precision;
        sum_r += prf.recall;
        sum_f1 += prf.f1;
        tp += c.tp;
        fp += c.fp;
        fn += c.fn;
    }
    const auto n = static_cast<double>(report.counts.size());
    report.macro_precision = sum_p / n;
    report.macro_recall = sum_r / n;
    report.macro_f1 = sum_f1 / n;
    const ClassPrf micro = prf_from(tp, fp, fn);
    report.micro_precision = micro.precision;
    report.micro_recall = micro.recall;
    report.micro_f1 = micro.f1;
}

MetricsReport evaluate(const ModelParams& params, const ModelConfig& cfg, const Dataset& dataset,
                       double threshold) {
    if (dataset.feature_dim != cfg.input_dim || dataset.num_classes() != cfg.num_classes)
        throw std::invalid_argument("evaluate: dataset dims do not match model config");

    std::vector<Vec> probs;
    std::vector<LabelVector> labels;
    probs.reserve(dataset.size());
    labels.reserve(dataset.size());
    for (const Example& ex : dataset.examples) {
        probs.push_back(model_forward(params, cfg, ex.features, Mode::eval, nullptr).clip_probs);
        labels.push_back(ex.labels);
    }

    MetricsReport report;
    report.class_names = dataset.class_names;
    report.threshold = threshold;
    report.counts = confusion_counts(probs, labels, threshold);
    aggregate(report);
    return report;
}

std::string report_to_csv(const MetricsReport& report) {
    std::string out = "class,tp,fp,fn,tn,precision,recall,f1\n";
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t c = 0; c < report.counts.size(); ++c) {
        const ClassCounts& counts = report.counts[c];
        const ClassPrf& prf = report.per_class[c];
        out += report.class_names[c] + "," + std::to_string(counts.tp) + "," +
               std::to_string(counts.fp) + "," + std::to_string(counts.fn) + "," +
               std::to_string(counts.tn) + "," + fmt6(prf.precision) + "," + fmt6(prf.recall) +
               "," + fmt6(prf.f1) + "\n";
        tp += counts.tp;
        fp += counts.fp;
        fn += counts.fn;
        tn += counts.tn;
    }
    const std::string totals = std::to_string(tp) + "," + std::to_string(fp) + "," +
                               std::to_string(fn) + "," + std::to_string(tn) + ",";
    out += "__macro__," + totals + fmt6(report.macro_precision) + "," +
           fmt6(report.macro_recall) + "," + fmt6(report.macro_f1) + "\n";
    out += "__micro__," + totals + fmt6(report.micro_precision) + "," +
           fmt6(report.micro_recall) + "," + fmt6(report.micro_f1) + "\n";
    return out;
}

void write_report_csv(const MetricsReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + path.string());
    out << report_to_csv(report);
}

}  // namespace plab
