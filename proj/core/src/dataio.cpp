#include "plab/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "plab/rng.hpp"

#include <json.hpp>

namespace plab {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// One CSV line -> fields; tolerates a trailing \r.
std::vector<std::string> split_csv_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

long parse_long(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    long v = 0;
    try {
        v = std::stol(s, &used);
    } catch (const std::exception&) {
        fail("bad " + what + ": '" + s + "'");
    }
    if (used != s.size()) fail("bad " + what + ": '" + s + "'");
    return v;
}

float le_bytes_to_float(const unsigned char* b) {
    const std::uint32_t u = static_cast<std::uint32_t>(b[0]) |
                            static_cast<std::uint32_t>(b[1]) << 8 |
                            static_cast<std::uint32_t>(b[2]) << 16 |
                            static_cast<std::uint32_t>(b[3]) << 24;
    return std::bit_cast<float>(u);
}

void float_to_le_bytes(float f, unsigned char* b) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(f);
    b[0] = static_cast<unsigned char>(u & 0xff);
    b[1] = static_cast<unsigned char>((u >> 8) & 0xff);
    b[2] = static_cast<unsigned char>((u >> 16) & 0xff);
    b[3] = static_cast<unsigned char>((u >> 24) & 0xff);
}

std::string clip_name(std::size_t index) { return "clip_" + std::to_string(index); }

}  // namespace

Dataset load_dataset(const std::filesystem::path& root) {
    const auto meta_path = root / "meta.json";
    const auto features_path = root / "features.f32";
    const auto labels_path = root / "labels.csv";
    const auto split_path = root / "split.csv";
    for (const auto& p : {meta_path, features_path, labels_path, split_path}) {
        if (!std::filesystem::exists(p)) fail("missing file: " + p.string());
    }

    json meta;
    try {
        meta = json::parse(read_text_file(meta_path));
    } catch (const json::exception& e) {
        fail("meta.json: " + std::string(e.what()));
    }
    for (const char* key : {"num_clips", "timesteps", "feature_dim", "class_names"}) {
        if (!meta.contains(key)) fail(std::string("meta.json: missing key '") + key + "'");
    }
    const std::size_t num_clips = meta["num_clips"].get<std::size_t>();
    const std::size_t timesteps = meta["timesteps"].get<std::size_t>();
    const std::size_t feature_dim = meta["feature_dim"].get<std::size_t>();
    std::vector<std::string> class_names = meta["class_names"].get<std::vector<std::string>>();
    if (num_clips == 0 || timesteps == 0 || feature_dim == 0 || class_names.empty())
        fail("meta.json: counts must be positive and class_names non-empty");
    const std::size_t num_classes = class_names.size();

    // features.f32: exact byte-length contract
    const auto expected_bytes =
        static_cast<std::uintmax_t>(num_clips) * timesteps * feature_dim * 4;
    const auto actual_bytes = std::filesystem::file_size(features_path);
    if (actual_bytes != expected_bytes) {
        fail("features.f32: dimension mismatch, expected " + std::to_string(expected_bytes) +
             " bytes (" + std::to_string(num_clips) + "*" + std::to_string(timesteps) + "*" +
             std::to_string(feature_dim) + "*4), got " + std::to_string(actual_bytes));
    }
    std::ifstream fin(features_path, std::ios::binary);
    if (!fin) fail("cannot open " + features_path.string());
    std::vector<unsigned char> raw(static_cast<std::size_t>(actual_bytes));
    fin.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!fin) fail("short read on " + features_path.string());

    Dataset ds;
    ds.class_names = std::move(class_names);
    ds.feature_dim = feature_dim;
    ds.base_timesteps = timesteps;
    ds.examples.resize(num_clips);
    for (std::size_t i = 0; i < num_clips; ++i) {
        Example& ex = ds.examples[i];
        ex.clip_id = clip_name(i);
        ex.features = FeatureSequence(timesteps, feature_dim);
        ex.labels.assign(num_classes, kUnknown);
        const unsigned char* base = raw.data() + i * timesteps * feature_dim * 4;
        for (std::size_t j = 0; j < timesteps * feature_dim; ++j) {
            const float f = le_bytes_to_float(base + j * 4);
            if (!std::isfinite(f))
                fail("features.f32: non-finite feature in clip " + std::to_string(i));
            ex.features.data[j] = static_cast<double>(f);
        }
    }

    // labels.csv: sparse; absent (clip, class) row means unknown
    {
        std::istringstream in(read_text_file(labels_path));
        std::string line;
        if (!std::getline(in, line) || split_csv_line(line) !=
                std::vector<std::string>{"clip_index", "class_index", "value"})
            fail("labels.csv: bad header");
        std::set<std::pair<long, long>> seen;
        while (std::getline(in, line)) {
            if (line.empty() || line == "\r") continue;
            const auto fields = split_csv_line(line);
            if (fields.size() != 3) fail("labels.csv: bad row '" + line + "'");
            const long clip = parse_long(fields[0], "clip_index");
            const long cls = parse_long(fields[1], "class_index");
            const long value = parse_long(fields[2], "label value");
            if (clip < 0 || clip >= static_cast<long>(num_clips))
                fail("labels.csv: clip_index out of range: " + fields[0]);
            if (cls < 0 || cls >= static_cast<long>(num_classes))
                fail("labels.csv: class_index out of range: " + fields[1]);
            if (value != -1 && value != 1)
                fail("labels.csv: label value outside {-1,1}: " + fields[2]);
            if (!seen.insert({clip, cls}).second)
                fail("labels.csv: duplicate (clip,class) row " + fields[0] + "," + fields[1]);
            ds.examples[static_cast<std::size_t>(clip)].labels[static_cast<std::size_t>(cls)] =
                static_cast<std::int8_t>(value);
        }
    }

    // split.csv: every clip exactly once
    {
        std::istringstream in(read_text_file(split_path));
        std::string line;
        if (!std::getline(in, line) ||
            split_csv_line(line) != std::vector<std::string>{"clip_index", "split"})
            fail("split.csv: bad header");
        std::vector<bool> assigned(num_clips, false);
        while (std::getline(in, line)) {
            if (line.empty() || line == "\r") continue;
            const auto fields = split_csv_line(line);
            if (fields.size() != 2) fail("split.csv: bad row '" + line + "'");
            const long clip = parse_long(fields[0], "clip_index");
            if (clip < 0 || clip >= static_cast<long>(num_clips))
                fail("split.csv: clip_index out of range: " + fields[0]);
            Split s;
            if (fields[1] == "train") {
                s = Split::train;
            } else if (fields[1] == "test") {
                s = Split::test;
            } else {
                fail("split.csv: split must be train or test, got '" + fields[1] + "'");
            }
            if (assigned[static_cast<std::size_t>(clip)])
                fail("split.csv: duplicate clip_index " + fields[0]);
            assigned[static_cast<std::size_t>(clip)] = true;
            ds.examples[static_cast<std::size_t>(clip)].split = s;
        }
        for (std::size_t i = 0; i < num_clips; ++i)
            if (!assigned[i]) fail("split.csv: missing clip_index " + std::to_string(i));
    }

    return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& root) {
    std::filesystem::create_directories(root);

    json meta;
    meta["num_clips"] = dataset.examples.size();
    meta["timesteps"] = dataset.base_timesteps;
    meta["feature_dim"] = dataset.feature_dim;
    meta["class_names"] = dataset.class_names;
    {
        std::ofstream out(root / "meta.json", std::ios::binary);
        if (!out) fail("cannot write meta.json");
        out << meta.dump(2) << "\n";
    }

    {
        std::ofstream out(root / "features.f32", std::ios::binary);
        if (!out) fail("cannot write features.f32");
        unsigned char buf[4];
        for (const Example& ex : dataset.examples) {
            if (ex.features.timesteps != dataset.base_timesteps ||
                ex.features.dim != dataset.feature_dim)
                fail("save_dataset: example shape does not match dataset dims");
            for (double v : ex.features.data) {
                float_to_le_bytes(static_cast<float>(v), buf);
                out.write(reinterpret_cast<const char*>(buf), 4);
            }
        }
    }

    {
        std::ofstream out(root / "labels.csv", std::ios::binary);
        if (!out) fail("cannot write labels.csv");
        out << "clip_index,class_index,value\n";
        for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
            const LabelVector& labels = dataset.examples[i].labels;
            for (std::size_t c = 0; c < labels.size(); ++c) {
                if (labels[c] == kUnknown) continue;
                out << i << ',' << c << ',' << static_cast<int>(labels[c]) << '\n';
            }
        }
    }

    {
        std::ofstream out(root / "split.csv", std::ios::binary);
        if (!out) fail("cannot write split.csv");
        out << "clip_index,split\n";
        for (std::size_t i = 0; i < dataset.examples.size(); ++i)
            out << i << ',' << (dataset.examples[i].split == Split::train ? "train" : "test")
                << '\n';
    }
}

std::int8_t encode_label(double relevance, bool observed, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("encode_label: threshold must be in (0,1)");
    if (!(relevance >= 0.0 && relevance <= 1.0))
        throw std::invalid_argument("encode_label: relevance outside [0,1]");
    if (!observed) return kUnknown;
    return relevance >= threshold ? kPresent : kAbsent;
}

Dataset subset(const Dataset& dataset, Split split) {
    Dataset out;
    out.class_names = dataset.class_names;
    out.feature_dim = dataset.feature_dim;
    out.base_timesteps = dataset.base_timesteps;
    for (const Example& ex : dataset.examples)
        if (ex.split == split) out.examples.push_back(ex);
    return out;
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& train_set, double val_fraction,
                                            std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("split_train_val: val_fraction must be in (0,1)");
    const std::size_t n = train_set.examples.size();
    const auto val_count =
        static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
    if (val_count == 0 || val_count >= n)
        throw std::invalid_argument("split_train_val: empty partition (N=" + std::to_string(n) +
                                    ", fraction=" + std::to_string(val_fraction) + ")");

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(derive_seed(seed, {1}));  // stream tag: validation split
    rng.shuffle(idx);

    Dataset tr, val;
    for (Dataset* d : {&tr, &val}) {
        d->class_names = train_set.class_names;
        d->feature_dim = train_set.feature_dim;
        d->base_timesteps = train_set.base_timesteps;
    }
    for (std::size_t k = 0; k < n; ++k) {
        (k < val_count ? val : tr).examples.push_back(train_set.examples[idx[k]]);
    }
    return {std::move(tr), std::move(val)};
}

std::vector<Batch> make_batches(const Dataset& dataset, std::size_t batch_size, bool shuffle,
                                std::uint64_t seed) {
    if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be >= 1");
    if (dataset.examples.empty()) throw std::invalid_argument("make_batches: empty dataset");

    std::vector<std::size_t> idx(dataset.examples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (shuffle) {
        Rng rng(derive_seed(seed, {2}));  // stream tag: batch shuffle
        rng.shuffle(idx);
    }

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
        Batch b;
        const std::size_t end = std::min(start + batch_size, idx.size());
        for (std::size_t k = start; k < end; ++k) {
            const Example* ex = &dataset.examples[idx[k]];
            if (ex->features.timesteps != dataset.base_timesteps)
                fail("make_batches: heterogeneous timestep count");
            b.items.push_back(ex);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

Dataset generate_synthetic(std::size_t num_clips, std::size_t num_classes, std::size_t timesteps,
                           std::size_t feature_dim, double mask_rate, double noise_scale,
                           std::uint64_t seed, double test_fraction) {
    if (num_clips == 0 || num_classes == 0 || timesteps == 0 || feature_dim == 0)
        throw std::invalid_argument("generate_synthetic: counts must be >= 1");
    if (!(mask_rate >= 0.0 && mask_rate < 1.0))
        throw std::invalid_argument("generate_synthetic: mask_rate must be in [0,1)");
    if (!(noise_scale >= 0.0))
        throw std::invalid_argument("generate_synthetic: noise_scale must be >= 0");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("generate_synthetic: test_fraction must be in [0,1)");

    constexpr double kPresenceProb = 0.3;
    constexpr double kAmplitude = 1.0;
    constexpr std::size_t kPlantsPerClass = 2;

    Rng rng(seed);

    // fixed unit signature per class; mutually orthogonal while the feature
    // dimension allows it, so classes do not bleed into each other
    std::vector<Vec> signatures(num_classes, Vec(feature_dim));
    for (auto& sig : signatures)
        for (double& v : sig) v = rng.normal();
    for (std::size_t c = 0; c < num_classes; ++c) {
        Vec& sig = signatures[c];
        if (c < feature_dim) {
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t k = 0; k < c; ++k) {
                    double proj = 0.0;
                    for (std::size_t d = 0; d < feature_dim; ++d) proj += signatures[k][d] * sig[d];
                    for (std::size_t d = 0; d < feature_dim; ++d) sig[d] -= proj * signatures[k][d];
                }
            }
        }
        double norm2 = 0.0;
        for (double v : sig) norm2 += v * v;
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& v : sig) v *= inv;
    }

    Dataset ds;
    ds.feature_dim = feature_dim;
    ds.base_timesteps = timesteps;
    for (std::size_t c = 0; c < num_classes; ++c) ds.class_names.push_back("class_" + std::to_string(c));

    const auto test_count =
        static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(num_clips)));
    const std::size_t train_count = num_clips - test_count;

    for (std::size_t i = 0; i < num_clips; ++i) {
        Example ex;
        ex.clip_id = "clip_" + std::to_string(i);
        ex.split = i < train_count ? Split::train : Split::test;
        ex.features = FeatureSequence(timesteps, feature_dim);
        ex.labels.assign(num_classes, kAbsent);

        std::vector<std::size_t> positive;
        for (std::size_t c = 0; c < num_classes; ++c)
            if (rng.bernoulli(kPresenceProb)) positive.push_back(c);
        // drop classes that no longer fit two planted steps each
        while (positive.size() * kPlantsPerClass > timesteps) positive.pop_back();
        for (std::size_t c : positive) ex.labels[c] = kPresent;

        std::vector<std::size_t> slots(timesteps);
        for (std::size_t t = 0; t < timesteps; ++t) slots[t] = t;
        rng.shuffle(slots);
        // planted_class[t] == num_classes means noise-only
        std::vector<std::size_t> planted_class(timesteps, num_classes);
        for (std::size_t k = 0; k < positive.size(); ++k)
            for (std::size_t j = 0; j < kPlantsPerClass; ++j)
                planted_class[slots[k * kPlantsPerClass + j]] = positive[k];

        for (std::size_t t = 0; t < timesteps; ++t) {
            auto row = ex.features.row(t);
            for (std::size_t d = 0; d < feature_dim; ++d) row[d] = noise_scale * rng.normal();
            if (planted_class[t] < num_classes) {
                const Vec& sig = signatures[planted_class[t]];
                for (std::size_t d = 0; d < feature_dim; ++d) row[d] += kAmplitude * sig[d];
            }
            // stored values are float32-exact so on-disk round-trips are lossless
            for (std::size_t d = 0; d < feature_dim; ++d)
                row[d] = static_cast<double>(static_cast<float>(row[d]));
        }

        for (std::size_t c = 0; c < num_classes; ++c)
            if (rng.bernoulli(mask_rate)) ex.labels[c] = kUnknown;

        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

}  // namespace plab
