#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "plab/matrix.hpp"

namespace plab {

// Per-class annotation: -1 absent, 0 unknown, +1 present.
using LabelVector = std::vector<std::int8_t>;

inline constexpr std::int8_t kAbsent = -1;
inline constexpr std::int8_t kUnknown = 0;
inline constexpr std::int8_t kPresent = 1;

// T x D feature sequence, row-major [timestep][dim].
struct FeatureSequence {
    std::size_t timesteps = 0;
    std::size_t dim = 0;
    Vec data;

    FeatureSequence() = default;
    FeatureSequence(std::size_t t, std::size_t d) : timesteps(t), dim(d), data(t * d, 0.0) {}

    std::span<double> row(std::size_t t) { return {data.data() + t * dim, dim}; }
    std::span<const double> row(std::size_t t) const { return {data.data() + t * dim, dim}; }
    double& at(std::size_t t, std::size_t d) { return data[t * dim + d]; }
    double at(std::size_t t, std::size_t d) const { return data[t * dim + d]; }
};

enum class Split { train, test };

struct Example {
    std::string clip_id;
    FeatureSequence features;
    LabelVector labels;
    Split split = Split::train;
};

struct Dataset {
    std::vector<Example> examples;
    std::vector<std::string> class_names;
    std::size_t feature_dim = 0;
    std::size_t base_timesteps = 0;

    std::size_t num_classes() const { return class_names.size(); }
    std::size_t size() const { return examples.size(); }
};

// Non-owning view into a dataset; all members share T and D.
struct Batch {
    std::vector<const Example*> items;

    std::size_t size() const { return items.size(); }
};

// Dataset directory layout:
//   meta.json    -- {"num_clips": N, "timesteps": T, "feature_dim": D, "class_names": [...]}
//   features.f32 -- raw little-endian float32, row-major [clip][timestep][dim], N*T*D*4 bytes
//   labels.csv   -- header `clip_index,class_index,value`; value in {-1,1}; absent pair => unknown
//   split.csv    -- header `clip_index,split`; split in {train,test}; one row per clip
Dataset load_dataset(const std::filesystem::path& root);
void save_dataset(const Dataset& dataset, const std::filesystem::path& root);

// Maps a continuous relevance annotation to a three-valued label.
// Unobserved wins; otherwise relevance >= threshold is present, else absent.
std::int8_t encode_label(double relevance, bool observed, double threshold = 0.5);

// Copies the examples assigned to `split` into a new dataset.
Dataset subset(const Dataset& dataset, Split split);

// Uniform per-clip partition; validation size = round(val_fraction * N).
std::pair<Dataset, Dataset> split_train_val(const Dataset& train_set, double val_fraction,
                                            std::uint64_t seed);

// Partitions the dataset into batches of at most batch_size examples; the last
// batch may be short. Shuffling is a seeded Fisher-Yates over clip indices.
std::vector<Batch> make_batches(const Dataset& dataset, std::size_t batch_size, bool shuffle,
                                std::uint64_t seed);

// Synthetic planted-pattern generator. Each class has a fixed unit signature
// vector; a clip positive for a class carries that signature (amplitude 1.0,
// plus noise) at two of its timesteps. Class presence is Bernoulli(0.3) per
// (clip, class); labels are then masked to unknown with probability mask_rate.
// The trailing round(test_fraction * num_clips) clips form the test split.
Dataset generate_synthetic(std::size_t num_clips, std::size_t num_classes, std::size_t timesteps,
                           std::size_t feature_dim, double mask_rate, double noise_scale,
                           std::uint64_t seed, double test_fraction = 0.2);

}  // namespace plab
