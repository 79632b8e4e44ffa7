#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protoscope/rng.hpp"

namespace protoscope {

enum class Planted : std::uint8_t { clean = 0, mislabeled, submode_member, density_outlier };

std::string to_string(Planted p);
Planted planted_from_string(const std::string& s);

// Immutable after construction; all dataset operations return new values.
struct LabeledDataset {
    std::vector<std::int32_t> ids;
    std::vector<double> features;  // n x dim, row-major
    int dim = 0;
    int num_classes = 0;
    std::vector<int> labels;
    std::vector<Planted> planted;  // always length n; Planted::clean when nothing was planted

    int size() const { return static_cast<int>(ids.size()); }
    std::span<const double> row(int i) const {
        return {features.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
    int index_of(std::int32_t id) const;  // -1 if absent

    std::uint64_t fingerprint() const;
    void validate() const;
};

struct DatasetSplit {
    LabeledDataset train;
    LabeledDataset holdout;
    std::uint64_t seed = 0;
};

struct SubmodeSpec {
    int cls = 0;
    double fraction = 0.0;     // fraction of that class drawn from the displaced component
    double mean_offset = 0.0;  // displacement magnitude, applied radially outward from the class mean
};

struct GenConfig {
    int num_classes = 2;
    int dims = 2;
    int n_per_class = 100;
    double class_separation = 6.0;  // minimum distance between class means, in units of sigma (= 1)
    double mislabel_fraction = 0.0;
    std::optional<SubmodeSpec> submode;
    std::uint64_t seed = 0;

    void validate() const;
};

// One isotropic unit-variance Gaussian per class, means arranged so the
// closest pair is exactly class_separation apart. Mislabeled points keep
// their features and get a uniformly drawn wrong label.
LabeledDataset generate_mixture(const GenConfig& cfg);

// IDX image/label pair (MNIST convention). Gzip-compressed files are
// detected by their magic bytes and inflated transparently. Pixels are
// scaled to [0,1]; ids follow file order.
LabeledDataset load_idx(const std::filesystem::path& image_path,
                        const std::filesystem::path& label_path);

// Inverse of load_idx for byte-valued data (features are rounded back to
// 0..255). Requires dim to factor as rows x cols; writes dim x 1 when not.
void write_idx(const LabeledDataset& ds, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path);

// Exactly round(fraction * n) examples get a uniformly drawn different label
// and the mislabeled annotation.
LabeledDataset inject_label_noise(const LabeledDataset& ds, double fraction, std::uint64_t seed);

// Stratified by class where every class has >= 2 members, otherwise falls
// back to an unstratified split (with a warning on stderr).
DatasetSplit split(const LabeledDataset& ds, double holdout_fraction, std::uint64_t seed);

// Examples at ranking positions [lo, hi), in ranking order. `ranking` must be
// a permutation of the dataset's ids.
LabeledDataset subset_by_rank(const LabeledDataset& ds, const std::vector<std::int32_t>& ranking,
                              int lo, int hi);

LabeledDataset subset_by_indices(const LabeledDataset& ds, std::span<const int> indices);

// Native interchange format: header `id,label,planted,f0..f{d-1}`.
std::string dataset_to_csv(const LabeledDataset& ds);
LabeledDataset dataset_from_csv(const std::string& csv);
void save_dataset_csv(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_dataset_csv(const std::filesystem::path& path);

}  // namespace protoscope
