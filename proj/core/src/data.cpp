#include "protoscope/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "protoscope/error.hpp"
#include "protoscope/util.hpp"

namespace protoscope {

std::string to_string(Planted p) {
    switch (p) {
        case Planted::clean: return "clean";
        case Planted::mislabeled: return "mislabeled";
        case Planted::submode_member: return "submode_member";
        case Planted::density_outlier: return "density_outlier";
    }
    return "clean";
}

Planted planted_from_string(const std::string& s) {
    if (s == "clean") return Planted::clean;
    if (s == "mislabeled") return Planted::mislabeled;
    if (s == "submode_member") return Planted::submode_member;
    if (s == "density_outlier") return Planted::density_outlier;
    throw ContractViolation("unknown planted annotation: " + s);
}

int LabeledDataset::index_of(std::int32_t id) const {
    for (int i = 0; i < size(); ++i)
        if (ids[static_cast<std::size_t>(i)] == id) return i;
    return -1;
}

std::uint64_t LabeledDataset::fingerprint() const {
    std::uint64_t h = fnv1a(std::as_bytes(std::span(ids.data(), ids.size())));
    h = fnv1a(std::as_bytes(std::span(labels.data(), labels.size())), h);
    h = fnv1a(std::as_bytes(std::span(planted.data(), planted.size())), h);
    h = fnv1a(std::as_bytes(std::span(features.data(), features.size())), h);
    std::int64_t meta[2] = {dim, num_classes};
    return fnv1a(std::as_bytes(std::span(meta, 2)), h);
}

void LabeledDataset::validate() const {
    const auto n = ids.size();
    if (labels.size() != n || planted.size() != n ||
        features.size() != n * static_cast<std::size_t>(dim))
        throw ContractViolation("dataset field lengths disagree");
    std::unordered_set<std::int32_t> seen;
    for (auto id : ids)
        if (!seen.insert(id).second)
            throw ContractViolation("duplicate dataset id " + std::to_string(id));
    for (int lbl : labels)
        if (lbl < 0 || lbl >= num_classes)
            throw ContractViolation("label " + std::to_string(lbl) + " out of range");
    for (double f : features)
        if (!std::isfinite(f)) throw ContractViolation("non-finite feature value");
}

void GenConfig::validate() const {
    if (num_classes < 1 || dims < 1 || n_per_class < 1)
        throw ContractViolation("generator sizes must be positive");
    if (class_separation <= 0) throw ContractViolation("class_separation must be positive");
    if (mislabel_fraction < 0 || mislabel_fraction >= 1)
        throw ContractViolation("mislabel_fraction must be in [0,1)");
    if (submode) {
        if (submode->cls < 0 || submode->cls >= num_classes)
            throw ContractViolation("submode class out of range");
        if (submode->fraction < 0 || submode->fraction >= 1)
            throw ContractViolation("submode fraction must be in [0,1)");
    }
}

namespace {

// Class means: evenly spaced on a circle in the first two dims, radius chosen
// so the closest pair of means is exactly `separation` apart. One dim falls
// back to a line.
std::vector<std::vector<double>> class_means(int num_classes, int dims, double separation) {
    std::vector<std::vector<double>> means(static_cast<std::size_t>(num_classes),
                                           std::vector<double>(static_cast<std::size_t>(dims), 0.0));
    if (num_classes == 1) return means;
    if (dims == 1) {
        for (int c = 0; c < num_classes; ++c) means[static_cast<std::size_t>(c)][0] = c * separation;
        return means;
    }
    const double radius = separation / (2.0 * std::sin(std::numbers::pi / num_classes));
    for (int c = 0; c < num_classes; ++c) {
        double angle = 2.0 * std::numbers::pi * c / num_classes;
        means[static_cast<std::size_t>(c)][0] = radius * std::cos(angle);
        means[static_cast<std::size_t>(c)][1] = radius * std::sin(angle);
    }
    return means;
}

std::vector<int> pick_distinct(int n, int count, RngStream& rng) {
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    rng.shuffle(all);
    all.resize(static_cast<std::size_t>(count));
    std::sort(all.begin(), all.end());
    return all;
}

}  // namespace

LabeledDataset generate_mixture(const GenConfig& cfg) {
    cfg.validate();
    const int n = cfg.num_classes * cfg.n_per_class;
    LabeledDataset ds;
    ds.dim = cfg.dims;
    ds.num_classes = cfg.num_classes;
    ds.ids.resize(static_cast<std::size_t>(n));
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.planted.assign(static_cast<std::size_t>(n), Planted::clean);
    ds.features.resize(static_cast<std::size_t>(n) * cfg.dims);

    RngStream master(cfg.seed, 0x6d69787475726530ULL);
    const auto means = class_means(cfg.num_classes, cfg.dims, cfg.class_separation);

    int row = 0;
    for (int c = 0; c < cfg.num_classes; ++c) {
        RngStream cls_rng = master.substream(100 + static_cast<std::uint64_t>(c));
        int n_sub = 0;
        if (cfg.submode && cfg.submode->cls == c)
            n_sub = static_cast<int>(std::lround(cfg.submode->fraction * cfg.n_per_class));
        const auto& mean = means[static_cast<std::size_t>(c)];
        double norm = 0.0;
        for (double m : mean) norm += m * m;
        norm = std::sqrt(norm);
        for (int k = 0; k < cfg.n_per_class; ++k, ++row) {
            ds.ids[static_cast<std::size_t>(row)] = row;
            ds.labels[static_cast<std::size_t>(row)] = c;
            const bool in_submode = k < n_sub;
            double* x = ds.features.data() + static_cast<std::size_t>(row) * cfg.dims;
            for (int d = 0; d < cfg.dims; ++d) x[d] = mean[static_cast<std::size_t>(d)] + cls_rng.gaussian();
            if (in_submode) {
                ds.planted[static_cast<std::size_t>(row)] = Planted::submode_member;
                // displace toward the gap between this class and its
                // neighbor, 62 degrees off the outward radial: close enough
                // to the inter-class boundary that a noisy decision surface
                // swallows the subcluster, far enough that a well-trained
                // model still carves a confident pocket around it
                if (cfg.dims >= 2 && norm > 0) {
                    const double rx = mean[0] / norm, ry = mean[1] / norm;
                    const double ca = std::cos(62.0 * std::numbers::pi / 180.0);
                    const double sa = std::sin(62.0 * std::numbers::pi / 180.0);
                    x[0] += cfg.submode->mean_offset * (rx * ca - ry * sa);
                    x[1] += cfg.submode->mean_offset * (ry * ca + rx * sa);
                } else {
                    x[0] += cfg.submode->mean_offset;
                }
            }
        }
    }

    if (cfg.mislabel_fraction > 0) {
        const int flips = static_cast<int>(std::lround(cfg.mislabel_fraction * n));
        RngStream flip_rng = master.substream(7);
        auto chosen = pick_distinct(n, flips, flip_rng);
        for (int idx : chosen) {
            int old = ds.labels[static_cast<std::size_t>(idx)];
            int offset = 1 + static_cast<int>(flip_rng.uniform_int(
                                 static_cast<std::uint64_t>(cfg.num_classes - 1)));
            ds.labels[static_cast<std::size_t>(idx)] = (old + offset) % cfg.num_classes;
            ds.planted[static_cast<std::size_t>(idx)] = Planted::mislabeled;
        }
    }
    return ds;
}

LabeledDataset inject_label_noise(const LabeledDataset& ds, double fraction, std::uint64_t seed) {
    if (fraction < 0 || fraction >= 1) throw ContractViolation("noise fraction must be in [0,1)");
    LabeledDataset out = ds;
    const int n = ds.size();
    const int flips = static_cast<int>(std::lround(fraction * n));
    if (flips == 0) return out;
    if (ds.num_classes < 2) throw ContractViolation("cannot flip labels with fewer than 2 classes");
    RngStream rng(seed, 0x6e6f697365ULL);
    auto chosen = pick_distinct(n, flips, rng);
    for (int idx : chosen) {
        int old = out.labels[static_cast<std::size_t>(idx)];
        int offset = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(ds.num_classes - 1)));
        out.labels[static_cast<std::size_t>(idx)] = (old + offset) % ds.num_classes;
        out.planted[static_cast<std::size_t>(idx)] = Planted::mislabeled;
    }
    return out;
}

LabeledDataset subset_by_indices(const LabeledDataset& ds, std::span<const int> indices) {
    LabeledDataset out;
    out.dim = ds.dim;
    out.num_classes = ds.num_classes;
    out.ids.reserve(indices.size());
    out.labels.reserve(indices.size());
    out.planted.reserve(indices.size());
    out.features.reserve(indices.size() * static_cast<std::size_t>(ds.dim));
    for (int i : indices) {
        if (i < 0 || i >= ds.size()) throw ContractViolation("subset index out of range");
        out.ids.push_back(ds.ids[static_cast<std::size_t>(i)]);
        out.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
        out.planted.push_back(ds.planted[static_cast<std::size_t>(i)]);
        auto r = ds.row(i);
        out.features.insert(out.features.end(), r.begin(), r.end());
    }
    return out;
}

DatasetSplit split(const LabeledDataset& ds, double holdout_fraction, std::uint64_t seed) {
    if (holdout_fraction <= 0 || holdout_fraction >= 1)
        throw ContractViolation("holdout_fraction must be in (0,1)");
    const int n = ds.size();
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.num_classes));
    for (int i = 0; i < n; ++i) by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);

    bool stratified = true;
    for (const auto& members : by_class)
        if (!members.empty() && members.size() < 2) stratified = false;

    RngStream rng(seed, 0x73706c6974ULL);
    std::vector<int> holdout_idx;
    if (stratified) {
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            auto members = by_class[c];
            if (members.empty()) continue;
            RngStream crng = rng.substream(c);
            crng.shuffle(members);
            int take = static_cast<int>(std::lround(holdout_fraction * static_cast<double>(members.size())));
            take = std::clamp(take, 1, static_cast<int>(members.size()) - 1);
            holdout_idx.insert(holdout_idx.end(), members.begin(), members.begin() + take);
        }
    } else {
        std::cerr << "warning: class with fewer than 2 members; falling back to unstratified split\n";
        std::vector<int> all(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
        rng.shuffle(all);
        int take = std::clamp(static_cast<int>(std::lround(holdout_fraction * n)), 1, n - 1);
        holdout_idx.assign(all.begin(), all.begin() + take);
    }
    std::sort(holdout_idx.begin(), holdout_idx.end());

    std::vector<char> is_holdout(static_cast<std::size_t>(n), 0);
    for (int i : holdout_idx) is_holdout[static_cast<std::size_t>(i)] = 1;
    std::vector<int> train_idx;
    train_idx.reserve(static_cast<std::size_t>(n) - holdout_idx.size());
    for (int i = 0; i < n; ++i)
        if (!is_holdout[static_cast<std::size_t>(i)]) train_idx.push_back(i);

    DatasetSplit out;
    out.train = subset_by_indices(ds, train_idx);
    out.holdout = subset_by_indices(ds, holdout_idx);
    out.seed = seed;
    return out;
}

LabeledDataset subset_by_rank(const LabeledDataset& ds, const std::vector<std::int32_t>& ranking,
                              int lo, int hi) {
    const int n = ds.size();
    if (static_cast<int>(ranking.size()) != n)
        throw ContractViolation("ranking length does not match dataset size");
    if (lo < 0 || lo >= hi || hi > n) throw ContractViolation("invalid rank range");
    std::unordered_map<std::int32_t, int> pos;
    pos.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pos[ds.ids[static_cast<std::size_t>(i)]] = i;
    if (static_cast<int>(pos.size()) != n) throw ContractViolation("dataset ids not unique");
    std::vector<int> indices;
    indices.reserve(static_cast<std::size_t>(hi - lo));
    std::unordered_set<std::int32_t> seen;
    for (auto id : ranking)
        if (!seen.insert(id).second || !pos.contains(id))
            throw ContractViolation("ranking is not a permutation of dataset ids");
    for (int r = lo; r < hi; ++r) indices.push_back(pos[ranking[static_cast<std::size_t>(r)]]);
    return subset_by_indices(ds, indices);
}

// ---------------------------------------------------------------------------
// IDX format

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

bool is_gzip(const std::vector<unsigned char>& raw) {
    return raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b;
}

std::vector<unsigned char> read_raw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& raw) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IoError("inflateInit failed");
    std::vector<unsigned char> out;
    std::vector<unsigned char> buf(1 << 16);
    zs.next_in = const_cast<unsigned char*>(raw.data());
    zs.avail_in = static_cast<uInt>(raw.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw ParseError("gzip stream corrupt", zs.total_in);
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset) {
    if (offset + 4 > buf.size()) throw ParseError("truncated IDX header", offset);
    return (static_cast<std::uint32_t>(buf[offset]) << 24) |
           (static_cast<std::uint32_t>(buf[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(buf[offset + 2]) << 8) |
           static_cast<std::uint32_t>(buf[offset + 3]);
}

void write_be32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& image_path,
                        const std::filesystem::path& label_path) {
    auto img = read_raw(image_path);
    if (is_gzip(img)) img = gunzip(img);
    auto lbl = read_raw(label_path);
    if (is_gzip(lbl)) lbl = gunzip(lbl);

    if (read_be32(img, 0) != kImageMagic) throw ParseError("wrong magic in image file", 0);
    if (read_be32(lbl, 0) != kLabelMagic) throw ParseError("wrong magic in label file", 0);

    const std::uint32_t n_img = read_be32(img, 4);
    const std::uint32_t rows = read_be32(img, 8);
    const std::uint32_t cols = read_be32(img, 12);
    const std::uint32_t n_lbl = read_be32(lbl, 4);
    if (n_img != n_lbl) throw ParseError("image/label count mismatch", 4);

    const std::size_t d = static_cast<std::size_t>(rows) * cols;
    if (img.size() < 16 + static_cast<std::size_t>(n_img) * d)
        throw ParseError("truncated image data", img.size());
    if (lbl.size() < 8 + n_lbl) throw ParseError("truncated label data", lbl.size());

    LabeledDataset ds;
    ds.dim = static_cast<int>(d);
    ds.ids.resize(n_img);
    ds.labels.resize(n_img);
    ds.planted.assign(n_img, Planted::clean);
    ds.features.resize(static_cast<std::size_t>(n_img) * d);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n_img; ++i) {
        ds.ids[i] = static_cast<std::int32_t>(i);
        ds.labels[i] = lbl[8 + i];
        max_label = std::max(max_label, ds.labels[i]);
        const unsigned char* px = img.data() + 16 + static_cast<std::size_t>(i) * d;
        double* dst = ds.features.data() + static_cast<std::size_t>(i) * d;
        for (std::size_t k = 0; k < d; ++k) dst[k] = px[k] / 255.0;
    }
    ds.num_classes = std::max(max_label + 1, 2);
    return ds;
}

void write_idx(const LabeledDataset& ds, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path) {
    int rows = ds.dim, cols = 1;
    int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(ds.dim))));
    if (s * s == ds.dim) rows = cols = s;

    std::string img;
    write_be32(img, kImageMagic);
    write_be32(img, static_cast<std::uint32_t>(ds.size()));
    write_be32(img, static_cast<std::uint32_t>(rows));
    write_be32(img, static_cast<std::uint32_t>(cols));
    for (double f : ds.features) {
        int v = static_cast<int>(std::lround(f * 255.0));
        img.push_back(static_cast<char>(std::clamp(v, 0, 255)));
    }

    std::string lbl;
    write_be32(lbl, kLabelMagic);
    write_be32(lbl, static_cast<std::uint32_t>(ds.size()));
    for (int l : ds.labels) lbl.push_back(static_cast<char>(l));

    atomic_write(image_path, img);
    atomic_write(label_path, lbl);
}

// ---------------------------------------------------------------------------
// CSV interchange

std::string dataset_to_csv(const LabeledDataset& ds) {
    std::ostringstream out;
    out << "# num_classes=" << ds.num_classes << "\n";
    out << "id,label,planted";
    for (int d = 0; d < ds.dim; ++d) out << ",f" << d;
    out << "\n";
    for (int i = 0; i < ds.size(); ++i) {
        out << ds.ids[static_cast<std::size_t>(i)] << ',' << ds.labels[static_cast<std::size_t>(i)]
            << ',' << to_string(ds.planted[static_cast<std::size_t>(i)]);
        for (double f : ds.row(i)) out << ',' << format_double(f);
        out << "\n";
    }
    return out.str();
}

LabeledDataset dataset_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    int declared_classes = 0;
    if (!std::getline(in, line)) throw ParseError("empty dataset CSV", 0);
    if (line.rfind("# num_classes=", 0) == 0) {
        declared_classes = std::stoi(line.substr(14));
        if (!std::getline(in, line)) throw ParseError("dataset CSV missing header row", 0);
    }
    auto header = split_csv_line(line);
    if (header.size() < 4 || header[0] != "id" || header[1] != "label" || header[2] != "planted")
        throw ParseError("bad dataset CSV header", 0);
    LabeledDataset ds;
    ds.dim = static_cast<int>(header.size()) - 3;
    int max_label = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size()) throw ParseError("bad dataset CSV row", 0);
        ds.ids.push_back(static_cast<std::int32_t>(std::stol(fields[0])));
        ds.labels.push_back(std::stoi(fields[1]));
        max_label = std::max(max_label, ds.labels.back());
        ds.planted.push_back(planted_from_string(fields[2]));
        for (int d = 0; d < ds.dim; ++d) ds.features.push_back(std::stod(fields[static_cast<std::size_t>(3 + d)]));
    }
    ds.num_classes = std::max({max_label + 1, declared_classes, 2});
    return ds;
}

void save_dataset_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
    atomic_write(path, dataset_to_csv(ds));
}

LabeledDataset load_dataset_csv(const std::filesystem::path& path) {
    return dataset_from_csv(read_file(path));
}

}  // namespace protoscope
