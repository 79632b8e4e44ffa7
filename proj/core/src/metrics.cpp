#include "protoscope/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "protoscope/error.hpp"
#include "protoscope/util.hpp"

namespace protoscope {

namespace {
constexpr double kProbClamp = 1e-12;

void check_lengths(const ProbVector& p, const ProbVector& q) {
    if (p.probs.size() != q.probs.size())
        throw ContractViolation("probability vector length mismatch");
    if (p.probs.empty()) throw ContractViolation("empty probability vector");
}
}  // namespace

double js_divergence(const ProbVector& p, const ProbVector& q) {
    check_lengths(p, q);
    double js = 0.0;
    for (std::size_t i = 0; i < p.probs.size(); ++i) {
        const double pi = p.probs[i], qi = q.probs[i];
        const double mi = 0.5 * (pi + qi);
        if (pi > 0) js += 0.5 * pi * std::log(pi / mi);
        if (qi > 0) js += 0.5 * qi * std::log(qi / mi);
    }
    return std::max(js, 0.0);
}

double sym_kl(const ProbVector& p, const ProbVector& q) {
    check_lengths(p, q);
    std::vector<double> a = p.probs, b = q.probs;
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = std::clamp(a[i], kProbClamp, 1.0);
        b[i] = std::clamp(b[i], kProbClamp, 1.0);
        sa += a[i];
        sb += b[i];
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double ai = a[i] / sa, bi = b[i] / sb;
        kl += (ai - bi) * std::log(ai / bi);
    }
    return std::max(kl, 0.0);
}

// ---------------------------------------------------------------------------
// percentiles and tables

std::vector<double> prototypicality_percentiles(const ScoreColumn& col) {
    const int n = static_cast<int>(col.raw.size());
    if (n == 0) throw ContractViolation("empty score column");
    // orient so larger = more prototypical
    std::vector<double> oriented(col.raw);
    if (col.orientation == Orientation::higher_is_outlier)
        for (auto& v : oriented) v = -v;

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return oriented[static_cast<std::size_t>(a)] < oriented[static_cast<std::size_t>(b)];
    });

    std::vector<double> pct(static_cast<std::size_t>(n), 0.0);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j < n && oriented[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] ==
                            oriented[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])])
            ++j;
        // positions [i, j) share the mean of their positional percentiles
        const double mean_pos = 0.5 * (i + j - 1);
        const double value = 100.0 * (mean_pos + 0.5) / n;
        for (int k = i; k < j; ++k) pct[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = value;
        i = j;
    }
    return pct;
}

int ScoreTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == name) return static_cast<int>(i);
    return -1;
}

const std::vector<double>& ScoreTable::percentile(const std::string& name) const {
    int idx = column_index(name);
    if (idx < 0) throw ContractViolation("no such metric column: " + name);
    return percentiles[static_cast<std::size_t>(idx)];
}

const ScoreColumn& ScoreTable::column(const std::string& name) const {
    int idx = column_index(name);
    if (idx < 0) throw ContractViolation("no such metric column: " + name);
    return columns[static_cast<std::size_t>(idx)];
}

namespace {

// Reorders a column's raw values to match the table's id order.
std::vector<double> align_column(const ScoreColumn& col, const std::vector<std::int32_t>& ids) {
    if (col.ids.size() != ids.size())
        throw ContractViolation("column " + col.name + " does not cover the table's ids");
    std::unordered_map<std::int32_t, double> by_id;
    by_id.reserve(col.ids.size());
    for (std::size_t i = 0; i < col.ids.size(); ++i) by_id[col.ids[i]] = col.raw[i];
    if (by_id.size() != col.ids.size()) throw ContractViolation("duplicate ids in column " + col.name);
    std::vector<double> out(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto it = by_id.find(ids[i]);
        if (it == by_id.end())
            throw ContractViolation("column " + col.name + " missing id " + std::to_string(ids[i]));
        out[i] = it->second;
    }
    return out;
}

}  // namespace

void add_column(ScoreTable& table, ScoreColumn col) {
    if (table.column_index(col.name) >= 0)
        throw ContractViolation("duplicate metric column: " + col.name);
    col.raw = align_column(col, table.ids);
    col.ids = table.ids;
    table.percentiles.push_back(prototypicality_percentiles(col));
    table.columns.push_back(std::move(col));
}

ScoreTable assemble_table(const std::vector<ScoreColumn>& columns, const LabeledDataset& dataset) {
    ScoreTable table;
    // deterministic row order by id
    std::vector<int> order(static_cast<std::size_t>(dataset.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return dataset.ids[static_cast<std::size_t>(a)] < dataset.ids[static_cast<std::size_t>(b)];
    });
    for (int i : order) {
        table.ids.push_back(dataset.ids[static_cast<std::size_t>(i)]);
        table.labels.push_back(dataset.labels[static_cast<std::size_t>(i)]);
        table.planted.push_back(dataset.planted[static_cast<std::size_t>(i)]);
    }
    for (const auto& col : columns) add_column(table, col);
    return table;
}

std::string table_to_csv(const ScoreTable& table) {
    std::ostringstream out;
    out << "# orientation";
    for (const auto& col : table.columns)
        out << ' ' << col.name << '='
            << (col.orientation == Orientation::higher_is_prototypical ? "higher_is_prototypical"
                                                                       : "higher_is_outlier");
    out << "\n";
    out << "id,label,planted";
    for (const auto& col : table.columns) out << ',' << col.name << "_raw," << col.name << "_pct";
    out << "\n";
    for (int i = 0; i < table.size(); ++i) {
        out << table.ids[static_cast<std::size_t>(i)] << ',' << table.labels[static_cast<std::size_t>(i)] << ','
            << to_string(table.planted[static_cast<std::size_t>(i)]);
        for (std::size_t c = 0; c < table.columns.size(); ++c)
            out << ',' << format_double(table.columns[c].raw[static_cast<std::size_t>(i)]) << ','
                << format_double(table.percentiles[c][static_cast<std::size_t>(i)]);
        out << "\n";
    }
    return out.str();
}

ScoreTable table_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    std::unordered_map<std::string, Orientation> orientations;
    if (!std::getline(in, line)) throw ParseError("empty score table CSV", 0);
    if (line.rfind("# orientation", 0) == 0) {
        std::istringstream os(line.substr(13));
        std::string tok;
        while (os >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos) continue;
            orientations[tok.substr(0, eq)] = tok.substr(eq + 1) == "higher_is_outlier"
                                                  ? Orientation::higher_is_outlier
                                                  : Orientation::higher_is_prototypical;
        }
        if (!std::getline(in, line)) throw ParseError("score table CSV missing header", 0);
    }
    auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "label" || header[2] != "planted")
        throw ParseError("bad score table header", 0);
    if ((header.size() - 3) % 2 != 0) throw ParseError("score table header columns must pair raw/pct", 0);

    ScoreTable table;
    const std::size_t n_metrics = (header.size() - 3) / 2;
    for (std::size_t m = 0; m < n_metrics; ++m) {
        const std::string& raw_name = header[3 + 2 * m];
        if (raw_name.size() < 5 || raw_name.substr(raw_name.size() - 4) != "_raw")
            throw ParseError("expected *_raw column in score table header", 0);
        ScoreColumn col;
        col.name = raw_name.substr(0, raw_name.size() - 4);
        auto it = orientations.find(col.name);
        if (it != orientations.end()) col.orientation = it->second;
        table.columns.push_back(std::move(col));
        table.percentiles.emplace_back();
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size()) throw ParseError("bad score table row", 0);
        table.ids.push_back(static_cast<std::int32_t>(std::stol(fields[0])));
        table.labels.push_back(std::stoi(fields[1]));
        table.planted.push_back(planted_from_string(fields[2]));
        for (std::size_t m = 0; m < n_metrics; ++m) {
            table.columns[m].ids.push_back(table.ids.back());
            table.columns[m].raw.push_back(std::stod(fields[3 + 2 * m]));
            table.percentiles[m].push_back(std::stod(fields[4 + 2 * m]));
        }
    }
    return table;
}

void save_table_csv(const ScoreTable& table, const std::filesystem::path& path) {
    atomic_write(path, table_to_csv(table));
}

ScoreTable load_table_csv(const std::filesystem::path& path) {
    return table_from_csv(read_file(path));
}

std::vector<std::int32_t> ranking_by(const ScoreTable& table, const std::string& name) {
    const auto& pct = table.percentile(name);
    std::vector<int> order(static_cast<std::size_t>(table.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (pct[static_cast<std::size_t>(a)] != pct[static_cast<std::size_t>(b)])
            return pct[static_cast<std::size_t>(a)] > pct[static_cast<std::size_t>(b)];
        return table.ids[static_cast<std::size_t>(a)] < table.ids[static_cast<std::size_t>(b)];
    });
    std::vector<std::int32_t> out;
    out.reserve(order.size());
    for (int i : order) out.push_back(table.ids[static_cast<std::size_t>(i)]);
    return out;
}

// ---------------------------------------------------------------------------
// ensemble

Ensemble build_ensemble(const LabeledDataset& dataset, const EnsembleConfig& cfg, int jobs) {
    if (cfg.n_members < 2) throw ContractViolation("ensemble needs >= 2 members");
    if (cfg.subset_fraction <= 0 || cfg.subset_fraction > 1)
        throw ContractViolation("subset_fraction must be in (0,1]");
    if (cfg.capacity_grid.empty()) throw ContractViolation("empty capacity grid");

    const int n = dataset.size();
    const int subset_n = std::max(1, static_cast<int>(std::lround(cfg.subset_fraction * n)));

    Ensemble ens;
    ens.members.resize(static_cast<std::size_t>(cfg.n_members));
    ens.member_specs.resize(static_cast<std::size_t>(cfg.n_members));
    ens.subset_fingerprints.resize(static_cast<std::size_t>(cfg.n_members));

    RngStream seeder(cfg.base.seed, 0x656e73656d626cULL);
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(cfg.n_members));
    for (int i = 0; i < cfg.n_members; ++i) seeds[static_cast<std::size_t>(i)] = seeder.substream(static_cast<std::uint64_t>(i)).next_u64();

    parallel_for(cfg.n_members, jobs, [&](int i) {
        ModelSpec spec;
        spec.input_dim = dataset.dim;
        spec.num_classes = dataset.num_classes;
        const int width = cfg.capacity_grid[static_cast<std::size_t>(i) % cfg.capacity_grid.size()];
        if (width > 0) spec.hidden_widths = {width};

        LabeledDataset member_data;
        const LabeledDataset* train_data = &dataset;
        if (subset_n < n) {
            RngStream subset_rng(seeds[static_cast<std::size_t>(i)], 0x737562ULL);
            std::vector<int> all(static_cast<std::size_t>(n));
            std::iota(all.begin(), all.end(), 0);
            subset_rng.shuffle(all);
            all.resize(static_cast<std::size_t>(subset_n));
            std::sort(all.begin(), all.end());
            member_data = subset_by_indices(dataset, all);
            train_data = &member_data;
        }

        TrainConfig tc = cfg.base;
        tc.seed = seeds[static_cast<std::size_t>(i)];
        tc.batch_size = std::min(tc.batch_size, train_data->size());
        ens.members[static_cast<std::size_t>(i)] = train(spec, *train_data, tc);
        ens.member_specs[static_cast<std::size_t>(i)] = spec;
        ens.subset_fingerprints[static_cast<std::size_t>(i)] = train_data->fingerprint();
    });
    return ens;
}

void save_ensemble(const Ensemble& ens, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ostringstream m;
    m << "num_members=" << ens.members.size() << "\n";
    for (std::size_t i = 0; i < ens.members.size(); ++i) {
        std::string name = "member" + std::to_string(i) + ".ckpt";
        save_checkpoint(ens.members[i], dir / name);
        m << "member=" << i << " path=" << name
          << " subset_fingerprint=" << ens.subset_fingerprints[i] << "\n";
    }
    atomic_write(dir / "ensemble.manifest", m.str());
}

Ensemble load_ensemble(const std::filesystem::path& dir) {
    std::istringstream in(read_file(dir / "ensemble.manifest"));
    Ensemble ens;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("member=", 0) != 0) continue;
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) {
            if (tok.rfind("path=", 0) == 0)
                ens.members.push_back(load_checkpoint(dir / tok.substr(5)));
            else if (tok.rfind("subset_fingerprint=", 0) == 0)
                ens.subset_fingerprints.push_back(std::stoull(tok.substr(19)));
        }
    }
    for (const auto& m : ens.members) ens.member_specs.push_back(m.spec);
    if (ens.members.size() < 2) throw ParseError("ensemble manifest lists fewer than 2 members", 0);
    return ens;
}

// ---------------------------------------------------------------------------
// the five scorers

ScoreColumn score_adv(const ModelCheckpoint& model, const LabeledDataset& dataset,
                      const AttackConfig& cfg, int jobs) {
    AttackConfig effective = cfg;
    if (effective.eps_upper <= 0) effective.eps_upper = feature_box_diameter(dataset, cfg.norm);
    effective.validate();

    ScoreColumn col;
    col.name = "adv";
    col.orientation = Orientation::higher_is_prototypical;
    col.ids = dataset.ids;
    col.raw.assign(static_cast<std::size_t>(dataset.size()), 0.0);
    parallel_for(dataset.size(), jobs, [&](int i) {
        auto res = adv_distance(model, dataset.row(i), dataset.labels[static_cast<std::size_t>(i)], effective);
        col.raw[static_cast<std::size_t>(i)] = res.distance;
    });
    return col;
}

ScoreColumn score_ret(const DatasetSplit& split, const ModelSpec& spec, const TrainConfig& train_cfg,
                      const FineTuneConfig& ft, RetTarget target) {
    const LabeledDataset& base_side = target == RetTarget::train_side ? split.train : split.holdout;
    const LabeledDataset& tune_side = target == RetTarget::train_side ? split.holdout : split.train;

    TrainConfig tc = train_cfg;
    tc.batch_size = std::min(tc.batch_size, base_side.size());
    ModelCheckpoint theta = train(spec, base_side, tc);
    ModelCheckpoint theta_bar =
        fine_tune(theta, tune_side, ft.lr, ft.patience, ft.max_epochs).model;

    ScoreColumn col;
    col.name = "ret";
    col.orientation = Orientation::higher_is_outlier;
    col.ids = base_side.ids;
    col.raw.reserve(static_cast<std::size_t>(base_side.size()));
    for (int i = 0; i < base_side.size(); ++i) {
        auto x = base_side.row(i);
        col.raw.push_back(sym_kl(forward(theta, x), forward(theta_bar, x)));
    }
    return col;
}

ScoreColumn score_agr(const Ensemble& ens, const LabeledDataset& dataset, int jobs) {
    const int N = static_cast<int>(ens.members.size());
    if (N < 2) throw ContractViolation("agr needs >= 2 ensemble members");
    ScoreColumn col;
    col.name = "agr";
    col.orientation = Orientation::higher_is_outlier;
    col.ids = dataset.ids;
    col.raw.assign(static_cast<std::size_t>(dataset.size()), 0.0);
    parallel_for(dataset.size(), jobs, [&](int i) {
        std::vector<ProbVector> outs;
        outs.reserve(static_cast<std::size_t>(N));
        for (const auto& m : ens.members) outs.push_back(forward(m, dataset.row(i)));
        double total = 0.0;
        for (int a = 0; a < N; ++a)
            for (int b = a + 1; b < N; ++b)
                total += 2.0 * js_divergence(outs[static_cast<std::size_t>(a)], outs[static_cast<std::size_t>(b)]);
        col.raw[static_cast<std::size_t>(i)] = total / (static_cast<double>(N) * N);
    });
    return col;
}

ScoreColumn score_conf(const Ensemble& ens, const LabeledDataset& dataset, int jobs) {
    const int N = static_cast<int>(ens.members.size());
    if (N < 1) throw ContractViolation("conf needs >= 1 ensemble member");
    ScoreColumn col;
    col.name = "conf";
    col.orientation = Orientation::higher_is_prototypical;
    col.ids = dataset.ids;
    col.raw.assign(static_cast<std::size_t>(dataset.size()), 0.0);
    parallel_for(dataset.size(), jobs, [&](int i) {
        double total = 0.0;
        for (const auto& m : ens.members) total += forward(m, dataset.row(i)).max();
        col.raw[static_cast<std::size_t>(i)] = total / N;
    });
    return col;
}

ScoreColumn score_priv(const PrivacyLadder& ladder, const LabeledDataset& dataset,
                       double reliability) {
    ladder.validate();
    if (ladder.num_successful() < 2) throw ContractViolation("priv needs >= 2 successful levels");
    if (reliability <= 0 || reliability > 1) throw ContractViolation("reliability must be in (0,1]");

    ScoreColumn col;
    col.name = "priv";
    col.orientation = Orientation::higher_is_prototypical;
    col.ids = dataset.ids;
    col.raw.assign(static_cast<std::size_t>(dataset.size()), -1.0);

    const int n = dataset.size();
    std::vector<char> reliable_so_far(static_cast<std::size_t>(n), 1);
    for (const auto& level : ladder.levels) {
        if (level.failed) continue;
        const int reps = static_cast<int>(level.models.size());
        for (int i = 0; i < n; ++i) {
            if (!reliable_so_far[static_cast<std::size_t>(i)]) continue;
            int correct = 0;
            for (const auto& m : level.models)
                if (predict(m, dataset.row(i)) == dataset.labels[static_cast<std::size_t>(i)]) ++correct;
            const double frac = static_cast<double>(correct) / reps;
            if (frac + 1e-12 >= reliability) {
                col.raw[static_cast<std::size_t>(i)] = level.level_index;
            } else {
                reliable_so_far[static_cast<std::size_t>(i)] = 0;
            }
        }
    }
    return col;
}

}  // namespace protoscope
