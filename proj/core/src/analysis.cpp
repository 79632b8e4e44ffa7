#include "protoscope/analysis.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "protoscope/error.hpp"
#include "protoscope/util.hpp"

namespace protoscope {

// ---------------------------------------------------------------------------
// correlations

namespace {

std::vector<double> mean_tie_ranks(const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return v[static_cast<std::size_t>(a)] < v[static_cast<std::size_t>(b)]; });
    std::vector<double> ranks(static_cast<std::size_t>(n), 0.0);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j < n && v[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] ==
                            v[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])])
            ++j;
        const double mean_rank = 0.5 * (i + j - 1) + 1.0;  // 1-based
        for (int k = i; k < j; ++k) ranks[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = mean_rank;
        i = j;
    }
    return ranks;
}

// Pearson correlation; returns false (and 0) when either side is constant.
bool pearson(const std::vector<double>& a, const std::vector<double>& b, double& out) {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0 || sbb <= 0) {
        out = 0.0;
        return false;
    }
    out = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
    return true;
}

}  // namespace

CorrelationMatrix rank_correlations(const ScoreTable& table, CorrelationMethod method) {
    const std::size_t k = table.columns.size();
    if (k < 2) throw ContractViolation("need >= 2 metrics");
    CorrelationMatrix mat;
    mat.method = method;
    std::vector<std::vector<double>> prepared(k);
    for (std::size_t c = 0; c < k; ++c) {
        mat.names.push_back(table.columns[c].name);
        prepared[c] = method == CorrelationMethod::spearman ? mean_tie_ranks(table.percentiles[c])
                                                           : table.percentiles[c];
    }
    mat.values.assign(k, std::vector<double>(k, 0.0));
    mat.undefined.assign(k, std::vector<bool>(k, false));
    for (std::size_t a = 0; a < k; ++a) {
        mat.values[a][a] = 1.0;
        for (std::size_t b = a + 1; b < k; ++b) {
            double r = 0.0;
            bool ok = pearson(prepared[a], prepared[b], r);
            mat.values[a][b] = mat.values[b][a] = r;
            mat.undefined[a][b] = mat.undefined[b][a] = !ok;
        }
    }
    return mat;
}

std::string CorrelationMatrix::to_csv() const {
    std::ostringstream out;
    out << "metric";
    for (const auto& n : names) out << ',' << n;
    out << "\n";
    for (std::size_t a = 0; a < names.size(); ++a) {
        out << names[a];
        for (std::size_t b = 0; b < names.size(); ++b) out << ',' << format_double(values[a][b]);
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// combined metrics and set extraction

ScoreColumn combine_metrics(const ScoreTable& table, const std::vector<std::string>& metrics,
                            const std::string& name) {
    if (metrics.empty()) throw ContractViolation("no metrics to combine");
    std::vector<const std::vector<double>*> cols;
    for (const auto& m : metrics) cols.push_back(&table.percentile(m));
    ScoreColumn out;
    out.name = name;
    out.orientation = Orientation::higher_is_prototypical;
    out.ids = table.ids;
    out.raw.assign(static_cast<std::size_t>(table.size()), 0.0);
    for (int i = 0; i < table.size(); ++i) {
        double acc = 0.0;
        for (const auto* c : cols) acc += (*c)[static_cast<std::size_t>(i)];
        out.raw[static_cast<std::size_t>(i)] = acc / static_cast<double>(cols.size());
    }
    return out;
}

void add_standard_combos(ScoreTable& table) {
    if (table.column_index("boundary") < 0 && table.column_index("adv") >= 0 &&
        table.column_index("ret") >= 0)
        add_column(table, combine_metrics(table, {"adv", "ret"}, "boundary"));
    if (table.column_index("ensemble") < 0 && table.column_index("agr") >= 0 &&
        table.column_index("conf") >= 0)
        add_column(table, combine_metrics(table, {"agr", "conf"}, "ensemble"));
}

ExampleSet extract_memorized_exceptions(const ScoreTable& table, double ens_top, double bnd_bottom,
                                        double priv_bottom) {
    const auto& ens = table.percentile("ensemble");
    const auto& bnd = table.percentile("boundary");
    const auto& priv = table.percentile("priv");
    ExampleSet set;
    set.name = "memorized_exceptions";
    set.thresholds = {{"ens_top", ens_top}, {"bnd_bottom", bnd_bottom}, {"priv_bottom", priv_bottom}};
    for (int i = 0; i < table.size(); ++i)
        if (ens[static_cast<std::size_t>(i)] >= 100.0 - ens_top && bnd[static_cast<std::size_t>(i)] <= bnd_bottom &&
            priv[static_cast<std::size_t>(i)] <= priv_bottom)
            set.ids.push_back(table.ids[static_cast<std::size_t>(i)]);
    return set;
}

ExampleSet extract_uncommon_submodes(const ScoreTable& table, double priv_bottom, double other_top) {
    const auto& priv = table.percentile("priv");
    const auto& bnd = table.percentile("boundary");
    const auto& ens = table.percentile("ensemble");
    ExampleSet set;
    set.name = "uncommon_submodes";
    set.thresholds = {{"priv_bottom", priv_bottom}, {"other_top", other_top}};
    for (int i = 0; i < table.size(); ++i)
        if (priv[static_cast<std::size_t>(i)] <= priv_bottom &&
            (bnd[static_cast<std::size_t>(i)] >= 100.0 - other_top ||
             ens[static_cast<std::size_t>(i)] >= 100.0 - other_top))
            set.ids.push_back(table.ids[static_cast<std::size_t>(i)]);
    return set;
}

ExampleSet extract_canonical_prototypes(const ScoreTable& table, double top) {
    const char* required[] = {"adv", "ret", "agr", "conf", "priv"};
    std::vector<const std::vector<double>*> cols;
    for (const char* m : required) cols.push_back(&table.percentile(m));
    ExampleSet set;
    set.name = "canonical_prototypes";
    set.thresholds = {{"top", top}};
    for (int i = 0; i < table.size(); ++i) {
        bool all = true;
        for (const auto* c : cols)
            if ((*c)[static_cast<std::size_t>(i)] < 100.0 - top) {
                all = false;
                break;
            }
        if (all) set.ids.push_back(table.ids[static_cast<std::size_t>(i)]);
    }
    return set;
}

// ---------------------------------------------------------------------------
// curriculum experiments

std::string CurriculumResult::to_csv(const std::string& value_name) const {
    std::ostringstream out;
    out << "axis_pct," << value_name << "\n";
    for (std::size_t i = 0; i < axis.size(); ++i)
        out << format_double(axis[i]) << ',' << format_double(accuracy[i]) << "\n";
    return out.str();
}

CurriculumResult curriculum_window_experiment(const LabeledDataset& train_set,
                                              const std::vector<std::int32_t>& ranking,
                                              int window_size, int stride, const ModelSpec& spec,
                                              const TrainConfig& cfg, const LabeledDataset& test_set,
                                              int jobs) {
    const int n = train_set.size();
    if (window_size < 1 || window_size > n) throw ContractViolation("window_size must be in [1, n]");
    if (stride < 1) throw ContractViolation("stride must be positive");

    std::vector<int> offsets;
    for (int k = 0; k + window_size <= n; k += stride) offsets.push_back(k);

    CurriculumResult res;
    res.axis.resize(offsets.size());
    res.accuracy.resize(offsets.size());
    parallel_for(static_cast<int>(offsets.size()), jobs, [&](int w) {
        const int k = offsets[static_cast<std::size_t>(w)];
        auto window = subset_by_rank(train_set, ranking, k, k + window_size);
        TrainConfig tc = cfg;
        tc.batch_size = std::min(tc.batch_size, window.size());
        auto model = train(spec, window, tc);
        res.axis[static_cast<std::size_t>(w)] = 100.0 * k / n;
        res.accuracy[static_cast<std::size_t>(w)] = accuracy(model, test_set);
    });
    return res;
}

PrefixSuffixResult curriculum_prefix_suffix_experiment(
    const LabeledDataset& train_set, const std::vector<std::int32_t>& ranking,
    const std::vector<int>& sizes, const ModelSpec& spec, const TrainConfig& cfg,
    const LabeledDataset& test_set, EvalScope scope, const std::vector<std::int32_t>* test_ranking,
    int jobs) {
    const int n = train_set.size();
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] < 1 || sizes[i] > n) throw ContractViolation("prefix size out of range");
        if (i > 0 && sizes[i] <= sizes[i - 1]) throw ContractViolation("sizes must be ascending");
    }

    LabeledDataset restricted;
    const LabeledDataset* eval_set = &test_set;
    if (scope == EvalScope::top_half_test) {
        if (test_ranking == nullptr)
            throw ContractViolation("top_half_test evaluation needs a test-side ranking");
        restricted = subset_by_rank(test_set, *test_ranking, 0, std::max(1, test_set.size() / 2));
        eval_set = &restricted;
    }

    PrefixSuffixResult out;
    for (auto* side : {&out.prefix, &out.suffix}) {
        side->eval_scope = scope;
        side->axis.resize(sizes.size());
        side->accuracy.resize(sizes.size());
    }
    const int tasks = static_cast<int>(sizes.size()) * 2;
    parallel_for(tasks, jobs, [&](int t) {
        const int s = t / 2;
        const bool is_prefix = (t % 2) == 0;
        const int size = sizes[static_cast<std::size_t>(s)];
        auto subset = is_prefix ? subset_by_rank(train_set, ranking, 0, size)
                                : subset_by_rank(train_set, ranking, n - size, n);
        TrainConfig tc = cfg;
        tc.batch_size = std::min(tc.batch_size, subset.size());
        auto model = train(spec, subset, tc);
        auto& side = is_prefix ? out.prefix : out.suffix;
        side.axis[static_cast<std::size_t>(s)] = 100.0 * size / n;
        side.accuracy[static_cast<std::size_t>(s)] = accuracy(model, *eval_set);
    });
    return out;
}

NoiseAblationResult label_noise_ablation(const LabeledDataset& train_set,
                                         const std::vector<std::int32_t>& ranking, double fraction,
                                         int window_size, int stride, const ModelSpec& spec,
                                         const TrainConfig& cfg, const LabeledDataset& test_set,
                                         std::uint64_t noise_seed, int jobs) {
    NoiseAblationResult out;
    out.clean = curriculum_window_experiment(train_set, ranking, window_size, stride, spec, cfg,
                                             test_set, jobs);
    auto noisy_set = inject_label_noise(train_set, fraction, noise_seed);
    out.noisy = curriculum_window_experiment(noisy_set, ranking, window_size, stride, spec, cfg,
                                             test_set, jobs);
    out.delta.resize(out.clean.accuracy.size());
    for (std::size_t i = 0; i < out.delta.size(); ++i)
        out.delta[i] = out.clean.accuracy[i] - out.noisy.accuracy[i];
    return out;
}

// ---------------------------------------------------------------------------
// robustness by slice

std::string SliceRobustness::to_csv() const {
    std::ostringstream out;
    out << "slice_offset_pct,mean_distance,unreachable\n";
    for (std::size_t i = 0; i < slice_offsets_pct.size(); ++i)
        out << format_double(slice_offsets_pct[i]) << ',' << format_double(mean_distance[i]) << ','
            << unreachable[i] << "\n";
    out << "baseline," << format_double(baseline_mean_distance) << ',' << baseline_unreachable
        << "\n";
    return out.str();
}

namespace {

std::pair<double, int> mean_adv_distance(const ModelCheckpoint& model, const LabeledDataset& eval_set,
                                         const AttackConfig& attack, int jobs) {
    AttackConfig cfg = attack;
    if (cfg.eps_upper <= 0) cfg.eps_upper = feature_box_diameter(eval_set, cfg.norm);
    std::vector<double> dist(static_cast<std::size_t>(eval_set.size()), 0.0);
    parallel_for(eval_set.size(), jobs, [&](int i) {
        dist[static_cast<std::size_t>(i)] =
            adv_distance(model, eval_set.row(i), eval_set.labels[static_cast<std::size_t>(i)], cfg).distance;
    });
    double sum = 0.0;
    int finite = 0, unreachable = 0;
    for (double d : dist) {
        if (std::isfinite(d)) {
            sum += d;
            ++finite;
        } else {
            ++unreachable;
        }
    }
    return {finite > 0 ? sum / finite : 0.0, unreachable};
}

}  // namespace

SliceRobustness robustness_by_slice(const LabeledDataset& train_set,
                                    const std::vector<std::int32_t>& ranking, int slice_size,
                                    const std::vector<int>& slice_offsets, const ModelSpec& spec,
                                    const TrainConfig& cfg, const AttackConfig& attack,
                                    const LabeledDataset& eval_set, int jobs) {
    const int n = train_set.size();
    if (slice_size < 1 || slice_size > n) throw ContractViolation("slice_size must be in [1, n]");
    for (int k : slice_offsets)
        if (k < 0 || k + slice_size > n) throw ContractViolation("slice offset out of range");

    SliceRobustness out;
    out.slice_offsets_pct.resize(slice_offsets.size());
    out.mean_distance.resize(slice_offsets.size());
    out.unreachable.resize(slice_offsets.size());
    for (std::size_t s = 0; s < slice_offsets.size(); ++s) {
        const int k = slice_offsets[s];
        auto slice = subset_by_rank(train_set, ranking, k, k + slice_size);
        TrainConfig tc = cfg;
        tc.batch_size = std::min(tc.batch_size, slice.size());
        auto model = train(spec, slice, tc);
        auto [mean, unreachable] = mean_adv_distance(model, eval_set, attack, jobs);
        out.slice_offsets_pct[s] = 100.0 * k / n;
        out.mean_distance[s] = mean;
        out.unreachable[s] = unreachable;
    }
    {
        TrainConfig tc = cfg;
        tc.batch_size = std::min(tc.batch_size, n);
        auto baseline = train(spec, train_set, tc);
        auto [mean, unreachable] = mean_adv_distance(baseline, eval_set, attack, jobs);
        out.baseline_mean_distance = mean;
        out.baseline_unreachable = unreachable;
    }
    return out;
}

// ---------------------------------------------------------------------------
// leave-one-out

double paired_t_test(const std::vector<double>& diffs) {
    const int k = static_cast<int>(diffs.size());
    if (k < 2) throw ContractViolation("paired test needs >= 2 replicates");
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= k;
    double var = 0.0;
    for (double d : diffs) var += (d - mean) * (d - mean);
    var /= (k - 1);
    if (var <= 0.0) return mean == 0.0 ? 1.0 : 0.0;
    const double t = mean / std::sqrt(var / k);
    boost::math::students_t dist(k - 1);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

std::vector<LeaveOneOutResult> leave_one_out_influence(const LabeledDataset& train_set,
                                                       const std::vector<std::int32_t>& candidates,
                                                       const LabeledDataset& test_set,
                                                       const ModelSpec& spec, const TrainConfig& cfg,
                                                       int replicates, int jobs) {
    if (replicates < 2) throw ContractViolation("leave-one-out needs >= 2 replicates");

    RngStream seeder(cfg.seed, 0x6c6f6fULL);
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(replicates));
    for (int r = 0; r < replicates; ++r) seeds[static_cast<std::size_t>(r)] = seeder.substream(static_cast<std::uint64_t>(r)).next_u64();

    // the with-example models are shared across candidates
    std::vector<ModelCheckpoint> with_models(static_cast<std::size_t>(replicates));
    parallel_for(replicates, jobs, [&](int r) {
        TrainConfig tc = cfg;
        tc.seed = seeds[static_cast<std::size_t>(r)];
        tc.batch_size = std::min(tc.batch_size, train_set.size());
        with_models[static_cast<std::size_t>(r)] = train(spec, train_set, tc);
    });

    std::vector<LeaveOneOutResult> results(candidates.size());
    const int n_test = test_set.size();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const std::int32_t cand = candidates[c];
        const int drop = train_set.index_of(cand);
        LabeledDataset without;
        if (drop >= 0) {
            std::vector<int> keep;
            keep.reserve(static_cast<std::size_t>(train_set.size() - 1));
            for (int i = 0; i < train_set.size(); ++i)
                if (i != drop) keep.push_back(i);
            without = subset_by_indices(train_set, keep);
        } else {
            without = train_set;  // candidate absent: identical training data
        }

        std::vector<ModelCheckpoint> without_models(static_cast<std::size_t>(replicates));
        parallel_for(replicates, jobs, [&](int r) {
            TrainConfig tc = cfg;
            tc.seed = seeds[static_cast<std::size_t>(r)];
            tc.batch_size = std::min(tc.batch_size, without.size());
            without_models[static_cast<std::size_t>(r)] = train(spec, without, tc);
        });

        LeaveOneOutResult res;
        res.candidate_id = cand;
        res.mean_abs_delta.assign(static_cast<std::size_t>(n_test), 0.0);
        res.p_values.assign(static_cast<std::size_t>(n_test), 1.0);
        for (int i = 0; i < n_test; ++i) {
            std::vector<double> signed_diffs(static_cast<std::size_t>(replicates));
            double abs_total = 0.0;
            for (int r = 0; r < replicates; ++r) {
                auto pw = forward(with_models[static_cast<std::size_t>(r)], test_set.row(i));
                auto po = forward(without_models[static_cast<std::size_t>(r)], test_set.row(i));
                double l1 = 0.0;
                for (std::size_t kcls = 0; kcls < pw.probs.size(); ++kcls)
                    l1 += std::abs(pw.probs[kcls] - po.probs[kcls]);
                abs_total += l1;
                const int lbl = test_set.labels[static_cast<std::size_t>(i)];
                signed_diffs[static_cast<std::size_t>(r)] =
                    pw.probs[static_cast<std::size_t>(lbl)] - po.probs[static_cast<std::size_t>(lbl)];
            }
            res.mean_abs_delta[static_cast<std::size_t>(i)] = abs_total / replicates;
            res.p_values[static_cast<std::size_t>(i)] = paired_t_test(signed_diffs);
        }
        double overall = 0.0;
        for (double d : res.mean_abs_delta) overall += d;
        res.overall_mean_delta = n_test > 0 ? overall / n_test : 0.0;
        results[c] = std::move(res);
    }
    return results;
}

}  // namespace protoscope
