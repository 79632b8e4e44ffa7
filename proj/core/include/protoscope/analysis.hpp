#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "protoscope/attacks.hpp"
#include "protoscope/metrics.hpp"

namespace protoscope {

enum class CorrelationMethod : std::uint8_t { pearson = 0, spearman = 1 };

struct CorrelationMatrix {
    std::vector<std::string> names;
    std::vector<std::vector<double>> values;  // symmetric, unit diagonal
    CorrelationMethod method = CorrelationMethod::spearman;
    std::vector<std::vector<bool>> undefined;  // true where a constant column forced 0

    std::string to_csv() const;
};

// Pairwise correlation of the prototypicality percentile columns. A constant
// column yields 0 with the undefined flag set.
CorrelationMatrix rank_correlations(const ScoreTable& table, CorrelationMethod method);

// Combined raw score = arithmetic mean of the constituents' prototypicality
// percentiles. Standard combos: boundary = {adv, ret}, ensemble = {agr, conf}.
ScoreColumn combine_metrics(const ScoreTable& table, const std::vector<std::string>& metrics,
                            const std::string& name);

// Adds boundary and ensemble columns when their constituents are present.
void add_standard_combos(ScoreTable& table);

struct ExampleSet {
    std::string name;
    std::vector<std::int32_t> ids;
    std::map<std::string, double> thresholds;
};

// High-confidence under the ensemble metrics yet fragile under boundary and
// lost under private training.
ExampleSet extract_memorized_exceptions(const ScoreTable& table, double ens_top = 25,
                                        double bnd_bottom = 50, double priv_bottom = 50);

// Lost under private training but recognized by the non-private metrics.
ExampleSet extract_uncommon_submodes(const ScoreTable& table, double priv_bottom = 25,
                                     double other_top = 50);

// Highly represented under every one of the five metrics.
ExampleSet extract_canonical_prototypes(const ScoreTable& table, double top = 50);

enum class EvalScope : std::uint8_t { full_test = 0, top_half_test = 1 };

struct CurriculumResult {
    std::vector<double> axis;  // window offsets or prefix sizes, as percentiles of n
    std::vector<double> accuracy;
    EvalScope eval_scope = EvalScope::full_test;

    std::string to_csv(const std::string& value_name = "accuracy") const;
};

// Trains one model per rank window [k, k+window_size) and evaluates test
// accuracy; axis entries are k/n*100.
CurriculumResult curriculum_window_experiment(const LabeledDataset& train_set,
                                              const std::vector<std::int32_t>& ranking,
                                              int window_size, int stride, const ModelSpec& spec,
                                              const TrainConfig& cfg, const LabeledDataset& test_set,
                                              int jobs = 1);

struct PrefixSuffixResult {
    CurriculumResult prefix;  // most-represented-first
    CurriculumResult suffix;  // least-represented-first
};

// Trains on the k most (prefix) and k least (suffix) represented examples for
// each size. With EvalScope::top_half_test, accuracy is measured only on the
// top-half-prototypical test points per test_ranking.
PrefixSuffixResult curriculum_prefix_suffix_experiment(
    const LabeledDataset& train_set, const std::vector<std::int32_t>& ranking,
    const std::vector<int>& sizes, const ModelSpec& spec, const TrainConfig& cfg,
    const LabeledDataset& test_set, EvalScope scope = EvalScope::full_test,
    const std::vector<std::int32_t>* test_ranking = nullptr, int jobs = 1);

struct NoiseAblationResult {
    CurriculumResult clean;
    CurriculumResult noisy;
    std::vector<double> delta;  // clean - noisy accuracy per window
};

// Window experiment rerun after injecting label noise into the training set;
// the ranking is the one computed on the clean data.
NoiseAblationResult label_noise_ablation(const LabeledDataset& train_set,
                                         const std::vector<std::int32_t>& ranking, double fraction,
                                         int window_size, int stride, const ModelSpec& spec,
                                         const TrainConfig& cfg, const LabeledDataset& test_set,
                                         std::uint64_t noise_seed = 1, int jobs = 1);

struct SliceRobustness {
    std::vector<double> slice_offsets_pct;
    std::vector<double> mean_distance;      // finite distances only
    std::vector<int> unreachable;           // +inf count per slice
    double baseline_mean_distance = 0.0;    // full-data model
    int baseline_unreachable = 0;

    std::string to_csv() const;
};

// Trains one model per rank slice plus a full-data baseline and reports each
// model's mean adversarial distance over a fixed evaluation set.
SliceRobustness robustness_by_slice(const LabeledDataset& train_set,
                                    const std::vector<std::int32_t>& ranking, int slice_size,
                                    const std::vector<int>& slice_offsets, const ModelSpec& spec,
                                    const TrainConfig& cfg, const AttackConfig& attack,
                                    const LabeledDataset& eval_set, int jobs = 1);

struct LeaveOneOutResult {
    std::int32_t candidate_id = 0;
    std::vector<double> mean_abs_delta;  // per test example, mean over seeds of |p_with - p_without|_1
    std::vector<double> p_values;        // paired t-test across seeds, per test example
    double overall_mean_delta = 0.0;
};

// Trains replicate pairs of models with and without each candidate example
// (paired seeds) and tests whether predictions moved.
std::vector<LeaveOneOutResult> leave_one_out_influence(const LabeledDataset& train_set,
                                                       const std::vector<std::int32_t>& candidates,
                                                       const LabeledDataset& test_set,
                                                       const ModelSpec& spec, const TrainConfig& cfg,
                                                       int replicates, int jobs = 1);

// Paired two-sided t-test p-value for mean(diffs) == 0; 1.0 when all diffs
// are (numerically) zero.
double paired_t_test(const std::vector<double>& diffs);

}  // namespace protoscope
