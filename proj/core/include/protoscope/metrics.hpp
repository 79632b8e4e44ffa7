#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "protoscope/attacks.hpp"
#include "protoscope/data.hpp"
#include "protoscope/dp.hpp"
#include "protoscope/nn.hpp"

namespace protoscope {

enum class Orientation : std::uint8_t { higher_is_prototypical = 0, higher_is_outlier = 1 };

// Jensen-Shannon divergence, natural log; symmetric, in [0, ln 2].
double js_divergence(const ProbVector& p, const ProbVector& q);

// KL(p||q) + KL(q||p) after clamping entries to [1e-12, 1] and renormalizing.
double sym_kl(const ProbVector& p, const ProbVector& q);

struct ScoreColumn {
    std::string name;  // adv, ret, agr, conf, priv, or a combined-metric name
    Orientation orientation = Orientation::higher_is_prototypical;
    std::vector<std::int32_t> ids;
    std::vector<double> raw;  // +inf / -1 sentinels allowed where documented
};

// Per-example raw scores plus unified prototypicality percentiles
// (100 = most well-represented, tie-averaged ranks).
struct ScoreTable {
    std::vector<std::int32_t> ids;
    std::vector<int> labels;
    std::vector<Planted> planted;
    std::vector<ScoreColumn> columns;
    std::vector<std::vector<double>> percentiles;  // parallel to columns

    int size() const { return static_cast<int>(ids.size()); }
    int column_index(const std::string& name) const;  // -1 if absent
    const std::vector<double>& percentile(const std::string& name) const;
    const ScoreColumn& column(const std::string& name) const;
};

// Percentiles of a column's raw values under its orientation; ties share the
// mean of their positional percentiles 100*(pos+0.5)/n.
std::vector<double> prototypicality_percentiles(const ScoreColumn& col);

ScoreTable assemble_table(const std::vector<ScoreColumn>& columns,
                          const LabeledDataset& dataset);
void add_column(ScoreTable& table, ScoreColumn col);

std::string table_to_csv(const ScoreTable& table);
ScoreTable table_from_csv(const std::string& csv);
void save_table_csv(const ScoreTable& table, const std::filesystem::path& path);
ScoreTable load_table_csv(const std::filesystem::path& path);

// ids sorted from most to least prototypical under the named column.
std::vector<std::int32_t> ranking_by(const ScoreTable& table, const std::string& name);

struct Ensemble {
    std::vector<ModelCheckpoint> members;
    std::vector<ModelSpec> member_specs;
    std::vector<std::uint64_t> subset_fingerprints;
};

struct EnsembleConfig {
    int n_members = 20;
    std::vector<int> capacity_grid = {16, 32, 64};  // hidden-layer widths, cycled
    double subset_fraction = 0.8;
    TrainConfig base;
};

Ensemble build_ensemble(const LabeledDataset& dataset, const EnsembleConfig& cfg, int jobs = 1);

void save_ensemble(const Ensemble& ens, const std::filesystem::path& dir);
Ensemble load_ensemble(const std::filesystem::path& dir);

// adv: minimal adversarial distance per example; misclassified examples
// score 0; higher is prototypical.
ScoreColumn score_adv(const ModelCheckpoint& model, const LabeledDataset& dataset,
                      const AttackConfig& cfg, int jobs = 1);

enum class RetTarget : std::uint8_t { train_side = 0, test_side = 1 };

struct FineTuneConfig {
    double lr = 0.01;
    int patience = 5;
    int max_epochs = 500;
};

// ret: train on one side of the split, fine-tune on the other, score the
// target side by the symmetric KL between the two models' outputs.
ScoreColumn score_ret(const DatasetSplit& split, const ModelSpec& spec, const TrainConfig& train_cfg,
                      const FineTuneConfig& ft, RetTarget target = RetTarget::train_side);

// agr: mean pairwise JS-divergence across the ensemble (all N^2 ordered
// pairs, zero diagonal included); higher is outlier.
ScoreColumn score_agr(const Ensemble& ens, const LabeledDataset& dataset, int jobs = 1);

// conf: mean over members of the predicted-class probability; higher is
// prototypical.
ScoreColumn score_conf(const Ensemble& ens, const LabeledDataset& dataset, int jobs = 1);

// priv: largest level index (smallest epsilon) at which the example is
// classified correctly by >= reliability of the replicates at that level and
// at every less-private level; -1 sentinel when not reliable anywhere.
ScoreColumn score_priv(const PrivacyLadder& ladder, const LabeledDataset& dataset,
                       double reliability = 0.9);

}  // namespace protoscope
