// Command-line front end: dataset generation, training, scoring, and the
// analysis experiments, all reproducible from a seed + config.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "protoscope/analysis.hpp"
#include "protoscope/attacks.hpp"
#include "protoscope/data.hpp"
#include "protoscope/dp.hpp"
#include "protoscope/error.hpp"
#include "protoscope/metrics.hpp"
#include "protoscope/nn.hpp"
#include "protoscope/util.hpp"

namespace fs = std::filesystem;
using namespace protoscope;

namespace {

constexpr const char* kVersion = "protoscope 1.0.0";

// Configuration problems exit with code 1; contract violations in the input
// artifacts exit with code 2.
struct BadConfig : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GlobalOpts {
    std::uint64_t seed = 1;
    std::string out = ".";
    int jobs = 1;
    std::string dataset = "synthetic";
    std::string test_dataset = "synthetic";

    // synthetic-generation parameters (used when a descriptor is "synthetic")
    int classes = 4;
    int per_class = 500;
    int dims = 2;
    double separation = 6.0;
    double mislabel = 0.0;
    int submode_class = -1;
    double submode_fraction = 0.05;
    double submode_offset = 4.0;

    // model / training parameters shared by every command that trains
    std::vector<int> hidden = {32};
    std::string activation = "relu";
    int epochs = 50;
    int batch = 32;
    double lr = 0.1;
    double lr_decay = 0.0;
    std::string optimizer = "sgd";
};

GenConfig gen_config(const GlobalOpts& g, std::uint64_t seed) {
    GenConfig cfg;
    cfg.num_classes = g.classes;
    cfg.dims = g.dims;
    cfg.n_per_class = g.per_class;
    cfg.class_separation = g.separation;
    cfg.mislabel_fraction = g.mislabel;
    if (g.submode_class >= 0)
        cfg.submode = SubmodeSpec{g.submode_class, g.submode_fraction, g.submode_offset};
    cfg.seed = seed;
    return cfg;
}

// Descriptor forms: "synthetic", "idx:images,labels", or a CSV path
// (optionally prefixed "csv:").
LabeledDataset load_dataset(const GlobalOpts& g, const std::string& descriptor,
                            std::uint64_t synth_seed) {
    if (descriptor == "synthetic") return generate_mixture(gen_config(g, synth_seed));
    if (descriptor.rfind("idx:", 0) == 0) {
        auto rest = descriptor.substr(4);
        auto comma = rest.find(',');
        if (comma == std::string::npos)
            throw BadConfig("idx descriptor must be idx:imagepath,labelpath");
        return load_idx(rest.substr(0, comma), rest.substr(comma + 1));
    }
    auto path = descriptor.rfind("csv:", 0) == 0 ? descriptor.substr(4) : descriptor;
    return load_dataset_csv(path);
}

ModelSpec model_spec(const GlobalOpts& g, const LabeledDataset& ds) {
    ModelSpec spec;
    spec.input_dim = ds.dim;
    spec.hidden_widths = g.hidden;
    spec.num_classes = ds.num_classes;
    spec.activation = activation_from_string(g.activation);
    return spec;
}

TrainConfig train_config(const GlobalOpts& g, std::uint64_t seed) {
    TrainConfig tc;
    tc.epochs = g.epochs;
    tc.batch_size = g.batch;
    tc.learning_rate = g.lr;
    tc.lr_decay = g.lr_decay;
    tc.optimizer = optimizer_from_string(g.optimizer);
    tc.seed = seed;
    return tc;
}

void write_manifest(const GlobalOpts& g, const std::string& command, CLI::App& app,
                    const std::vector<std::pair<std::string, std::string>>& extras) {
    std::ostringstream out;
    out << "version=" << kVersion << "\n";
    out << "command=" << command << "\n";
    out << "seed=" << g.seed << "\n";
    out << "jobs=" << g.jobs << "\n";
    for (const auto& [k, v] : extras) out << k << '=' << v << "\n";
    out << "[resolved-config]\n" << app.config_to_str(true, false);
    atomic_write(fs::path(g.out) / "manifest.txt", out.str());
}

std::string set_to_csv(const ExampleSet& set) {
    std::ostringstream out;
    out << "# set=" << set.name << "\n";
    for (const auto& [k, v] : set.thresholds) out << "# threshold " << k << '=' << format_double(v) << "\n";
    out << "id\n";
    for (auto id : set.ids) out << id << "\n";
    return out.str();
}

std::vector<std::int32_t> ranking_from_table(const fs::path& table_path, const std::string& metric) {
    auto table = load_table_csv(table_path);
    if (table.column_index(metric) < 0)
        throw BadConfig("metric '" + metric + "' not present in " + table_path.string());
    return ranking_by(table, metric);
}

// ---------------------------------------------------------------------------
// scoring pipeline

struct ScoreOpts {
    std::string metric = "all";
    std::string model_path;     // reuse a trained checkpoint for adv
    std::string ensemble_dir;   // reuse a saved ensemble for agr/conf
    std::string ladder_dir;     // reuse a saved ladder for priv
    // attack
    std::string norm = "linf";
    int pgd_steps = 40;
    int bisection = 12;
    // ret
    double holdout_fraction = 0.5;
    double ft_lr = 0.01;
    int ft_patience = 5;
    // ensemble
    int members = 20;
    std::vector<int> capacities = {16, 32, 64};
    double subset_fraction = 0.8;
    // ladder
    std::vector<double> sigmas = {0.5, 1.0, 2.0, 4.0, 8.0};
    int replicates = 10;
    double clip = 1.0;
    double delta = 1e-5;
};

ScoreColumn score_ret_full(const GlobalOpts& g, const ScoreOpts& s, const LabeledDataset& ds) {
    auto sp = split(ds, s.holdout_fraction, g.seed);
    FineTuneConfig ft;
    ft.lr = s.ft_lr;
    ft.patience = s.ft_patience;
    auto spec = model_spec(g, ds);
    auto tc = train_config(g, g.seed);
    auto a = score_ret(sp, spec, tc, ft, RetTarget::train_side);
    auto b = score_ret(sp, spec, tc, ft, RetTarget::test_side);
    a.ids.insert(a.ids.end(), b.ids.begin(), b.ids.end());
    a.raw.insert(a.raw.end(), b.raw.begin(), b.raw.end());
    return a;
}

int cmd_score(const GlobalOpts& g, const ScoreOpts& s, CLI::App& app) {
    const bool all = s.metric == "all";
    auto want = [&](const char* m) { return all || s.metric == m; };
    if (!all && s.metric != "adv" && s.metric != "ret" && s.metric != "agr" &&
        s.metric != "conf" && s.metric != "priv")
        throw BadConfig("unknown metric '" + s.metric + "'");

    auto ds = load_dataset(g, g.dataset, g.seed);
    std::vector<ScoreColumn> columns;

    if (want("adv")) {
        ModelCheckpoint model = s.model_path.empty()
                                    ? train(model_spec(g, ds), ds, train_config(g, g.seed))
                                    : load_checkpoint(s.model_path);
        AttackConfig acfg;
        acfg.norm = norm_from_string(s.norm);
        acfg.pgd_steps = s.pgd_steps;
        acfg.bisection_iters = s.bisection;
        acfg.eps_upper = feature_box_diameter(ds, acfg.norm);
        columns.push_back(score_adv(model, ds, acfg, g.jobs));
    }
    if (want("ret")) columns.push_back(score_ret_full(g, s, ds));
    if (want("agr") || want("conf")) {
        Ensemble ens;
        if (s.ensemble_dir.empty()) {
            EnsembleConfig ecfg;
            ecfg.n_members = s.members;
            ecfg.capacity_grid = s.capacities;
            ecfg.subset_fraction = s.subset_fraction;
            ecfg.base = train_config(g, g.seed);
            ens = build_ensemble(ds, ecfg, g.jobs);
        } else {
            ens = load_ensemble(s.ensemble_dir);
        }
        if (want("agr")) columns.push_back(score_agr(ens, ds, g.jobs));
        if (want("conf")) columns.push_back(score_conf(ens, ds, g.jobs));
    }
    if (want("priv")) {
        PrivacyLadder ladder;
        if (s.ladder_dir.empty()) {
            ModelSpec spec = model_spec(g, ds);
            ladder = build_privacy_ladder(spec, ds, s.sigmas, s.replicates, train_config(g, g.seed),
                                          s.clip, s.delta, g.jobs);
        } else {
            ladder = load_ladder(s.ladder_dir);
        }
        columns.push_back(score_priv(ladder, ds));
    }

    auto table = assemble_table(columns, ds);
    atomic_write(fs::path(g.out) / "scores.csv", table_to_csv(table));
    write_manifest(g, "score " + s.metric, app,
                   {{"dataset", g.dataset},
                    {"dataset_fingerprint", std::to_string(ds.fingerprint())}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prototypicality scoring and outlier-analysis toolkit"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config")->configurable(false);
    app.fallthrough();
    app.require_subcommand(1);

    GlobalOpts g;
    if (const char* root = std::getenv("PROTOSCOPE_OUT")) g.out = root;
    app.add_option("--seed", g.seed, "master RNG seed")->capture_default_str();
    app.add_option("--out", g.out, "output directory")->capture_default_str();
    app.add_option("--jobs", g.jobs, "max parallel workers")->capture_default_str();
    app.add_option("--dataset", g.dataset,
                   "dataset descriptor: synthetic | csv path | idx:images,labels")
        ->capture_default_str();
    app.add_option("--test-dataset", g.test_dataset, "test-set descriptor (same forms)")
        ->capture_default_str();

    app.add_option("--classes", g.classes)->capture_default_str();
    app.add_option("--per-class", g.per_class)->capture_default_str();
    app.add_option("--dims", g.dims)->capture_default_str();
    app.add_option("--separation", g.separation)->capture_default_str();
    app.add_option("--mislabel", g.mislabel)->capture_default_str();
    app.add_option("--submode-class", g.submode_class, "-1 disables the planted submode")
        ->capture_default_str();
    app.add_option("--submode-fraction", g.submode_fraction)->capture_default_str();
    app.add_option("--submode-offset", g.submode_offset)->capture_default_str();

    app.add_option("--hidden", g.hidden, "hidden-layer widths")->capture_default_str();
    app.add_option("--activation", g.activation)->capture_default_str();
    app.add_option("--epochs", g.epochs)->capture_default_str();
    app.add_option("--batch", g.batch)->capture_default_str();
    app.add_option("--lr", g.lr)->capture_default_str();
    app.add_option("--lr-decay", g.lr_decay)->capture_default_str();
    app.add_option("--optimizer", g.optimizer)->capture_default_str();

    auto* c_generate = app.add_subcommand("generate", "synthesize a labeled dataset to CSV");

    auto* c_train = app.add_subcommand("train", "train a baseline model checkpoint");

    auto* c_ensemble = app.add_subcommand("ensemble", "train a model ensemble");
    ScoreOpts s;
    c_ensemble->add_option("--members", s.members)->capture_default_str();
    c_ensemble->add_option("--capacities", s.capacities)->capture_default_str();
    c_ensemble->add_option("--subset-fraction", s.subset_fraction)->capture_default_str();

    auto* c_ladder = app.add_subcommand("ladder", "train the privacy ladder");
    c_ladder->add_option("--sigmas", s.sigmas)->capture_default_str();
    c_ladder->add_option("--replicates", s.replicates)->capture_default_str();
    c_ladder->add_option("--clip", s.clip)->capture_default_str();
    c_ladder->add_option("--delta", s.delta)->capture_default_str();

    auto* c_score = app.add_subcommand("score", "score examples by one metric or all five");
    c_score->add_option("metric", s.metric, "adv|ret|agr|conf|priv|all")->required();
    c_score->add_option("--model", s.model_path, "checkpoint to attack (default: train one)");
    c_score->add_option("--ensemble-dir", s.ensemble_dir, "saved ensemble (default: build one)");
    c_score->add_option("--ladder-dir", s.ladder_dir, "saved ladder (default: build one)");
    c_score->add_option("--norm", s.norm)->capture_default_str();
    c_score->add_option("--pgd-steps", s.pgd_steps)->capture_default_str();
    c_score->add_option("--bisection", s.bisection)->capture_default_str();
    c_score->add_option("--holdout-fraction", s.holdout_fraction)->capture_default_str();
    c_score->add_option("--ft-lr", s.ft_lr)->capture_default_str();
    c_score->add_option("--ft-patience", s.ft_patience)->capture_default_str();
    c_score->add_option("--members", s.members)->capture_default_str();
    c_score->add_option("--capacities", s.capacities)->capture_default_str();
    c_score->add_option("--subset-fraction", s.subset_fraction)->capture_default_str();
    c_score->add_option("--sigmas", s.sigmas)->capture_default_str();
    c_score->add_option("--replicates", s.replicates)->capture_default_str();
    c_score->add_option("--clip", s.clip)->capture_default_str();
    c_score->add_option("--delta", s.delta)->capture_default_str();

    auto* c_correlate = app.add_subcommand("correlate", "pairwise rank correlations of a table");
    std::string table_path, method = "spearman", rank_metric = "adv";
    c_correlate->add_option("--table", table_path, "ScoreTable CSV")->required();
    c_correlate->add_option("--method", method, "spearman|pearson")->capture_default_str();

    auto* c_extract = app.add_subcommand("extract", "extract an example set from a table");
    std::string set_name;
    double ens_top = 25, bnd_bottom = 50, priv_bottom = 50, sub_priv_bottom = 25, other_top = 50,
           canon_top = 50;
    c_extract->add_option("set", set_name,
                          "memorized_exceptions|uncommon_submodes|canonical_prototypes")
        ->required();
    c_extract->add_option("--table", table_path, "ScoreTable CSV")->required();
    c_extract->add_option("--ens-top", ens_top)->capture_default_str();
    c_extract->add_option("--bnd-bottom", bnd_bottom)->capture_default_str();
    c_extract->add_option("--priv-bottom", priv_bottom)->capture_default_str();
    c_extract->add_option("--sub-priv-bottom", sub_priv_bottom)->capture_default_str();
    c_extract->add_option("--other-top", other_top)->capture_default_str();
    c_extract->add_option("--top", canon_top)->capture_default_str();

    auto* c_curriculum = app.add_subcommand("curriculum", "rank-ordered training experiments");
    std::string mode;
    int window = 0, stride = 0;
    std::vector<int> sizes;
    double noise_fraction = 0.1;
    bool top_half = false;
    std::string test_table;
    c_curriculum->add_option("mode", mode, "window|prefix|noise")->required();
    c_curriculum->add_option("--table", table_path, "ScoreTable CSV for the ranking")->required();
    c_curriculum->add_option("--rank-metric", rank_metric)->capture_default_str();
    c_curriculum->add_option("--window", window, "window size (default: 10% of n)");
    c_curriculum->add_option("--stride", stride, "window stride (default: window size)");
    c_curriculum->add_option("--sizes", sizes, "prefix sizes (default: 10/25/50/75/100% of n)");
    c_curriculum->add_option("--noise-fraction", noise_fraction)->capture_default_str();
    c_curriculum->add_flag("--top-half", top_half, "evaluate on the top-half-prototypical test set");
    c_curriculum->add_option("--test-table", test_table, "ScoreTable CSV for the test ranking");

    auto* c_robustness = app.add_subcommand("robustness", "adversarial distance by rank slice");
    int slice_size = 0;
    std::vector<int> offsets;
    c_robustness->add_option("--table", table_path, "ScoreTable CSV for the ranking")->required();
    c_robustness->add_option("--rank-metric", rank_metric)->capture_default_str();
    c_robustness->add_option("--slice-size", slice_size, "slice size (default: 10% of n)");
    c_robustness->add_option("--offsets", offsets, "rank offsets (default: 0 and n - slice)");
    c_robustness->add_option("--norm", s.norm)->capture_default_str();
    c_robustness->add_option("--pgd-steps", s.pgd_steps)->capture_default_str();
    c_robustness->add_option("--bisection", s.bisection)->capture_default_str();

    auto* c_loo = app.add_subcommand("loo", "leave-one-out influence of chosen examples");
    std::vector<std::int32_t> candidates;
    int loo_replicates = 5;
    c_loo->add_option("--candidates", candidates, "example ids to knock out")->required();
    c_loo->add_option("--replicates", loo_replicates)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        fs::create_directories(g.out);

        if (c_generate->parsed()) {
            auto ds = generate_mixture(gen_config(g, g.seed));
            atomic_write(fs::path(g.out) / "dataset.csv", dataset_to_csv(ds));
            write_manifest(g, "generate", app,
                           {{"dataset_fingerprint", std::to_string(ds.fingerprint())}});
            return 0;
        }
        if (c_train->parsed()) {
            auto ds = load_dataset(g, g.dataset, g.seed);
            auto model = train(model_spec(g, ds), ds, train_config(g, g.seed));
            save_checkpoint(model, fs::path(g.out) / "model.ckpt");
            write_manifest(g, "train", app,
                           {{"dataset", g.dataset},
                            {"dataset_fingerprint", std::to_string(ds.fingerprint())},
                            {"train_accuracy", format_double(accuracy(model, ds))}});
            return 0;
        }
        if (c_ensemble->parsed()) {
            auto ds = load_dataset(g, g.dataset, g.seed);
            EnsembleConfig ecfg;
            ecfg.n_members = s.members;
            ecfg.capacity_grid = s.capacities;
            ecfg.subset_fraction = s.subset_fraction;
            ecfg.base = train_config(g, g.seed);
            auto ens = build_ensemble(ds, ecfg, g.jobs);
            save_ensemble(ens, fs::path(g.out) / "ensemble");
            write_manifest(g, "ensemble", app,
                           {{"dataset", g.dataset},
                            {"dataset_fingerprint", std::to_string(ds.fingerprint())}});
            return 0;
        }
        if (c_ladder->parsed()) {
            auto ds = load_dataset(g, g.dataset, g.seed);
            auto ladder = build_privacy_ladder(model_spec(g, ds), ds, s.sigmas, s.replicates,
                                               train_config(g, g.seed), s.clip, s.delta, g.jobs);
            save_ladder(ladder, fs::path(g.out) / "ladder");
            write_manifest(g, "ladder", app,
                           {{"dataset", g.dataset},
                            {"dataset_fingerprint", std::to_string(ds.fingerprint())}});
            return 0;
        }
        if (c_score->parsed()) return cmd_score(g, s, app);
        if (c_correlate->parsed()) {
            auto table = load_table_csv(table_path);
            if (table.columns.size() < 2) {
                std::cerr << "need >= 2 metrics\n";
                return 1;
            }
            CorrelationMethod m;
            if (method == "spearman")
                m = CorrelationMethod::spearman;
            else if (method == "pearson")
                m = CorrelationMethod::pearson;
            else
                throw BadConfig("unknown method '" + method + "'");
            atomic_write(fs::path(g.out) / "correlations.csv", rank_correlations(table, m).to_csv());
            write_manifest(g, "correlate", app, {{"table", table_path}});
            return 0;
        }
        if (c_extract->parsed()) {
            auto table = load_table_csv(table_path);
            add_standard_combos(table);
            ExampleSet set;
            if (set_name == "memorized_exceptions")
                set = extract_memorized_exceptions(table, ens_top, bnd_bottom, priv_bottom);
            else if (set_name == "uncommon_submodes")
                set = extract_uncommon_submodes(table, sub_priv_bottom, other_top);
            else if (set_name == "canonical_prototypes")
                set = extract_canonical_prototypes(table, canon_top);
            else
                throw BadConfig("unknown set '" + set_name + "'");
            atomic_write(fs::path(g.out) / (set_name + ".csv"), set_to_csv(set));
            write_manifest(g, "extract " + set_name, app, {{"table", table_path}});
            return 0;
        }
        if (c_curriculum->parsed()) {
            auto train_set = load_dataset(g, g.dataset, g.seed);
            auto test_set = load_dataset(g, g.test_dataset, g.seed + 1);
            auto ranking = ranking_from_table(table_path, rank_metric);
            const int n = train_set.size();
            if (window == 0) window = std::max(1, n / 10);
            if (stride == 0) stride = window;
            auto spec = model_spec(g, train_set);
            auto tc = train_config(g, g.seed);

            if (mode == "window") {
                auto res = curriculum_window_experiment(train_set, ranking, window, stride, spec,
                                                        tc, test_set, g.jobs);
                atomic_write(fs::path(g.out) / "curriculum_window.csv", res.to_csv());
            } else if (mode == "prefix") {
                if (sizes.empty())
                    for (double f : {0.1, 0.25, 0.5, 0.75, 1.0})
                        sizes.push_back(std::max(1, static_cast<int>(f * n)));
                std::vector<std::int32_t> test_ranking;
                const std::vector<std::int32_t>* trp = nullptr;
                if (top_half) {
                    if (test_table.empty())
                        throw BadConfig("--top-half needs --test-table for the test ranking");
                    test_ranking = ranking_from_table(test_table, rank_metric);
                    trp = &test_ranking;
                }
                auto res = curriculum_prefix_suffix_experiment(
                    train_set, ranking, sizes, spec, tc, test_set,
                    top_half ? EvalScope::top_half_test : EvalScope::full_test, trp, g.jobs);
                std::ostringstream out;
                out << "axis_pct,prefix_accuracy,suffix_accuracy\n";
                for (std::size_t i = 0; i < res.prefix.axis.size(); ++i)
                    out << format_double(res.prefix.axis[i]) << ','
                        << format_double(res.prefix.accuracy[i]) << ','
                        << format_double(res.suffix.accuracy[i]) << "\n";
                atomic_write(fs::path(g.out) / "curriculum_prefix.csv", out.str());
            } else if (mode == "noise") {
                auto res = label_noise_ablation(train_set, ranking, noise_fraction, window, stride,
                                                spec, tc, test_set, g.seed + 2, g.jobs);
                std::ostringstream out;
                out << "axis_pct,clean_accuracy,noisy_accuracy,delta\n";
                for (std::size_t i = 0; i < res.clean.axis.size(); ++i)
                    out << format_double(res.clean.axis[i]) << ','
                        << format_double(res.clean.accuracy[i]) << ','
                        << format_double(res.noisy.accuracy[i]) << ','
                        << format_double(res.delta[i]) << "\n";
                atomic_write(fs::path(g.out) / "curriculum_noise.csv", out.str());
            } else {
                throw BadConfig("unknown curriculum mode '" + mode + "'");
            }
            write_manifest(g, "curriculum " + mode, app,
                           {{"dataset", g.dataset},
                            {"dataset_fingerprint", std::to_string(train_set.fingerprint())},
                            {"table", table_path}});
            return 0;
        }
        if (c_robustness->parsed()) {
            auto train_set = load_dataset(g, g.dataset, g.seed);
            auto eval_set = load_dataset(g, g.test_dataset, g.seed + 1);
            auto ranking = ranking_from_table(table_path, rank_metric);
            const int n = train_set.size();
            if (slice_size == 0) slice_size = std::max(1, n / 10);
            if (offsets.empty()) offsets = {0, n - slice_size};
            AttackConfig acfg;
            acfg.norm = norm_from_string(s.norm);
            acfg.pgd_steps = s.pgd_steps;
            acfg.bisection_iters = s.bisection;
            auto res = robustness_by_slice(train_set, ranking, slice_size, offsets,
                                           model_spec(g, train_set), train_config(g, g.seed), acfg,
                                           eval_set, g.jobs);
            atomic_write(fs::path(g.out) / "robustness.csv", res.to_csv());
            write_manifest(g, "robustness", app,
                           {{"dataset", g.dataset},
                            {"dataset_fingerprint", std::to_string(train_set.fingerprint())},
                            {"table", table_path}});
            return 0;
        }
        if (c_loo->parsed()) {
            auto train_set = load_dataset(g, g.dataset, g.seed);
            auto test_set = load_dataset(g, g.test_dataset, g.seed + 1);
            auto results = leave_one_out_influence(train_set, candidates, test_set,
                                                   model_spec(g, train_set), train_config(g, g.seed),
                                                   loo_replicates, g.jobs);
            std::ostringstream out;
            out << "candidate_id,overall_mean_delta,min_p_value\n";
            for (const auto& r : results) {
                double min_p = 1.0;
                for (double p : r.p_values) min_p = std::min(min_p, p);
                out << r.candidate_id << ',' << format_double(r.overall_mean_delta) << ','
                    << format_double(min_p) << "\n";
            }
            atomic_write(fs::path(g.out) / "loo.csv", out.str());
            write_manifest(g, "loo", app,
                           {{"dataset", g.dataset},
                            {"dataset_fingerprint", std::to_string(train_set.fingerprint())}});
            return 0;
        }
        throw BadConfig("no command given");
    } catch (const BadConfig& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ContractViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DivergedTraining& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
