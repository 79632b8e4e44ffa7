#include "protoscope/dp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "protoscope/error.hpp"
#include "protoscope/util.hpp"

namespace protoscope {

void DpConfig::validate() const {
    if (clip_norm <= 0) throw ContractViolation("clip_norm must be positive");
    if (noise_multiplier < 0) throw ContractViolation("noise_multiplier must be nonnegative");
    if (batch_size < 1 || epochs < 1) throw ContractViolation("batch_size and epochs must be positive");
    if (learning_rate < 0) throw ContractViolation("learning_rate must be nonnegative");
}

std::vector<double> dp_sgd_step(ModelCheckpoint& model, const Batch& batch, const DpConfig& dp,
                                RngStream& rng) {
    dp.validate();
    auto grads = per_example_gradients(model, batch);
    const int n = static_cast<int>(grads.size());
    const std::size_t p = model.parameters.size();

    std::vector<double> clipped_norms;
    clipped_norms.reserve(grads.size());
    std::vector<double> sum(p, 0.0);
    for (auto& g : grads) {
        double norm = 0.0;
        for (double v : g) norm += v * v;
        norm = std::sqrt(norm);
        double scale = 1.0;
        if (std::isfinite(dp.clip_norm) && norm > dp.clip_norm) scale = dp.clip_norm / norm;
        for (std::size_t i = 0; i < p; ++i) sum[i] += scale * g[i];
        clipped_norms.push_back(norm * scale);
    }

    const double noise_std =
        std::isfinite(dp.clip_norm) ? dp.noise_multiplier * dp.clip_norm : 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        double update = sum[i];
        if (noise_std > 0) update += noise_std * rng.gaussian();
        update /= n;
        if (!std::isfinite(update)) throw DivergedTraining("non-finite DP update", 0);
        model.parameters[i] -= dp.learning_rate * update;
    }
    return clipped_norms;
}

ModelCheckpoint dp_train(const ModelSpec& spec, const LabeledDataset& dataset, const DpConfig& dp) {
    dp.validate();
    spec.validate();
    if (dataset.size() == 0) throw ContractViolation("empty training set");
    const int n = dataset.size();
    const int bs = std::min(dp.batch_size, n);

    ModelCheckpoint model = init_model(spec, dp.seed);
    model.provenance.dataset_fingerprint = dataset.fingerprint();

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle_rng(dp.seed, 0x64707368ULL);
    RngStream noise_rng(dp.seed, 0x64706e7aULL);
    Batch batch;
    batch.dataset = &dataset;

    for (int epoch = 0; epoch < dp.epochs; ++epoch) {
        shuffle_rng.substream(static_cast<std::uint64_t>(epoch)).shuffle(order);
        for (int start = 0; start < n; start += bs) {
            const int end = std::min(start + bs, n);
            batch.indices.assign(order.begin() + start, order.begin() + end);
            try {
                dp_sgd_step(model, batch, dp, noise_rng);
            } catch (const DivergedTraining&) {
                throw DivergedTraining("DP training diverged", epoch);
            }
        }
    }
    for (double p : model.parameters)
        if (!std::isfinite(p)) throw DivergedTraining("non-finite DP parameters", dp.epochs - 1);
    return model;
}

double epsilon_of(double sigma, long long total_steps, double sampling_rate, double delta) {
    if (sigma < 0 || total_steps < 1) throw ContractViolation("bad accounting inputs");
    if (sampling_rate <= 0 || sampling_rate > 1) throw ContractViolation("sampling rate must be in (0,1]");
    if (delta <= 0 || delta >= 1) throw ContractViolation("delta must be in (0,1)");
    if (sigma == 0) return std::numeric_limits<double>::infinity();

    const double k = static_cast<double>(total_steps);
    const double delta0 = delta / (2.0 * k);  // per-step delta; delta' = delta/2 for composition
    const double eps0 = sampling_rate * std::sqrt(2.0 * std::log(1.25 / delta0)) / sigma;
    return eps0 * std::sqrt(2.0 * k * std::log(2.0 / delta)) + k * eps0 * (std::expm1(eps0));
}

int PrivacyLadder::num_successful() const {
    int n = 0;
    for (const auto& lvl : levels)
        if (!lvl.failed) ++n;
    return n;
}

void PrivacyLadder::validate() const {
    for (std::size_t i = 1; i < levels.size(); ++i)
        if (levels[i].noise_multiplier <= levels[i - 1].noise_multiplier)
            throw ContractViolation("ladder sigmas must be strictly ascending");
}

PrivacyLadder build_privacy_ladder(const ModelSpec& spec, const LabeledDataset& dataset,
                                   const std::vector<double>& sigmas, int replicates,
                                   const TrainConfig& base, double clip_norm, double delta,
                                   int jobs) {
    if (sigmas.empty()) throw ContractViolation("empty sigma grid");
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
        if (sigmas[i] <= 0) throw ContractViolation("ladder sigmas must be positive");
        if (i > 0 && sigmas[i] <= sigmas[i - 1])
            throw ContractViolation("ladder sigmas must be strictly ascending");
    }
    if (replicates < 1) throw ContractViolation("replicates must be >= 1");

    const int n = dataset.size();
    const int bs = std::min(base.batch_size, n);
    const long long steps_per_epoch = (n + bs - 1) / bs;
    const long long total_steps = static_cast<long long>(base.epochs) * steps_per_epoch;
    const double q = static_cast<double>(bs) / n;

    PrivacyLadder ladder;
    ladder.replicates_per_level = replicates;
    ladder.delta = delta;
    ladder.levels.resize(sigmas.size());
    for (std::size_t lvl = 0; lvl < sigmas.size(); ++lvl) {
        ladder.levels[lvl].level_index = static_cast<int>(lvl);
        ladder.levels[lvl].noise_multiplier = sigmas[lvl];
        ladder.levels[lvl].epsilon = epsilon_of(sigmas[lvl], total_steps, q, delta);
        ladder.levels[lvl].models.resize(static_cast<std::size_t>(replicates));
        ladder.levels[lvl].replicate_accuracy.assign(static_cast<std::size_t>(replicates), 0.0);
    }

    const int total = static_cast<int>(sigmas.size()) * replicates;
    std::vector<char> diverged(static_cast<std::size_t>(total), 0);
    RngStream seeder(base.seed, 0x6c616464657200ULL);
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(total));
    for (int t = 0; t < total; ++t) seeds[static_cast<std::size_t>(t)] = seeder.substream(static_cast<std::uint64_t>(t)).next_u64();

    parallel_for(total, jobs, [&](int t) {
        const int lvl = t / replicates;
        const int rep = t % replicates;
        DpConfig dp;
        dp.clip_norm = clip_norm;
        dp.noise_multiplier = sigmas[static_cast<std::size_t>(lvl)];
        dp.batch_size = bs;
        dp.epochs = base.epochs;
        dp.learning_rate = base.learning_rate;
        dp.seed = seeds[static_cast<std::size_t>(t)];
        auto& level = ladder.levels[static_cast<std::size_t>(lvl)];
        try {
            level.models[static_cast<std::size_t>(rep)] = dp_train(spec, dataset, dp);
            level.replicate_accuracy[static_cast<std::size_t>(rep)] =
                accuracy(level.models[static_cast<std::size_t>(rep)], dataset);
        } catch (const DivergedTraining&) {
            diverged[static_cast<std::size_t>(t)] = 1;
        }
    });

    for (int t = 0; t < total; ++t)
        if (diverged[static_cast<std::size_t>(t)]) ladder.levels[static_cast<std::size_t>(t / replicates)].failed = true;
    for (auto& level : ladder.levels)
        if (level.failed) {
            level.models.clear();
            level.replicate_accuracy.clear();
        }

    if (ladder.num_successful() < 2)
        throw DivergedTraining("fewer than 2 privacy levels trained successfully", base.epochs);
    return ladder;
}

// ---------------------------------------------------------------------------
// manifest

void save_ladder(const PrivacyLadder& ladder, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ostringstream m;
    m << "replicates_per_level=" << ladder.replicates_per_level << "\n";
    m << "delta=" << format_double(ladder.delta) << "\n";
    m << "num_levels=" << ladder.levels.size() << "\n";
    for (const auto& level : ladder.levels) {
        m << "level=" << level.level_index << " sigma=" << format_double(level.noise_multiplier)
          << " epsilon=" << format_double(level.epsilon) << " failed=" << (level.failed ? 1 : 0)
          << "\n";
        for (std::size_t r = 0; r < level.models.size(); ++r) {
            std::string name = "level" + std::to_string(level.level_index) + "_rep" +
                               std::to_string(r) + ".ckpt";
            save_checkpoint(level.models[r], dir / name);
            m << "replicate=" << r << " path=" << name
              << " accuracy=" << format_double(level.replicate_accuracy[r]) << "\n";
        }
    }
    atomic_write(dir / "ladder.manifest", m.str());
}

PrivacyLadder load_ladder(const std::filesystem::path& dir) {
    std::istringstream in(read_file(dir / "ladder.manifest"));
    PrivacyLadder ladder;
    std::string line;
    PrivacyLevel* current = nullptr;
    auto value_of = [](const std::string& tok) { return tok.substr(tok.find('=') + 1); };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string first;
        ls >> first;
        if (first.rfind("replicates_per_level=", 0) == 0) {
            ladder.replicates_per_level = std::stoi(value_of(first));
        } else if (first.rfind("delta=", 0) == 0) {
            ladder.delta = std::stod(value_of(first));
        } else if (first.rfind("num_levels=", 0) == 0) {
            ladder.levels.reserve(std::stoul(value_of(first)));
        } else if (first.rfind("level=", 0) == 0) {
            PrivacyLevel level;
            level.level_index = std::stoi(value_of(first));
            std::string tok;
            while (ls >> tok) {
                if (tok.rfind("sigma=", 0) == 0) level.noise_multiplier = std::stod(value_of(tok));
                else if (tok.rfind("epsilon=", 0) == 0) level.epsilon = std::stod(value_of(tok));
                else if (tok.rfind("failed=", 0) == 0) level.failed = value_of(tok) == "1";
            }
            ladder.levels.push_back(std::move(level));
            current = &ladder.levels.back();
        } else if (first.rfind("replicate=", 0) == 0) {
            if (!current) throw ParseError("replicate line before level line in ladder manifest", 0);
            std::string tok;
            while (ls >> tok) {
                if (tok.rfind("path=", 0) == 0)
                    current->models.push_back(load_checkpoint(dir / value_of(tok)));
                else if (tok.rfind("accuracy=", 0) == 0)
                    current->replicate_accuracy.push_back(std::stod(value_of(tok)));
            }
        }
    }
    ladder.validate();
    return ladder;
}

}  // namespace protoscope
