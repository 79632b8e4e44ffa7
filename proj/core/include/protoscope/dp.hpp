#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "protoscope/nn.hpp"

namespace protoscope {

struct DpConfig {
    double clip_norm = 1.0;         // C; +inf sentinel disables clipping
    double noise_multiplier = 1.0;  // sigma
    int batch_size = 32;
    int epochs = 20;
    double learning_rate = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

// One Abadi-style DP-SGD update: clip each per-example gradient to l2 norm C,
// sum, add per-coordinate N(0, (sigma*C)^2) noise, divide by batch size,
// apply as an SGD step. Returns the clipped per-example norms so tests can
// assert the clipping bound on every step.
std::vector<double> dp_sgd_step(ModelCheckpoint& model, const Batch& batch, const DpConfig& dp,
                                RngStream& rng);

ModelCheckpoint dp_train(const ModelSpec& spec, const LabeledDataset& dataset, const DpConfig& dp);

// Epsilon upper bound for the subsampled Gaussian mechanism composed over
// total_steps via the strong composition theorem. Per-step budget:
// eps0 = q * sqrt(2 ln(1.25/delta0)) / sigma with delta0 = delta/(2k),
// composed as eps0*sqrt(2k ln(2/delta)) + k*eps0*(e^eps0 - 1).
// This is an upper bound, not a tight accountant; sigma = 0 yields +inf.
double epsilon_of(double sigma, long long total_steps, double sampling_rate, double delta);

struct PrivacyLevel {
    int level_index = 0;
    double noise_multiplier = 0.0;
    double epsilon = std::numeric_limits<double>::infinity();
    std::vector<ModelCheckpoint> models;
    std::vector<double> replicate_accuracy;  // on the training set, for the manifest
    bool failed = false;
};

struct PrivacyLadder {
    std::vector<PrivacyLevel> levels;  // ascending noise_multiplier
    int replicates_per_level = 1;
    double delta = 1e-5;

    int num_successful() const;
    void validate() const;
};

// Trains replicates x |sigmas| DP models (distinct RNG streams per pair,
// parallel across pairs). A level whose every replicate diverges is marked
// failed; the ladder is returned as long as >= 2 levels succeed.
PrivacyLadder build_privacy_ladder(const ModelSpec& spec, const LabeledDataset& dataset,
                                   const std::vector<double>& sigmas, int replicates,
                                   const TrainConfig& base, double clip_norm, double delta,
                                   int jobs = 1);

// Text manifest: per level sigma, epsilon, delta, per-replicate checkpoint
// path and accuracy. Checkpoints are written next to the manifest.
void save_ladder(const PrivacyLadder& ladder, const std::filesystem::path& dir);
PrivacyLadder load_ladder(const std::filesystem::path& dir);

}  // namespace protoscope
