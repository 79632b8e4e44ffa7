#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "protoscope/data.hpp"
#include "protoscope/rng.hpp"

namespace protoscope {

enum class Activation : std::uint8_t { relu = 0, tanh_fn = 1 };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct ModelSpec {
    int input_dim = 0;
    std::vector<int> hidden_widths;  // may be empty: linear softmax model
    int num_classes = 2;
    Activation activation = Activation::relu;

    int num_layers() const { return static_cast<int>(hidden_widths.size()) + 1; }
    int layer_in(int l) const;
    int layer_out(int l) const;
    int param_count() const;
    // offset of layer l's weight block; biases follow the weights of each layer
    int weight_offset(int l) const;
    int bias_offset(int l) const;
    void validate() const;
    bool operator==(const ModelSpec&) const = default;
};

struct Provenance {
    std::uint64_t seed = 0;
    std::uint64_t dataset_fingerprint = 0;
    std::uint64_t config_fingerprint = 0;
    bool operator==(const Provenance&) const = default;
};

// Immutable once produced; safe to share across threads for read-only
// forward/gradient evaluation.
struct ModelCheckpoint {
    ModelSpec spec;
    std::vector<double> parameters;
    Provenance provenance;

    void validate() const;
};

struct ProbVector {
    std::vector<double> probs;

    int argmax() const;
    double max() const;
    void validate() const;
};

enum class Optimizer : std::uint8_t { sgd = 0, adam = 1 };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

struct TrainConfig {
    int epochs = 50;
    int batch_size = 32;
    double learning_rate = 0.1;
    double lr_decay = 0.0;  // lr_epoch = learning_rate / (1 + lr_decay * epoch)
    Optimizer optimizer = Optimizer::sgd;
    std::uint64_t seed = 0;

    std::uint64_t fingerprint() const;
    void validate() const;
};

struct Batch {
    const LabeledDataset* dataset = nullptr;
    std::vector<int> indices;  // empty means the whole dataset

    int size() const;
    int index(int k) const;
};

ProbVector forward(const ModelCheckpoint& model, std::span<const double> x);
std::vector<double> logits_of(const ModelCheckpoint& model, std::span<const double> x);
int predict(const ModelCheckpoint& model, std::span<const double> x);
double accuracy(const ModelCheckpoint& model, const LabeledDataset& ds);

// Mean cross-entropy over the batch and its exact parameter gradient.
std::pair<double, std::vector<double>> loss_and_gradients(const ModelCheckpoint& model,
                                                          const Batch& batch);

// One parameter-shaped gradient per example (each example's own
// cross-entropy, no averaging). Their mean equals the batch gradient.
std::vector<std::vector<double>> per_example_gradients(const ModelCheckpoint& model,
                                                       const Batch& batch);

// Gradient of the cross-entropy toward `target_class` w.r.t. the input.
std::vector<double> input_gradient(const ModelCheckpoint& model, std::span<const double> x,
                                   int target_class);

ModelCheckpoint init_model(const ModelSpec& spec, std::uint64_t seed);

ModelCheckpoint train(const ModelSpec& spec, const LabeledDataset& dataset, const TrainConfig& cfg);

struct FineTuneResult {
    ModelCheckpoint model;
    int epochs_run = 0;
};

// Continues from the given parameters (never reinitializes) until the
// training loss has not improved for `patience` consecutive epochs.
FineTuneResult fine_tune(const ModelCheckpoint& model, const LabeledDataset& dataset, double lr,
                         int patience, int max_epochs = 500, int batch_size = 64);

// Versioned little-endian binary blob; round-trips bit-exactly.
void save_checkpoint(const ModelCheckpoint& model, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace protoscope
