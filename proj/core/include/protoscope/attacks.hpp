#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "protoscope/nn.hpp"

namespace protoscope {

enum class Norm : std::uint8_t { l2 = 0, linf = 1 };

std::string to_string(Norm n);
Norm norm_from_string(const std::string& s);

double vector_norm(std::span<const double> v, Norm norm);

struct AttackConfig {
    Norm norm = Norm::l2;
    int pgd_steps = 40;
    double step_fraction = 0.25;  // PGD step size as a fraction of eps
    int bisection_iters = 12;
    double eps_upper = 0.0;  // search bracket; 0 means "derive from data" at call sites
    std::uint64_t seed = 0;
    bool clip_box = false;  // optionally project iterates into [box_lo, box_hi]^d
    double box_lo = 0.0;
    double box_hi = 1.0;

    void validate() const;
};

struct AdversarialResult {
    double distance = std::numeric_limits<double>::infinity();
    std::optional<std::vector<double>> perturbation;
    std::optional<int> flipped_to;
    int iterations_used = 0;

    bool found() const { return std::isfinite(distance); }
};

// Untargeted PGD inside an eps-ball: ascend the loss toward the true label
// (sign of the gradient for linf, normalized gradient for l2), project back
// onto the ball after each step. Returns the first misclassified iterate, or
// nullopt if none of the iterates flips the prediction.
std::optional<std::vector<double>> pgd_attack(const ModelCheckpoint& model,
                                              std::span<const double> x, int true_label, Norm norm,
                                              double eps, int steps, double step_fraction = 0.25,
                                              bool clip_box = false, double box_lo = 0.0,
                                              double box_hi = 1.0);

// Minimal-perturbation distance: bisection over eps with pgd_attack as the
// feasibility oracle. distance = smallest eps found feasible; +inf when even
// eps_upper fails. A point the model already misclassifies has distance 0.
AdversarialResult adv_distance(const ModelCheckpoint& model, std::span<const double> x,
                               int true_label, const AttackConfig& cfg);

// Closed-form distance to the decision boundary of a linear softmax model
// (no hidden layers); the testing oracle for adv_distance.
double linear_margin_distance(const ModelCheckpoint& model, std::span<const double> x, Norm norm);

// Largest pairwise distance in the dataset's feature bounding box; the
// default eps_upper.
double feature_box_diameter(const LabeledDataset& ds, Norm norm);

}  // namespace protoscope
