#include "protoscope/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "protoscope/error.hpp"

namespace protoscope {

std::string to_string(Norm n) { return n == Norm::l2 ? "l2" : "linf"; }

Norm norm_from_string(const std::string& s) {
    if (s == "l2") return Norm::l2;
    if (s == "linf") return Norm::linf;
    throw ContractViolation("unknown norm: " + s);
}

double vector_norm(std::span<const double> v, Norm norm) {
    double acc = 0.0;
    if (norm == Norm::l2) {
        for (double x : v) acc += x * x;
        return std::sqrt(acc);
    }
    for (double x : v) acc = std::max(acc, std::abs(x));
    return acc;
}

void AttackConfig::validate() const {
    if (pgd_steps < 1) throw ContractViolation("pgd_steps must be positive");
    if (step_fraction <= 0 || step_fraction > 1)
        throw ContractViolation("step_fraction must be in (0,1]");
    if (bisection_iters < 1) throw ContractViolation("bisection_iters must be positive");
    if (eps_upper <= 0) throw ContractViolation("eps_upper must be positive");
}

namespace {

void project_ball(std::vector<double>& delta, Norm norm, double eps) {
    if (norm == Norm::linf) {
        for (auto& d : delta) d = std::clamp(d, -eps, eps);
        return;
    }
    double n = vector_norm(delta, Norm::l2);
    if (n > eps && n > 0) {
        const double scale = eps / n;
        for (auto& d : delta) d *= scale;
    }
}

}  // namespace

std::optional<std::vector<double>> pgd_attack(const ModelCheckpoint& model,
                                              std::span<const double> x, int true_label, Norm norm,
                                              double eps, int steps, double step_fraction,
                                              bool clip_box, double box_lo, double box_hi) {
    if (eps <= 0) throw ContractViolation("eps must be positive");
    const int d = model.spec.input_dim;
    if (forward(model, x).argmax() != true_label) return std::vector<double>(x.begin(), x.end());

    std::vector<double> delta(static_cast<std::size_t>(d), 0.0);
    std::vector<double> xp(x.begin(), x.end());
    const double step = step_fraction * eps;

    for (int it = 0; it < steps; ++it) {
        auto g = input_gradient(model, xp, true_label);  // ascend: increase CE toward true label
        if (norm == Norm::linf) {
            for (int i = 0; i < d; ++i)
                delta[static_cast<std::size_t>(i)] += step * (g[static_cast<std::size_t>(i)] > 0 ? 1.0 : (g[static_cast<std::size_t>(i)] < 0 ? -1.0 : 0.0));
        } else {
            double gn = vector_norm(g, Norm::l2);
            if (gn > 0)
                for (int i = 0; i < d; ++i) delta[static_cast<std::size_t>(i)] += step * g[static_cast<std::size_t>(i)] / gn;
        }
        project_ball(delta, norm, eps);
        for (int i = 0; i < d; ++i) {
            xp[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] + delta[static_cast<std::size_t>(i)];
            if (clip_box) xp[static_cast<std::size_t>(i)] = std::clamp(xp[static_cast<std::size_t>(i)], box_lo, box_hi);
        }
        if (forward(model, xp).argmax() != true_label) return xp;
    }
    return std::nullopt;
}

AdversarialResult adv_distance(const ModelCheckpoint& model, std::span<const double> x,
                               int true_label, const AttackConfig& cfg) {
    cfg.validate();
    AdversarialResult res;

    const int original = forward(model, x).argmax();
    if (original != true_label) {
        res.distance = 0.0;
        res.perturbation = std::vector<double>(x.size(), 0.0);
        res.flipped_to = original;
        return res;
    }

    auto try_eps = [&](double eps) -> std::optional<std::vector<double>> {
        return pgd_attack(model, x, true_label, cfg.norm, eps, cfg.pgd_steps, cfg.step_fraction,
                          cfg.clip_box, cfg.box_lo, cfg.box_hi);
    };

    auto record = [&](double eps, std::vector<double>&& xp) {
        res.distance = eps;
        std::vector<double> delta(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) delta[i] = xp[i] - x[i];
        res.flipped_to = forward(model, xp).argmax();
        res.perturbation = std::move(delta);
    };

    res.iterations_used = 1;
    auto at_upper = try_eps(cfg.eps_upper);
    if (!at_upper) return res;  // +inf: nothing found inside the bracket
    record(cfg.eps_upper, std::move(*at_upper));

    double lo = 0.0, hi = cfg.eps_upper;
    for (int it = 0; it < cfg.bisection_iters; ++it) {
        ++res.iterations_used;
        const double mid = 0.5 * (lo + hi);
        if (auto xp = try_eps(mid)) {
            hi = mid;
            record(mid, std::move(*xp));
        } else {
            lo = mid;
        }
    }
    return res;
}

double linear_margin_distance(const ModelCheckpoint& model, std::span<const double> x, Norm norm) {
    if (!model.spec.hidden_widths.empty())
        throw ContractViolation("linear_margin_distance requires a model with no hidden layers");
    const int d = model.spec.input_dim;
    const int C = model.spec.num_classes;
    const double* W = model.parameters.data() + model.spec.weight_offset(0);
    const double* b = model.parameters.data() + model.spec.bias_offset(0);

    auto logit = [&](int c) {
        double acc = b[c];
        const double* row = W + static_cast<std::size_t>(c) * d;
        for (int i = 0; i < d; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
        return acc;
    };

    int top = 0;
    double top_logit = logit(0);
    for (int c = 1; c < C; ++c) {
        double z = logit(c);
        if (z > top_logit) {
            top_logit = z;
            top = c;
        }
    }

    // For each runner-up c: crossing distance |z_top - z_c| / dual-norm(w_top - w_c).
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < C; ++c) {
        if (c == top) continue;
        const double* wt = W + static_cast<std::size_t>(top) * d;
        const double* wc = W + static_cast<std::size_t>(c) * d;
        double dual = 0.0;
        for (int i = 0; i < d; ++i) {
            const double diff = wt[i] - wc[i];
            dual += norm == Norm::l2 ? diff * diff : std::abs(diff);
        }
        if (norm == Norm::l2) dual = std::sqrt(dual);
        if (dual <= 0) continue;  // identical weight rows can never cross
        best = std::min(best, (top_logit - logit(c)) / dual);
    }
    return best;
}

double feature_box_diameter(const LabeledDataset& ds, Norm norm) {
    if (ds.size() == 0) throw ContractViolation("empty dataset");
    double acc = 0.0;
    for (int d = 0; d < ds.dim; ++d) {
        double lo = ds.features[static_cast<std::size_t>(d)], hi = lo;
        for (int i = 1; i < ds.size(); ++i) {
            double v = ds.features[static_cast<std::size_t>(i) * ds.dim + d];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double side = hi - lo;
        acc = norm == Norm::l2 ? acc + side * side : std::max(acc, side);
    }
    return norm == Norm::l2 ? std::sqrt(acc) : acc;
}

}  // namespace protoscope
