#include "doctest.h"
#include "protoscope/attacks.hpp"
#include "protoscope/data.hpp"
#include "protoscope/error.hpp"
#include "protoscope/rng.hpp"

#include <cmath>

using namespace protoscope;

namespace {

LabeledDataset blobs(std::uint64_t seed, int n_per_class = 100) {
    GenConfig cfg;
    cfg.num_classes = 2;
    cfg.dims = 2;
    cfg.n_per_class = n_per_class;
    cfg.class_separation = 6.0;
    cfg.seed = seed;
    return generate_mixture(cfg);
}

ModelCheckpoint trained_linear(const LabeledDataset& ds, std::uint64_t seed = 1) {
    ModelSpec spec;
    spec.input_dim = ds.dim;
    spec.num_classes = ds.num_classes;
    TrainConfig tc;
    tc.epochs = 60;
    tc.batch_size = 32;
    tc.learning_rate = 0.2;
    tc.seed = seed;
    return train(spec, ds, tc);
}

ModelCheckpoint trained_mlp(const LabeledDataset& ds, std::uint64_t seed = 1) {
    ModelSpec spec;
    spec.input_dim = ds.dim;
    spec.num_classes = ds.num_classes;
    spec.hidden_widths = {16};
    TrainConfig tc;
    tc.epochs = 60;
    tc.batch_size = 32;
    tc.learning_rate = 0.2;
    tc.seed = seed;
    return train(spec, ds, tc);
}

}  // namespace

TEST_CASE("linear_margin_distance closed forms") {
    ModelSpec spec;
    spec.input_dim = 2;
    spec.num_classes = 2;
    ModelCheckpoint m;
    m.spec = spec;
    // w0 = (0,0), w1 = (3,4), biases 0: logit gap g(x) = 3x0 + 4x1
    m.parameters = {0.0, 0.0, 3.0, 4.0, 0.0, 0.0};

    SUBCASE("point on the boundary scores zero") {
        std::vector<double> x = {0.0, 0.0};
        CHECK(linear_margin_distance(m, x, Norm::l2) == doctest::Approx(0.0));
    }
    SUBCASE("gap 5 over weight-norm 5 gives l2 distance 1") {
        std::vector<double> x = {3.0 / 5.0, 4.0 / 5.0};  // g(x) = 5
        CHECK(linear_margin_distance(m, x, Norm::l2) == doctest::Approx(1.0));
        // linf distance uses the l1 dual norm: 5 / (3+4)
        CHECK(linear_margin_distance(m, x, Norm::linf) == doctest::Approx(5.0 / 7.0));
    }
    SUBCASE("hidden layers are rejected") {
        ModelSpec deep = spec;
        deep.hidden_widths = {4};
        ModelCheckpoint dm;
        dm.spec = deep;
        dm.parameters.assign(static_cast<std::size_t>(deep.param_count()), 0.1);
        std::vector<double> x = {0.0, 0.0};
        CHECK_THROWS_AS(linear_margin_distance(dm, x, Norm::l2), ContractViolation);
    }
}

TEST_CASE("linear margin matches a 1-D line search along the dual direction") {
    auto ds = blobs(5);
    auto model = trained_linear(ds);
    const double* W = model.parameters.data();
    // dual direction for l2: (w1 - w0) normalized
    std::vector<double> dir = {W[2] - W[0], W[3] - W[1]};
    double dn = std::hypot(dir[0], dir[1]);
    dir[0] /= dn;
    dir[1] /= dn;

    RngStream rng(17, 0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> x = {rng.uniform(-6, 6), rng.uniform(-6, 6)};
        int pred = predict(model, x);
        double want = linear_margin_distance(model, x, Norm::l2);
        // line search: smallest |s| with flipped prediction along +-dir
        double best = 1e18;
        for (double sign : {-1.0, 1.0}) {
            double lo = 0.0, hi = 50.0;
            auto flips = [&](double s) {
                std::vector<double> xp = {x[0] + sign * s * dir[0], x[1] + sign * s * dir[1]};
                return predict(model, xp) != pred;
            };
            if (!flips(hi)) continue;
            for (int it = 0; it < 60; ++it) {
                double mid = 0.5 * (lo + hi);
                (flips(mid) ? hi : lo) = mid;
            }
            best = std::min(best, hi);
        }
        CHECK(best == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("pgd_attack basics") {
    auto ds = blobs(7);
    auto model = trained_mlp(ds);

    SUBCASE("huge eps finds an adversarial example") {
        int found = 0, correct = 0;
        const double eps = feature_box_diameter(ds, Norm::linf);
        for (int i = 0; i < 50; ++i) {
            if (predict(model, ds.row(i)) != ds.labels[static_cast<std::size_t>(i)]) continue;
            ++correct;
            if (pgd_attack(model, ds.row(i), ds.labels[static_cast<std::size_t>(i)], Norm::linf, eps, 40)) ++found;
        }
        REQUIRE(correct > 30);
        CHECK(found == correct);
    }
    SUBCASE("already-misclassified input succeeds with zero perturbation") {
        int mis = -1;
        for (int i = 0; i < ds.size(); ++i)
            if (predict(model, ds.row(i)) != ds.labels[static_cast<std::size_t>(i)]) {
                mis = i;
                break;
            }
        if (mis >= 0) {
            auto xp = pgd_attack(model, ds.row(mis), ds.labels[static_cast<std::size_t>(mis)], Norm::l2, 0.5, 10);
            REQUIRE(xp.has_value());
            for (int d = 0; d < ds.dim; ++d) CHECK((*xp)[static_cast<std::size_t>(d)] == ds.row(mis)[static_cast<std::size_t>(d)]);
        }
    }
    SUBCASE("tiny eps on a confident point fails") {
        // pick the most confident correct point
        int best = -1;
        double conf = 0;
        for (int i = 0; i < ds.size(); ++i) {
            auto p = forward(model, ds.row(i));
            if (p.argmax() == ds.labels[static_cast<std::size_t>(i)] && p.max() > conf) {
                conf = p.max();
                best = i;
            }
        }
        REQUIRE(best >= 0);
        CHECK_FALSE(pgd_attack(model, ds.row(best), ds.labels[static_cast<std::size_t>(best)], Norm::l2, 1e-12, 40));
    }
}

TEST_CASE("adv_distance against the linear closed form") {
    auto ds = blobs(11);
    auto model = trained_linear(ds);
    AttackConfig cfg;
    cfg.bisection_iters = 12;
    cfg.eps_upper = feature_box_diameter(ds, Norm::l2);

    for (Norm norm : {Norm::l2, Norm::linf}) {
        cfg.norm = norm;
        if (norm == Norm::linf) cfg.eps_upper = feature_box_diameter(ds, Norm::linf);
        int tested = 0, within = 0;
        for (int i = 0; i < 60; ++i) {
            if (predict(model, ds.row(i)) != ds.labels[static_cast<std::size_t>(i)]) continue;
            ++tested;
            auto res = adv_distance(model, ds.row(i), ds.labels[static_cast<std::size_t>(i)], cfg);
            double oracle = linear_margin_distance(model, ds.row(i), norm);
            REQUIRE(res.found());
            if (std::abs(res.distance - oracle) / oracle < 0.05) ++within;
        }
        REQUIRE(tested > 40);
        CHECK(static_cast<double>(within) / tested >= 0.95);
    }
}

TEST_CASE("adv_distance result invariants") {
    auto ds = blobs(13);
    auto model = trained_mlp(ds);
    AttackConfig cfg;
    cfg.norm = Norm::linf;
    cfg.eps_upper = feature_box_diameter(ds, Norm::linf);

    for (int i = 0; i < 30; ++i) {
        auto res = adv_distance(model, ds.row(i), ds.labels[static_cast<std::size_t>(i)], cfg);
        if (!res.found()) continue;
        REQUIRE(res.perturbation.has_value());
        CHECK(vector_norm(*res.perturbation, cfg.norm) <= res.distance * (1 + 1e-6));
        if (res.distance > 0) {
            // the stored perturbation verifiably flips the argmax
            std::vector<double> xp(ds.row(i).begin(), ds.row(i).end());
            for (int d = 0; d < ds.dim; ++d) xp[static_cast<std::size_t>(d)] += (*res.perturbation)[static_cast<std::size_t>(d)];
            CHECK(predict(model, xp) != ds.labels[static_cast<std::size_t>(i)]);
        }
    }

    SUBCASE("misclassified input has distance zero") {
        for (int i = 0; i < ds.size(); ++i)
            if (predict(model, ds.row(i)) != ds.labels[static_cast<std::size_t>(i)]) {
                auto res = adv_distance(model, ds.row(i), ds.labels[static_cast<std::size_t>(i)], cfg);
                CHECK(res.distance == 0.0);
                break;
            }
    }
    SUBCASE("more bisection iterations never loosen the distance much") {
        AttackConfig coarse = cfg, fine = cfg;
        coarse.bisection_iters = 6;
        fine.bisection_iters = 14;
        const double bracket = cfg.eps_upper * std::pow(0.5, 6);
        for (int i = 0; i < 10; ++i) {
            auto a = adv_distance(model, ds.row(i), ds.labels[static_cast<std::size_t>(i)], coarse);
            auto b = adv_distance(model, ds.row(i), ds.labels[static_cast<std::size_t>(i)], fine);
            if (a.found() && b.found()) CHECK(b.distance <= a.distance + bracket);
        }
    }
}

TEST_CASE("mislabeled planted points sit closer to the boundary") {
    GenConfig cfg;
    cfg.num_classes = 4;
    cfg.dims = 2;
    cfg.n_per_class = 150;
    cfg.class_separation = 6.0;
    cfg.mislabel_fraction = 0.03;
    cfg.seed = 23;
    auto ds = generate_mixture(cfg);
    auto model = trained_mlp(ds, 3);

    AttackConfig acfg;
    acfg.norm = Norm::linf;
    acfg.eps_upper = feature_box_diameter(ds, Norm::linf);

    std::vector<double> clean, bad;
    for (int i = 0; i < ds.size(); ++i) {
        auto res = adv_distance(model, ds.row(i), ds.labels[static_cast<std::size_t>(i)], acfg);
        if (!res.found()) continue;
        (ds.planted[static_cast<std::size_t>(i)] == Planted::mislabeled ? bad : clean).push_back(res.distance);
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    REQUIRE(bad.size() > 5);
    CHECK(median(bad) < median(clean));
}
