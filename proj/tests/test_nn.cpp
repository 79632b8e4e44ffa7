#include "doctest.h"
#include "protoscope/data.hpp"
#include "protoscope/error.hpp"
#include "protoscope/metrics.hpp"
#include "protoscope/nn.hpp"
#include "protoscope/rng.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

using namespace protoscope;

namespace {

ModelCheckpoint random_model(const ModelSpec& spec, std::uint64_t seed) {
    return init_model(spec, seed);
}

LabeledDataset random_batch_data(int n, int dim, int classes, std::uint64_t seed) {
    LabeledDataset ds;
    ds.dim = dim;
    ds.num_classes = classes;
    RngStream rng(seed, 99);
    for (int i = 0; i < n; ++i) {
        ds.ids.push_back(i);
        ds.labels.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(classes))));
        ds.planted.push_back(Planted::clean);
        for (int d = 0; d < dim; ++d) ds.features.push_back(rng.gaussian());
    }
    return ds;
}

// independent straight-line forward oracle: explicit matrix multiplies
ProbVector forward_oracle(const ModelCheckpoint& m, std::span<const double> x) {
    std::vector<double> cur(x.begin(), x.end());
    const auto& spec = m.spec;
    for (int l = 0; l < spec.num_layers(); ++l) {
        const int ni = spec.layer_in(l), no = spec.layer_out(l);
        std::vector<double> nxt(static_cast<std::size_t>(no), 0.0);
        for (int o = 0; o < no; ++o) {
            double z = m.parameters[static_cast<std::size_t>(spec.bias_offset(l) + o)];
            for (int i = 0; i < ni; ++i)
                z += m.parameters[static_cast<std::size_t>(spec.weight_offset(l) + o * ni + i)] *
                     cur[static_cast<std::size_t>(i)];
            nxt[static_cast<std::size_t>(o)] = z;
        }
        if (l < spec.num_layers() - 1) {
            for (auto& v : nxt)
                v = spec.activation == Activation::relu ? std::max(v, 0.0) : std::tanh(v);
        } else {
            double zmax = *std::max_element(nxt.begin(), nxt.end());
            double sum = 0.0;
            for (auto& v : nxt) {
                v = std::exp(v - zmax);
                sum += v;
            }
            for (auto& v : nxt) v /= sum;
        }
        cur = std::move(nxt);
    }
    return ProbVector{cur};
}

double batch_loss(const ModelCheckpoint& m, const Batch& b) {
    return loss_and_gradients(m, b).first;
}

}  // namespace

TEST_CASE("zero-weight model outputs the uniform distribution") {
    ModelSpec spec;
    spec.input_dim = 3;
    spec.num_classes = 4;
    ModelCheckpoint m;
    m.spec = spec;
    m.parameters.assign(static_cast<std::size_t>(spec.param_count()), 0.0);
    std::vector<double> x = {1.5, -2.0, 0.25};
    auto p = forward(m, x);
    p.validate();
    for (double v : p.probs) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("linear model with zero logit gap splits 50/50") {
    ModelSpec spec;
    spec.input_dim = 2;
    spec.num_classes = 2;
    ModelCheckpoint m;
    m.spec = spec;
    m.parameters.assign(static_cast<std::size_t>(spec.param_count()), 0.0);
    // class-1 weights (1, 0); x = (0, 0) gives equal logits
    m.parameters[static_cast<std::size_t>(spec.weight_offset(0) + 2)] = 1.0;
    std::vector<double> x = {0.0, 0.0};
    auto p = forward(m, x);
    CHECK(p.probs[0] == doctest::Approx(0.5));
    CHECK(p.probs[1] == doctest::Approx(0.5));
}

TEST_CASE("forward matches a hand-rolled matrix-multiply oracle") {
    ModelSpec spec;
    spec.input_dim = 2;
    spec.hidden_widths = {8};
    spec.num_classes = 3;
    for (auto act : {Activation::relu, Activation::tanh_fn}) {
        spec.activation = act;
        auto m = random_model(spec, 123);
        RngStream rng(5, 5);
        for (int t = 0; t < 20; ++t) {
            std::vector<double> x = {rng.gaussian(), rng.gaussian()};
            auto got = forward(m, x);
            auto want = forward_oracle(m, x);
            for (std::size_t k = 0; k < got.probs.size(); ++k)
                CHECK(got.probs[k] == doctest::Approx(want.probs[k]).epsilon(1e-12));
        }
    }
}

TEST_CASE("forward output is a probability vector") {
    ModelSpec spec;
    spec.input_dim = 4;
    spec.hidden_widths = {6, 5};
    spec.num_classes = 5;
    auto m = random_model(spec, 77);
    RngStream rng(1, 2);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> x(4);
        for (auto& v : x) v = 3.0 * rng.gaussian();
        forward(m, x).validate();
    }
}

TEST_CASE("forward rejects dimension mismatch") {
    ModelSpec spec;
    spec.input_dim = 3;
    spec.num_classes = 2;
    auto m = random_model(spec, 1);
    std::vector<double> x = {1.0, 2.0};
    CHECK_THROWS_AS(forward(m, x), ContractViolation);
}

TEST_CASE("analytic gradients match central finite differences") {
    ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden_widths = {8, 6};
    spec.num_classes = 3;
    spec.activation = Activation::tanh_fn;  // smooth activation for clean finite differences
    auto m = random_model(spec, 321);
    auto ds = random_batch_data(6, 3, 3, 4);
    Batch batch{&ds, {}};

    auto [loss, grad] = loss_and_gradients(m, batch);
    CHECK(std::isfinite(loss));

    const double h = 1e-5;
    double max_rel = 0.0;
    for (std::size_t p = 0; p < m.parameters.size(); ++p) {
        auto mp = m;
        mp.parameters[p] += h;
        auto mm = m;
        mm.parameters[p] -= h;
        const double fd = (batch_loss(mp, batch) - batch_loss(mm, batch)) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(grad[p]), 1e-8});
        max_rel = std::max(max_rel, std::abs(fd - grad[p]) / denom);
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("duplicated batch leaves mean loss and gradient unchanged") {
    ModelSpec spec;
    spec.input_dim = 2;
    spec.hidden_widths = {5};
    spec.num_classes = 2;
    auto m = random_model(spec, 8);
    auto ds = random_batch_data(4, 2, 2, 9);
    Batch batch{&ds, {0, 1, 2, 3}};
    Batch doubled{&ds, {0, 1, 2, 3, 0, 1, 2, 3}};
    auto [l1, g1] = loss_and_gradients(m, batch);
    auto [l2, g2] = loss_and_gradients(m, doubled);
    CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-12));
}

TEST_CASE("per-example gradients decompose the batch gradient") {
    ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden_widths = {7};
    spec.num_classes = 4;
    auto m = random_model(spec, 55);
    auto ds = random_batch_data(4, 3, 4, 10);
    Batch batch{&ds, {}};

    auto grads = per_example_gradients(m, batch);
    REQUIRE(grads.size() == 4);
    auto [loss, full] = loss_and_gradients(m, batch);
    for (std::size_t p = 0; p < full.size(); ++p) {
        double mean = 0.0;
        for (const auto& g : grads) mean += g[p];
        mean /= static_cast<double>(grads.size());
        CHECK(std::abs(mean - full[p]) < 1e-10);
    }

    SUBCASE("batch of one equals the full gradient") {
        Batch one{&ds, {2}};
        auto single = per_example_gradients(m, one);
        auto [l1, g1] = loss_and_gradients(m, one);
        for (std::size_t p = 0; p < g1.size(); ++p) CHECK(single[0][p] == g1[p]);
    }
    SUBCASE("identical examples give identical gradients") {
        Batch rep{&ds, {1, 1, 1}};
        auto reps = per_example_gradients(m, rep);
        CHECK(reps[0] == reps[1]);
        CHECK(reps[1] == reps[2]);
    }
}

TEST_CASE("input gradient") {
    SUBCASE("zero-weight model has zero input gradient") {
        ModelSpec spec;
        spec.input_dim = 3;
        spec.num_classes = 2;
        ModelCheckpoint m;
        m.spec = spec;
        m.parameters.assign(static_cast<std::size_t>(spec.param_count()), 0.0);
        std::vector<double> x = {1.0, 2.0, 3.0};
        for (double g : input_gradient(m, x, 0)) CHECK(g == 0.0);
    }
    SUBCASE("linear binary model gradient is proportional to the weight gap") {
        ModelSpec spec;
        spec.input_dim = 2;
        spec.num_classes = 2;
        ModelCheckpoint m;
        m.spec = spec;
        m.parameters = {1.0, -2.0, 0.5, 3.0, 0.0, 0.0};  // w0=(1,-2), w1=(0.5,3)
        std::vector<double> x = {0.3, -0.7};
        auto g = input_gradient(m, x, 0);
        // dCE_0/dx = (p0 - 1) w0 + p1 w1 = p1 (w1 - w0)
        const double ratio0 = g[0] / (0.5 - 1.0);
        const double ratio1 = g[1] / (3.0 - (-2.0));
        CHECK(ratio0 == doctest::Approx(ratio1).epsilon(1e-10));
        CHECK(ratio0 > 0.0);
    }
    SUBCASE("matches finite differences over the input") {
        ModelSpec spec;
        spec.input_dim = 4;
        spec.hidden_widths = {6};
        spec.num_classes = 3;
        spec.activation = Activation::tanh_fn;
        auto m = random_model(spec, 99);
        std::vector<double> x = {0.2, -0.4, 0.9, 0.1};
        auto g = input_gradient(m, x, 1);
        const double h = 1e-5;
        for (int d = 0; d < 4; ++d) {
            auto ce = [&](double v) {
                auto xp = x;
                xp[static_cast<std::size_t>(d)] = v;
                return -std::log(forward(m, xp).probs[1]);
            };
            const double fd = (ce(x[static_cast<std::size_t>(d)] + h) - ce(x[static_cast<std::size_t>(d)] - h)) / (2 * h);
            const double denom = std::max({std::abs(fd), std::abs(g[static_cast<std::size_t>(d)]), 1e-8});
            CHECK(std::abs(fd - g[static_cast<std::size_t>(d)]) / denom < 1e-4);
        }
    }
}

TEST_CASE("training separable blobs reaches perfect accuracy") {
    GenConfig gen;
    gen.num_classes = 2;
    gen.dims = 2;
    gen.n_per_class = 50;
    gen.class_separation = 8.0;
    gen.seed = 21;
    auto ds = generate_mixture(gen);

    ModelSpec spec;
    spec.input_dim = 2;
    spec.num_classes = 2;
    spec.hidden_widths = {8};
    TrainConfig tc;
    tc.epochs = 50;
    tc.batch_size = 16;
    tc.learning_rate = 0.2;
    tc.seed = 2;
    auto model = train(spec, ds, tc);
    CHECK(accuracy(model, ds) == 1.0);

    SUBCASE("training is deterministic") {
        auto again = train(spec, ds, tc);
        CHECK(again.parameters == model.parameters);
        CHECK(again.provenance == model.provenance);
    }
    SUBCASE("zero epochs returns the initialization") {
        TrainConfig zero = tc;
        zero.epochs = 0;
        auto untouched = train(spec, ds, zero);
        CHECK(untouched.parameters == init_model(spec, tc.seed).parameters);
    }
    SUBCASE("adam also converges") {
        TrainConfig ac = tc;
        ac.optimizer = Optimizer::adam;
        ac.learning_rate = 0.01;
        auto am = train(spec, ds, ac);
        CHECK(accuracy(am, ds) > 0.99);
    }
}

TEST_CASE("train rejects oversized batch and bad labels") {
    auto ds = random_batch_data(10, 2, 2, 1);
    ModelSpec spec;
    spec.input_dim = 2;
    spec.num_classes = 2;
    TrainConfig tc;
    tc.batch_size = 11;
    CHECK_THROWS_AS(train(spec, ds, tc), ContractViolation);

    tc.batch_size = 4;
    auto bad = ds;
    bad.labels[3] = 5;
    CHECK_THROWS_AS(train(spec, bad, tc), ContractViolation);
}

TEST_CASE("diverging training names the epoch") {
    auto ds = random_batch_data(8, 2, 2, 3);
    ModelSpec spec;
    spec.input_dim = 2;
    spec.num_classes = 2;
    spec.hidden_widths = {4};
    TrainConfig tc;
    tc.epochs = 50;
    tc.batch_size = 8;
    tc.learning_rate = 1e12;  // guaranteed blow-up
    tc.seed = 1;
    CHECK_THROWS_AS(train(spec, ds, tc), DivergedTraining);
}

TEST_CASE("fine_tune honors lr=0 and the patience counter") {
    GenConfig gen;
    gen.num_classes = 2;
    gen.dims = 2;
    gen.n_per_class = 30;
    gen.class_separation = 6.0;
    gen.seed = 31;
    auto ds = generate_mixture(gen);
    ModelSpec spec;
    spec.input_dim = 2;
    spec.num_classes = 2;
    TrainConfig tc;
    tc.epochs = 20;
    tc.batch_size = 10;
    tc.learning_rate = 0.1;
    tc.seed = 3;
    auto model = train(spec, ds, tc);

    SUBCASE("lr = 0 returns identical parameters after exactly patience epochs") {
        auto ft = fine_tune(model, ds, 0.0, 3);
        CHECK(ft.model.parameters == model.parameters);
        CHECK(ft.epochs_run == 3);  // loss never improves, so patience bounds the run
    }
    SUBCASE("small-lr fine-tune on the training set drifts little") {
        auto ft = fine_tune(model, ds, 0.005, 5);
        double max_drift = 0.0;
        for (int i = 0; i < ds.size(); ++i)
            max_drift = std::max(
                max_drift, sym_kl(forward(model, ds.row(i)), forward(ft.model, ds.row(i))));
        CHECK(max_drift < 0.5);  // regression bound, frozen from a reference run
    }
}

TEST_CASE("checkpoint save/load round trip is bit-exact") {
    ModelSpec spec;
    spec.input_dim = 5;
    spec.hidden_widths = {7, 3};
    spec.num_classes = 4;
    spec.activation = Activation::tanh_fn;
    auto m = random_model(spec, 1234);
    m.provenance.dataset_fingerprint = 0xdeadbeefULL;
    m.provenance.config_fingerprint = 42;

    auto path = std::filesystem::temp_directory_path() / "protoscope_nn_test" / "model.ckpt";
    save_checkpoint(m, path);
    auto loaded = load_checkpoint(path);
    CHECK(loaded.spec == m.spec);
    CHECK(loaded.parameters == m.parameters);
    CHECK(loaded.provenance == m.provenance);
}
