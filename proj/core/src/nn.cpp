#include "protoscope/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "protoscope/error.hpp"
#include "protoscope/util.hpp"

namespace protoscope {

namespace {
constexpr double kProbClamp = 1e-12;
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh_fn;
    throw ContractViolation("unknown activation: " + s);
}

std::string to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer optimizer_from_string(const std::string& s) {
    if (s == "sgd") return Optimizer::sgd;
    if (s == "adam") return Optimizer::adam;
    throw ContractViolation("unknown optimizer: " + s);
}

int ModelSpec::layer_in(int l) const {
    return l == 0 ? input_dim : hidden_widths[static_cast<std::size_t>(l - 1)];
}

int ModelSpec::layer_out(int l) const {
    return l == num_layers() - 1 ? num_classes : hidden_widths[static_cast<std::size_t>(l)];
}

int ModelSpec::param_count() const {
    int total = 0;
    for (int l = 0; l < num_layers(); ++l) total += layer_in(l) * layer_out(l) + layer_out(l);
    return total;
}

int ModelSpec::weight_offset(int l) const {
    int off = 0;
    for (int k = 0; k < l; ++k) off += layer_in(k) * layer_out(k) + layer_out(k);
    return off;
}

int ModelSpec::bias_offset(int l) const { return weight_offset(l) + layer_in(l) * layer_out(l); }

void ModelSpec::validate() const {
    if (input_dim < 1) throw ContractViolation("input_dim must be positive");
    if (num_classes < 2) throw ContractViolation("num_classes must be >= 2");
    for (int w : hidden_widths)
        if (w < 1) throw ContractViolation("hidden widths must be positive");
}

void ModelCheckpoint::validate() const {
    spec.validate();
    if (static_cast<int>(parameters.size()) != spec.param_count())
        throw ContractViolation("parameter count does not match spec");
    for (double p : parameters)
        if (!std::isfinite(p)) throw ContractViolation("non-finite parameter");
}

int ProbVector::argmax() const {
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

double ProbVector::max() const { return *std::max_element(probs.begin(), probs.end()); }

void ProbVector::validate() const {
    double sum = 0.0;
    for (double p : probs) {
        if (p < 0.0 || p > 1.0) throw ContractViolation("probability out of [0,1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ContractViolation("probabilities do not sum to 1");
}

std::uint64_t TrainConfig::fingerprint() const {
    std::string repr = "epochs=" + std::to_string(epochs) + ";batch=" + std::to_string(batch_size) +
                       ";lr=" + format_double(learning_rate) + ";decay=" + format_double(lr_decay) +
                       ";opt=" + to_string(optimizer) + ";seed=" + std::to_string(seed);
    return fnv1a(repr);
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ContractViolation("epochs must be nonnegative");
    if (batch_size < 1) throw ContractViolation("batch_size must be positive");
    if (learning_rate < 0 || lr_decay < 0)
        throw ContractViolation("learning rate and decay must be nonnegative");
}

int Batch::size() const {
    return indices.empty() ? dataset->size() : static_cast<int>(indices.size());
}

int Batch::index(int k) const { return indices.empty() ? k : indices[static_cast<std::size_t>(k)]; }

// ---------------------------------------------------------------------------
// forward / backward

namespace {

void check_input(const ModelCheckpoint& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.spec.input_dim)
        throw ContractViolation("input dimension mismatch");
    for (double v : x)
        if (!std::isfinite(v)) throw ContractViolation("non-finite input");
}

double activate(Activation a, double z) {
    return a == Activation::relu ? (z > 0 ? z : 0.0) : std::tanh(z);
}

double activate_deriv(Activation a, double z) {
    if (a == Activation::relu) return z > 0 ? 1.0 : 0.0;
    double t = std::tanh(z);
    return 1.0 - t * t;
}

// Per-example forward pass keeping pre-activations for backprop.
struct ForwardTrace {
    std::vector<std::vector<double>> pre;   // z per layer
    std::vector<std::vector<double>> post;  // activations per layer (last = probs)
};

ForwardTrace run_forward(const ModelCheckpoint& model, std::span<const double> x) {
    const auto& spec = model.spec;
    ForwardTrace t;
    const int L = spec.num_layers();
    t.pre.resize(static_cast<std::size_t>(L));
    t.post.resize(static_cast<std::size_t>(L));
    const double* params = model.parameters.data();
    std::span<const double> in = x;
    for (int l = 0; l < L; ++l) {
        const int ni = spec.layer_in(l), no = spec.layer_out(l);
        const double* W = params + spec.weight_offset(l);
        const double* b = params + spec.bias_offset(l);
        auto& z = t.pre[static_cast<std::size_t>(l)];
        z.assign(static_cast<std::size_t>(no), 0.0);
        for (int o = 0; o < no; ++o) {
            double acc = b[o];
            const double* wrow = W + static_cast<std::size_t>(o) * ni;
            for (int i = 0; i < ni; ++i) acc += wrow[i] * in[static_cast<std::size_t>(i)];
            z[static_cast<std::size_t>(o)] = acc;
        }
        auto& a = t.post[static_cast<std::size_t>(l)];
        if (l == L - 1) {
            // softmax with max-logit subtraction
            double zmax = *std::max_element(z.begin(), z.end());
            a.resize(z.size());
            double sum = 0.0;
            for (std::size_t k = 0; k < z.size(); ++k) {
                a[k] = std::exp(z[k] - zmax);
                sum += a[k];
            }
            for (auto& v : a) v /= sum;
        } else {
            a.resize(z.size());
            for (std::size_t k = 0; k < z.size(); ++k) a[k] = activate(spec.activation, z[k]);
        }
        in = a;
    }
    return t;
}

// Backprop from softmax+cross-entropy toward `label`. Adds parameter
// gradients into grad (size param_count). When input_grad != nullptr the
// input-coordinate gradient is written there instead of touching grad.
void backprop(const ModelCheckpoint& model, std::span<const double> x, int label,
              const ForwardTrace& t, double* grad, double* input_grad = nullptr) {
    const auto& spec = model.spec;
    const int L = spec.num_layers();
    const double* params = model.parameters.data();

    std::vector<double> delta = t.post[static_cast<std::size_t>(L - 1)];
    delta[static_cast<std::size_t>(label)] -= 1.0;  // dCE/dlogits = p - onehot

    for (int l = L - 1; l >= 0; --l) {
        const int ni = spec.layer_in(l), no = spec.layer_out(l);
        std::span<const double> in =
            l == 0 ? x : std::span<const double>(t.post[static_cast<std::size_t>(l - 1)]);
        if (grad) {
            double* gW = grad + spec.weight_offset(l);
            double* gb = grad + spec.bias_offset(l);
            for (int o = 0; o < no; ++o) {
                const double d = delta[static_cast<std::size_t>(o)];
                double* grow = gW + static_cast<std::size_t>(o) * ni;
                for (int i = 0; i < ni; ++i) grow[i] += d * in[static_cast<std::size_t>(i)];
                gb[o] += d;
            }
        }
        if (l == 0 && input_grad == nullptr) break;
        // propagate to previous layer (or the input)
        const double* W = params + spec.weight_offset(l);
        std::vector<double> prev(static_cast<std::size_t>(ni), 0.0);
        for (int o = 0; o < no; ++o) {
            const double d = delta[static_cast<std::size_t>(o)];
            const double* wrow = W + static_cast<std::size_t>(o) * ni;
            for (int i = 0; i < ni; ++i) prev[static_cast<std::size_t>(i)] += d * wrow[i];
        }
        if (l == 0) {
            std::copy(prev.begin(), prev.end(), input_grad);
            break;
        }
        const auto& z = t.pre[static_cast<std::size_t>(l - 1)];
        for (int i = 0; i < ni; ++i)
            prev[static_cast<std::size_t>(i)] *= activate_deriv(spec.activation, z[static_cast<std::size_t>(i)]);
        delta = std::move(prev);
    }
}

double example_loss(const ForwardTrace& t, int label) {
    double p = t.post.back()[static_cast<std::size_t>(label)];
    return -std::log(std::clamp(p, kProbClamp, 1.0));
}

void check_batch(const ModelCheckpoint& model, const Batch& batch) {
    if (batch.dataset == nullptr || batch.size() == 0) throw ContractViolation("empty batch");
    if (batch.dataset->dim != model.spec.input_dim)
        throw ContractViolation("batch dimension mismatch");
    for (int k = 0; k < batch.size(); ++k) {
        int lbl = batch.dataset->labels[static_cast<std::size_t>(batch.index(k))];
        if (lbl < 0 || lbl >= model.spec.num_classes)
            throw ContractViolation("label out of range: " + std::to_string(lbl));
    }
}

}  // namespace

ProbVector forward(const ModelCheckpoint& model, std::span<const double> x) {
    check_input(model, x);
    auto t = run_forward(model, x);
    return ProbVector{std::move(t.post.back())};
}

std::vector<double> logits_of(const ModelCheckpoint& model, std::span<const double> x) {
    check_input(model, x);
    auto t = run_forward(model, x);
    return std::move(t.pre.back());
}

int predict(const ModelCheckpoint& model, std::span<const double> x) {
    return forward(model, x).argmax();
}

double accuracy(const ModelCheckpoint& model, const LabeledDataset& ds) {
    if (ds.size() == 0) throw ContractViolation("empty dataset");
    int correct = 0;
    for (int i = 0; i < ds.size(); ++i)
        if (predict(model, ds.row(i)) == ds.labels[static_cast<std::size_t>(i)]) ++correct;
    return static_cast<double>(correct) / ds.size();
}

std::pair<double, std::vector<double>> loss_and_gradients(const ModelCheckpoint& model,
                                                          const Batch& batch) {
    check_batch(model, batch);
    const int n = batch.size();
    std::vector<double> grad(static_cast<std::size_t>(model.spec.param_count()), 0.0);
    double loss = 0.0;
    for (int k = 0; k < n; ++k) {
        const int idx = batch.index(k);
        auto x = batch.dataset->row(idx);
        const int label = batch.dataset->labels[static_cast<std::size_t>(idx)];
        auto t = run_forward(model, x);
        loss += example_loss(t, label);
        backprop(model, x, label, t, grad.data());
    }
    loss /= n;
    for (auto& g : grad) g /= n;
    return {loss, std::move(grad)};
}

std::vector<std::vector<double>> per_example_gradients(const ModelCheckpoint& model,
                                                       const Batch& batch) {
    check_batch(model, batch);
    const int n = batch.size();
    std::vector<std::vector<double>> grads(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const int idx = batch.index(k);
        auto x = batch.dataset->row(idx);
        const int label = batch.dataset->labels[static_cast<std::size_t>(idx)];
        auto t = run_forward(model, x);
        auto& g = grads[static_cast<std::size_t>(k)];
        g.assign(static_cast<std::size_t>(model.spec.param_count()), 0.0);
        backprop(model, x, label, t, g.data());
    }
    return grads;
}

std::vector<double> input_gradient(const ModelCheckpoint& model, std::span<const double> x,
                                   int target_class) {
    check_input(model, x);
    if (target_class < 0 || target_class >= model.spec.num_classes)
        throw ContractViolation("target class out of range");
    auto t = run_forward(model, x);
    std::vector<double> ig(static_cast<std::size_t>(model.spec.input_dim), 0.0);
    backprop(model, x, target_class, t, nullptr, ig.data());
    return ig;
}

// ---------------------------------------------------------------------------
// training

ModelCheckpoint init_model(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    ModelCheckpoint m;
    m.spec = spec;
    m.parameters.assign(static_cast<std::size_t>(spec.param_count()), 0.0);
    m.provenance.seed = seed;
    RngStream rng(seed, 0x696e6974ULL);
    for (int l = 0; l < spec.num_layers(); ++l) {
        const int ni = spec.layer_in(l), no = spec.layer_out(l);
        const double bound = std::sqrt(6.0 / (ni + no));
        double* W = m.parameters.data() + spec.weight_offset(l);
        for (int k = 0; k < ni * no; ++k) W[k] = rng.uniform(-bound, bound);
        // biases start at zero
    }
    return m;
}

namespace {

struct AdamState {
    std::vector<double> m, v;
    int t = 0;
};

void apply_step(std::vector<double>& params, const std::vector<double>& grad, double lr,
                Optimizer opt, AdamState& adam) {
    if (opt == Optimizer::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
        return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (adam.m.empty()) {
        adam.m.assign(params.size(), 0.0);
        adam.v.assign(params.size(), 0.0);
    }
    ++adam.t;
    const double c1 = 1.0 - std::pow(b1, adam.t);
    const double c2 = 1.0 - std::pow(b2, adam.t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * grad[i];
        adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * grad[i] * grad[i];
        params[i] -= lr * (adam.m[i] / c1) / (std::sqrt(adam.v[i] / c2) + eps);
    }
}

}  // namespace

ModelCheckpoint train(const ModelSpec& spec, const LabeledDataset& dataset, const TrainConfig& cfg) {
    spec.validate();
    cfg.validate();
    if (dataset.size() == 0) throw ContractViolation("empty training set");
    if (cfg.batch_size > dataset.size())
        throw ContractViolation("batch_size exceeds dataset size");
    if (dataset.dim != spec.input_dim) throw ContractViolation("dataset dimension mismatch");
    for (int lbl : dataset.labels)
        if (lbl >= spec.num_classes) throw ContractViolation("label out of range for spec");

    ModelCheckpoint model = init_model(spec, cfg.seed);
    model.provenance.dataset_fingerprint = dataset.fingerprint();
    model.provenance.config_fingerprint = cfg.fingerprint();

    const int n = dataset.size();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle_rng(cfg.seed, 0x7368756666ULL);
    AdamState adam;
    Batch batch;
    batch.dataset = &dataset;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.substream(static_cast<std::uint64_t>(epoch)).shuffle(order);
        const double lr = cfg.learning_rate / (1.0 + cfg.lr_decay * epoch);
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int end = std::min(start + cfg.batch_size, n);
            batch.indices.assign(order.begin() + start, order.begin() + end);
            auto [loss, grad] = loss_and_gradients(model, batch);
            if (!std::isfinite(loss)) throw DivergedTraining("training loss diverged", epoch);
            apply_step(model.parameters, grad, lr, cfg.optimizer, adam);
        }
    }
    for (double p : model.parameters)
        if (!std::isfinite(p)) throw DivergedTraining("non-finite parameters", cfg.epochs - 1);
    return model;
}

FineTuneResult fine_tune(const ModelCheckpoint& model, const LabeledDataset& dataset, double lr,
                         int patience, int max_epochs, int batch_size) {
    if (lr < 0) throw ContractViolation("fine-tune lr must be nonnegative");
    if (patience < 1) throw ContractViolation("patience must be positive");
    if (dataset.size() == 0) throw ContractViolation("empty fine-tune set");

    FineTuneResult out;
    out.model = model;
    out.model.provenance.dataset_fingerprint = dataset.fingerprint();

    const int n = dataset.size();
    const int bs = std::min(batch_size, n);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle_rng(model.provenance.seed, 0x66696e65ULL);
    Batch full{&dataset, {}};
    Batch batch;
    batch.dataset = &dataset;

    double best_loss = loss_and_gradients(out.model, full).first;
    int bad_epochs = 0;
    for (int epoch = 0; epoch < max_epochs && bad_epochs < patience; ++epoch) {
        shuffle_rng.substream(static_cast<std::uint64_t>(epoch)).shuffle(order);
        for (int start = 0; start < n; start += bs) {
            const int end = std::min(start + bs, n);
            batch.indices.assign(order.begin() + start, order.begin() + end);
            auto [loss, grad] = loss_and_gradients(out.model, batch);
            if (!std::isfinite(loss)) throw DivergedTraining("fine-tune loss diverged", epoch);
            for (std::size_t i = 0; i < out.model.parameters.size(); ++i)
                out.model.parameters[i] -= lr * grad[i];
        }
        ++out.epochs_run;
        double epoch_loss = loss_and_gradients(out.model, full).first;
        if (epoch_loss < best_loss - 1e-12) {
            best_loss = epoch_loss;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// checkpoint serialization

namespace {

constexpr char kCheckpointMagic[4] = {'P', 'S', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& off) {
    if (off + sizeof(T) > in.size()) throw ParseError("truncated checkpoint", off);
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace

void save_checkpoint(const ModelCheckpoint& model, const std::filesystem::path& path) {
    model.validate();
    std::string out;
    out.append(kCheckpointMagic, 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::int32_t>(out, model.spec.input_dim);
    put<std::int32_t>(out, static_cast<std::int32_t>(model.spec.hidden_widths.size()));
    for (int w : model.spec.hidden_widths) put<std::int32_t>(out, w);
    put<std::int32_t>(out, model.spec.num_classes);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(model.spec.activation));
    put<std::uint64_t>(out, model.provenance.seed);
    put<std::uint64_t>(out, model.provenance.dataset_fingerprint);
    put<std::uint64_t>(out, model.provenance.config_fingerprint);
    put<std::uint64_t>(out, model.parameters.size());
    for (double p : model.parameters) put<double>(out, p);
    atomic_write(path, out);
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string in = read_file(path);
    std::size_t off = 0;
    if (in.size() < 8 || std::memcmp(in.data(), kCheckpointMagic, 4) != 0)
        throw ParseError("wrong magic in checkpoint", 0);
    off = 4;
    if (get<std::uint32_t>(in, off) != kCheckpointVersion)
        throw ParseError("unsupported checkpoint version", 4);
    ModelCheckpoint m;
    m.spec.input_dim = get<std::int32_t>(in, off);
    const int nh = get<std::int32_t>(in, off);
    m.spec.hidden_widths.resize(static_cast<std::size_t>(nh));
    for (int i = 0; i < nh; ++i) m.spec.hidden_widths[static_cast<std::size_t>(i)] = get<std::int32_t>(in, off);
    m.spec.num_classes = get<std::int32_t>(in, off);
    m.spec.activation = static_cast<Activation>(get<std::uint8_t>(in, off));
    m.provenance.seed = get<std::uint64_t>(in, off);
    m.provenance.dataset_fingerprint = get<std::uint64_t>(in, off);
    m.provenance.config_fingerprint = get<std::uint64_t>(in, off);
    const auto count = get<std::uint64_t>(in, off);
    if (count != static_cast<std::uint64_t>(m.spec.param_count()))
        throw ParseError("checkpoint parameter count mismatch", off - 8);
    m.parameters.resize(count);
    for (auto& p : m.parameters) p = get<double>(in, off);
    m.validate();
    return m;
}

}  // namespace protoscope
