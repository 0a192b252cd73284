#include "selfonn/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace selfonn {

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::convolutional:
            return "convolutional";
        case LayerKind::generative:
            return "generative";
        case LayerKind::operational:
            return "operational";
    }
    return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
    if (name == "convolutional" || name == "conv") {
        return LayerKind::convolutional;
    }
    if (name == "generative") {
        return LayerKind::generative;
    }
    if (name == "operational") {
        return LayerKind::operational;
    }
    throw std::invalid_argument("unknown layer kind '" + std::string(name) + "'");
}

void ArchitectureSpec::validate() const {
    if (hidden1 == 0 || hidden2 == 0) {
        throw std::invalid_argument("hidden layer widths must be positive");
    }
    if (kernel == 0 || kernel % 2 == 0) {
        throw std::invalid_argument("kernel size must be odd");
    }
    if (order == 0) {
        throw std::invalid_argument("order must be at least 1");
    }
    if (kind != LayerKind::generative && order != 1) {
        throw std::invalid_argument("only generative layers take an order above 1");
    }
    if (kind == LayerKind::operational && !OperatorLibrary::builtin().contains(operators.nodal)) {
        throw std::invalid_argument("unregistered nodal operator '" + operators.nodal + "'");
    }
}

ArchitectureSpec preset(std::string_view name) {
    auto cnn = [&](std::size_t n1, std::size_t n2) {
        return ArchitectureSpec{std::string(name), LayerKind::convolutional, n1, n2, 1, 7, {}};
    };
    auto selfonn = [&](std::size_t q) {
        return ArchitectureSpec{std::string(name), LayerKind::generative, 6, 10, q, 7, {}};
    };
    if (name == "CNN-1") return cnn(6, 10);
    if (name == "CNN-3") return cnn(11, 18);
    if (name == "CNN-5") return cnn(14, 24);
    if (name == "CNN-7") return cnn(18, 27);
    if (name == "SelfONN-3") return selfonn(3);
    if (name == "SelfONN-5") return selfonn(5);
    if (name == "SelfONN-7") return selfonn(7);
    if (name == "ONN") {
        return ArchitectureSpec{std::string(name), LayerKind::operational, 6, 10, 1, 7, OperatorSet{"sine"}};
    }
    throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() {
    return {"CNN-1", "CNN-3", "CNN-5", "CNN-7", "SelfONN-3", "SelfONN-5", "SelfONN-7", "ONN"};
}

ArchitectureSpec shrink(ArchitectureSpec spec) {
    spec.hidden1 = 2;
    spec.hidden2 = 3;
    spec.kernel = 3;
    spec.name += "-shrunk";
    return spec;
}

// ---------------------------------------------------------------------------

Network::Network(ArchitectureSpec spec, std::vector<Layer> layers) : spec_(std::move(spec)), layers_(std::move(layers)) {
    for (std::size_t l = 1; l < layers_.size(); ++l) {
        if (layers_[l].params.in_neurons != layers_[l - 1].params.out_neurons) {
            throw std::invalid_argument("layer " + std::to_string(l) + " input width does not match its predecessor");
        }
    }
}

namespace {

Tensor layer_forward(const Layer& layer, const Tensor& input, RangeDiagnostics* diagnostics) {
    Tensor pre = layer.kind == LayerKind::operational ? operational_forward(input, layer.params, layer.operators)
                                                      : generative_forward_fast(input, layer.params, diagnostics);
    return activate(pre, layer.activation());
}

}  // namespace

Tensor Network::forward(const Tensor& input, RangeDiagnostics* diagnostics) const {
    Tensor x = input;
    for (const auto& layer : layers_) {
        x = layer_forward(layer, x, diagnostics);
    }
    return x;
}

Tensor Network::forward(const Tensor& input, Trace& trace, RangeDiagnostics* diagnostics) const {
    trace.outputs.clear();
    trace.outputs.reserve(layers_.size());
    const Tensor* x = &input;
    for (const auto& layer : layers_) {
        trace.outputs.push_back(layer_forward(layer, *x, diagnostics));
        x = &trace.outputs.back();
    }
    return trace.outputs.back();
}

std::vector<LayerGradients> Network::backward(const Tensor& input, const Trace& trace, const Tensor& output_grad,
                                              bool want_input_grad) const {
    if (trace.outputs.size() != layers_.size()) {
        throw std::invalid_argument("trace does not belong to this network");
    }
    std::vector<LayerGradients> grads(layers_.size());
    Tensor upstream = output_grad;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const Layer& layer = layers_[l];
        const Tensor& layer_input = l == 0 ? input : trace.outputs[l - 1];
        const Tensor pre_grad = activation_backward(trace.outputs[l], upstream, layer.activation());
        const bool need_input = l > 0 || want_input_grad;
        grads[l] = layer.kind == LayerKind::operational
                       ? operational_backward(layer_input, layer.params, layer.operators, pre_grad, need_input)
                       : generative_backward(layer_input, layer.params, pre_grad, need_input);
        if (l > 0) {
            upstream = grads[l].input;
        }
    }
    return grads;
}

Network build_network(const ArchitectureSpec& spec, std::uint64_t seed) {
    spec.validate();
    const KernelSize kernel{spec.kernel, spec.kernel};
    const std::size_t widths[] = {1, spec.hidden1, spec.hidden2, 1};
    Rng rng(seed);
    std::vector<Layer> layers;
    for (std::size_t l = 0; l < 3; ++l) {
        Layer layer;
        layer.kind = spec.kind;
        layer.params = LayerParams(widths[l + 1], widths[l], kernel, spec.order);
        if (spec.kind == LayerKind::operational) {
            layer.operators = spec.operators;
        }
        const double fan_in = static_cast<double>(widths[l] * kernel.area() * spec.order);
        const double bound = 1.0 / std::sqrt(fan_in);
        for (double& w : layer.params.weights) {
            w = rng.uniform(-bound, bound);
        }
        layers.push_back(std::move(layer));
    }
    return Network(spec, std::move(layers));
}

std::size_t count_params(const Network& net) {
    std::size_t total = 0;
    for (const auto& layer : net.layers()) {
        total += layer.params.param_count();
    }
    return total;
}

std::size_t count_params(const ArchitectureSpec& spec) {
    const std::size_t k2 = spec.kernel * spec.kernel;
    const std::size_t widths[] = {1, spec.hidden1, spec.hidden2, 1};
    std::size_t total = 0;
    for (std::size_t l = 0; l < 3; ++l) {
        total += widths[l + 1] * (spec.order * widths[l] * k2 + 1);
    }
    return total;
}

std::uint64_t count_macs(const Network& net, std::uint64_t input_pixels) {
    if (input_pixels == 0) {
        throw std::invalid_argument("count_macs: pixel count must be positive");
    }
    std::uint64_t total = 0;
    for (const auto& layer : net.layers()) {
        const auto& p = layer.params;
        total += input_pixels * p.out_neurons * (p.in_neurons * p.kernel.area() * p.order + 1);
    }
    return total;
}

std::uint64_t count_macs(const ArchitectureSpec& spec, std::uint64_t input_pixels) {
    if (input_pixels == 0) {
        throw std::invalid_argument("count_macs: pixel count must be positive");
    }
    // Per pixel, MACs equal the learnable parameter count for this layout.
    return input_pixels * count_params(spec);
}

// ---------------------------------------------------------------------------

double mse_loss(const Tensor& output, const Tensor& target) {
    if (output.shape() != target.shape()) {
        throw std::invalid_argument("mse_loss: shape mismatch " + output.shape().str() + " vs " +
                                    target.shape().str());
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < output.size(); ++i) {
        const double r = output.data()[i] - target.data()[i];
        acc += r * r;
    }
    return acc / static_cast<double>(output.size());
}

LossAndGradients compute_gradients(const Network& net, const Tensor& input, const Tensor& target,
                                   RangeDiagnostics* diagnostics) {
    Network::Trace trace;
    const Tensor output = net.forward(input, trace, diagnostics);
    LossAndGradients result;
    result.loss = mse_loss(output, target);
    if (!std::isfinite(result.loss)) {
        throw DivergenceError("non-finite training loss");
    }
    std::vector<double> grad(output.size());
    const double scale = 2.0 / static_cast<double>(output.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        grad[i] = scale * (output.data()[i] - target.data()[i]);
    }
    result.grads = net.backward(input, trace, Tensor(output.shape(), std::move(grad)));
    return result;
}

OptimizerState::OptimizerState(const Network& net, double learning_rate, double momentum)
    : learning_rate_(learning_rate), momentum_(momentum) {
    if (!(learning_rate >= 0.0) || !(momentum >= 0.0) || momentum >= 1.0) {
        throw std::invalid_argument("optimizer needs learning_rate >= 0 and 0 <= momentum < 1");
    }
    for (const auto& layer : net.layers()) {
        velocity_.emplace_back(layer.params.weights.size(), 0.0);
        velocity_.emplace_back(layer.params.bias.size(), 0.0);
    }
}

void OptimizerState::step(Network& net, const std::vector<LayerGradients>& grads) {
    auto& layers = net.layers();
    if (grads.size() != layers.size() || velocity_.size() != 2 * layers.size()) {
        throw std::invalid_argument("optimizer step: gradients do not match the network");
    }
    auto update = [&](std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& vel) {
        if (param.size() != grad.size() || param.size() != vel.size()) {
            throw std::invalid_argument("optimizer step: parameter size mismatch");
        }
        for (std::size_t i = 0; i < param.size(); ++i) {
            vel[i] = momentum_ * vel[i] - learning_rate_ * grad[i];
            param[i] += vel[i];
        }
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
        update(layers[l].params.weights, grads[l].weights, velocity_[2 * l]);
        update(layers[l].params.bias, grads[l].bias, velocity_[2 * l + 1]);
    }
}

double train_epoch(Network& net, std::span<const Tensor> inputs, std::span<const Tensor> targets,
                   OptimizerState& opt, std::size_t batch_size, Rng& shuffle_rng, RangeDiagnostics* diagnostics) {
    if (inputs.size() != targets.size()) {
        throw std::invalid_argument("train_epoch: input and target counts differ");
    }
    if (batch_size == 0) {
        throw std::invalid_argument("train_epoch: batch size must be positive");
    }
    if (inputs.empty()) {
        return 0.0;
    }
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size() - 1; i > 0; --i) {
        std::swap(order[i], order[shuffle_rng.below(i + 1)]);
    }

    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::vector<Tensor> batch_in;
    std::vector<Tensor> batch_tg;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t stop = std::min(order.size(), start + batch_size);
        batch_in.clear();
        batch_tg.clear();
        for (std::size_t i = start; i < stop; ++i) {
            batch_in.push_back(inputs[order[i]]);
            batch_tg.push_back(targets[order[i]]);
        }
        LossAndGradients result;
        try {
            result = compute_gradients(net, Tensor::stack(batch_in), Tensor::stack(batch_tg), diagnostics);
        } catch (const NumericError& e) {
            throw DivergenceError(std::string("training diverged: ") + e.what());
        }
        opt.step(net, result.grads);
        loss_sum += result.loss;
        ++batches;
    }
    return loss_sum / static_cast<double>(batches);
}

// ---------------------------------------------------------------------------

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const Network& net, const Tensor& input, const Tensor& target, double h,
                           double tolerance) {
    if (!(h > 0.0)) {
        throw std::invalid_argument("grad_check: step h must be positive");
    }
    Network::Trace trace;
    const Tensor output = net.forward(input, trace);
    std::vector<double> out_grad(output.size());
    const double scale = 2.0 / static_cast<double>(output.size());
    for (std::size_t i = 0; i < out_grad.size(); ++i) {
        out_grad[i] = scale * (output.data()[i] - target.data()[i]);
    }
    const auto analytic = net.backward(input, trace, Tensor(output.shape(), std::move(out_grad)), true);

    GradCheckReport report;
    report.tolerance = tolerance;
    Network probe = net;
    auto loss_at = [&](const Tensor& x) { return mse_loss(probe.forward(x), target); };

    // Each group is scored against its own largest gradient, so components
    // many orders below that scale are not judged on finite-difference
    // truncation error alone.
    auto score = [&](std::string name, const std::vector<double>& analytic_grads, const std::vector<double>& numeric) {
        GradCheckGroup group{std::move(name), numeric.size(), 0.0};
        double scale = 0.0;
        for (double a : analytic_grads) {
            scale = std::max(scale, std::abs(a));
        }
        scale = std::max(scale, 1e-300);
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            group.max_rel_error = std::max(group.max_rel_error, relative_error(analytic_grads[i], numeric[i], scale));
        }
        report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
        report.groups.push_back(std::move(group));
    };

    auto check_array = [&](std::string name, std::vector<double>& values, const std::vector<double>& grads) {
        std::vector<double> numeric(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double plus = loss_at(input);
            values[i] = saved - h;
            const double minus = loss_at(input);
            values[i] = saved;
            numeric[i] = (plus - minus) / (2.0 * h);
        }
        score(std::move(name), grads, numeric);
    };

    for (std::size_t l = 0; l < probe.layers().size(); ++l) {
        auto& params = probe.layers()[l].params;
        check_array("layer" + std::to_string(l + 1) + ".weights", params.weights, analytic[l].weights);
        check_array("layer" + std::to_string(l + 1) + ".bias", params.bias, analytic[l].bias);
    }

    Tensor x = input;
    std::vector<double> numeric(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x.data()[i];
        x.data()[i] = saved + h;
        const double plus = loss_at(x);
        x.data()[i] = saved - h;
        const double minus = loss_at(x);
        x.data()[i] = saved;
        numeric[i] = (plus - minus) / (2.0 * h);
    }
    score("input", analytic[0].input.values(), numeric);
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'S', 'O', 'N', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) {
        b[i] = static_cast<unsigned char>(v >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<unsigned char>(bits >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error("checkpoint truncated");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    }
    return v;
}

double get_f64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
        throw std::runtime_error("checkpoint truncated");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    }
    return std::bit_cast<double>(bits);
}

std::string get_string(std::istream& in) {
    const std::uint32_t n = get_u32(in);
    if (n > 4096) {
        throw std::runtime_error("checkpoint string field too long");
    }
    std::string s(n, '\0');
    if (!in.read(s.data(), n)) {
        throw std::runtime_error("checkpoint truncated");
    }
    return s;
}

constexpr std::uint32_t kind_code(LayerKind kind) {
    switch (kind) {
        case LayerKind::convolutional:
            return 0;
        case LayerKind::generative:
            return 1;
        case LayerKind::operational:
            return 2;
    }
    return 0;
}

LayerKind kind_from_code(std::uint32_t code) {
    switch (code) {
        case 0:
            return LayerKind::convolutional;
        case 1:
            return LayerKind::generative;
        case 2:
            return LayerKind::operational;
        default:
            throw std::runtime_error("checkpoint has unknown layer kind " + std::to_string(code));
    }
}

}  // namespace

void save_checkpoint(const Network& net, std::ostream& out) {
    const auto& spec = net.spec();
    out.write(kMagic, sizeof kMagic);
    put_u32(out, kVersion);
    put_string(out, spec.name);
    put_u32(out, kind_code(spec.kind));
    put_u32(out, static_cast<std::uint32_t>(spec.hidden1));
    put_u32(out, static_cast<std::uint32_t>(spec.hidden2));
    put_u32(out, static_cast<std::uint32_t>(spec.order));
    put_u32(out, static_cast<std::uint32_t>(spec.kernel));
    put_string(out, spec.operators.nodal);
    put_u32(out, spec.operators.activation == Activation::tanh ? 0U : 1U);
    put_u32(out, static_cast<std::uint32_t>(net.layers().size()));
    for (const auto& layer : net.layers()) {
        const auto& p = layer.params;
        put_u32(out, kind_code(layer.kind));
        put_string(out, layer.operators.nodal);
        put_u32(out, layer.operators.activation == Activation::tanh ? 0U : 1U);
        put_u32(out, static_cast<std::uint32_t>(p.out_neurons));
        put_u32(out, static_cast<std::uint32_t>(p.in_neurons));
        put_u32(out, static_cast<std::uint32_t>(p.kernel.height));
        put_u32(out, static_cast<std::uint32_t>(p.kernel.width));
        put_u32(out, static_cast<std::uint32_t>(p.order));
        put_f64(out, p.center);
        for (double w : p.weights) {
            put_f64(out, w);
        }
        for (double b : p.bias) {
            put_f64(out, b);
        }
    }
    if (!out) {
        throw std::runtime_error("failed writing checkpoint");
    }
}

Network load_checkpoint(std::istream& in) {
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw std::runtime_error("not a checkpoint file (bad magic)");
    }
    if (const auto version = get_u32(in); version != kVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    ArchitectureSpec spec;
    spec.name = get_string(in);
    spec.kind = kind_from_code(get_u32(in));
    spec.hidden1 = get_u32(in);
    spec.hidden2 = get_u32(in);
    spec.order = get_u32(in);
    spec.kernel = get_u32(in);
    spec.operators.nodal = get_string(in);
    spec.operators.activation = get_u32(in) == 0 ? Activation::tanh : Activation::identity;
    const std::uint32_t layer_count = get_u32(in);
    if (layer_count == 0 || layer_count > 64) {
        throw std::runtime_error("checkpoint has implausible layer count");
    }
    std::vector<Layer> layers;
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        Layer layer;
        layer.kind = kind_from_code(get_u32(in));
        layer.operators.nodal = get_string(in);
        layer.operators.activation = get_u32(in) == 0 ? Activation::tanh : Activation::identity;
        const std::size_t out_n = get_u32(in);
        const std::size_t in_n = get_u32(in);
        const std::size_t kh = get_u32(in);
        const std::size_t kw = get_u32(in);
        const std::size_t order = get_u32(in);
        if (out_n == 0 || in_n == 0 || order == 0 || out_n * in_n * kh * kw * order > (std::size_t{1} << 28)) {
            throw std::runtime_error("checkpoint layer dimensions are invalid");
        }
        layer.params = LayerParams(out_n, in_n, KernelSize{kh, kw}, order);
        layer.params.center = get_f64(in);
        for (double& w : layer.params.weights) {
            w = get_f64(in);
        }
        for (double& b : layer.params.bias) {
            b = get_f64(in);
        }
        layers.push_back(std::move(layer));
    }
    return Network(spec, std::move(layers));
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    save_checkpoint(net, out);
}

Network load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint " + path.string());
    }
    return load_checkpoint(in);
}

}  // namespace selfonn
