#include "selfonn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "shift_kernels.hpp"

namespace selfonn {

namespace {

constexpr double kRangeSlack = 1e-6;

void check_input(const Tensor& input, const LayerParams& params, const char* who) {
    const Shape& s = input.shape();
    if (s.channels != params.in_neurons) {
        throw std::invalid_argument(std::string(who) + ": input has " + std::to_string(s.channels) +
                                    " channels, layer expects " + std::to_string(params.in_neurons));
    }
    if (params.kernel.height % 2 == 0 || params.kernel.width % 2 == 0 || params.kernel.height == 0 ||
        params.kernel.width == 0) {
        throw std::invalid_argument(std::string(who) + ": kernel dimensions must be odd");
    }
    if (params.order == 0) {
        throw std::invalid_argument(std::string(who) + ": order must be at least 1");
    }
    if (params.weights.size() != params.out_neurons * params.neuron_size() ||
        params.bias.size() != params.out_neurons) {
        throw std::invalid_argument(std::string(who) + ": parameter arrays do not match the layer dimensions");
    }
}

void check_upstream(const Tensor& input, const LayerParams& params, const Tensor& upstream, const char* who) {
    const Shape& s = input.shape();
    const Shape expected{s.batch, params.out_neurons, s.height, s.width};
    if (upstream.shape() != expected) {
        throw std::invalid_argument(std::string(who) + ": upstream gradient shape " + upstream.shape().str() +
                                    " does not match output shape " + expected.str());
    }
}

void check_range(const Tensor& input, double center, RangeDiagnostics* diagnostics) {
    std::size_t count = 0;
    double worst = 0.0;
    for (double v : input.data()) {
        const double dev = std::abs(v - center);
        if (dev > 1.0 + kRangeSlack) {
            ++count;
            worst = std::max(worst, dev);
        }
    }
    if (count == 0) {
        return;
    }
    if (diagnostics != nullptr) {
        diagnostics->out_of_range += count;
        diagnostics->worst = std::max(diagnostics->worst, worst);
    } else {
        std::cerr << "warning: " << count << " generative-layer inputs lie outside [a-1, a+1] (max |y-a| = " << worst
                  << "); the polynomial approximation may degrade\n";
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Activations and operator registry

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::tanh:
            return "tanh";
        case Activation::identity:
            return "identity";
    }
    return "unknown";
}

Activation parse_activation(std::string_view name) {
    if (name == "tanh") {
        return Activation::tanh;
    }
    if (name == "identity" || name == "linear") {
        return Activation::identity;
    }
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

const OperatorLibrary& OperatorLibrary::builtin() {
    static const OperatorLibrary library = [] {
        OperatorLibrary lib;
        lib.add({"multiply", [](double y, double w) { return w * y; }, [](double, double w) { return w; },
                 [](double y, double) { return y; }});
        lib.add({"sine", [](double y, double w) { return std::sin(w * y); },
                 [](double y, double w) { return w * std::cos(w * y); },
                 [](double y, double w) { return y * std::cos(w * y); }});
        lib.add({"expm1", [](double y, double w) { return std::expm1(w * y); },
                 [](double y, double w) { return w * std::exp(w * y); },
                 [](double y, double w) { return y * std::exp(w * y); }});
        return lib;
    }();
    return library;
}

void OperatorLibrary::add(NodalOperator op) {
    if (op.name.empty()) {
        throw std::invalid_argument("nodal operator needs a name");
    }
    if (!op.value || !op.d_input || !op.d_weight) {
        throw std::invalid_argument("nodal operator '" + op.name + "' must provide a value and both derivatives");
    }
    if (ops_.contains(op.name)) {
        throw std::invalid_argument("nodal operator '" + op.name + "' is already registered");
    }
    std::string key = op.name;
    ops_.emplace(std::move(key), std::move(op));
}

bool OperatorLibrary::contains(std::string_view name) const { return ops_.find(name) != ops_.end(); }

const NodalOperator& OperatorLibrary::nodal(std::string_view name) const {
    auto it = ops_.find(name);
    if (it == ops_.end()) {
        throw std::invalid_argument("unregistered nodal operator '" + std::string(name) + "'");
    }
    return it->second;
}

std::vector<std::string> OperatorLibrary::names() const {
    std::vector<std::string> out;
    for (const auto& [name, op] : ops_) {
        out.push_back(name);
    }
    return out;
}

OperatorSet OperatorSet::parse(std::string_view text, const OperatorLibrary& library) {
    std::vector<std::string> parts;
    std::string token;
    std::istringstream in{std::string(text)};
    while (std::getline(in, token, ',')) {
        token.erase(0, token.find_first_not_of(" \t"));
        token.erase(token.find_last_not_of(" \t") + 1);
        parts.push_back(token);
    }
    if (parts.empty() || parts.size() > 3) {
        throw std::invalid_argument("operator set must be 'nodal[,pool[,activation]]', got '" + std::string(text) + "'");
    }
    OperatorSet ops;
    if (!library.contains(parts[0])) {
        throw std::invalid_argument("unregistered nodal operator '" + parts[0] + "'");
    }
    ops.nodal = parts[0];
    if (parts.size() > 1 && parts[1] != "sum") {
        throw std::invalid_argument("unsupported pool operator '" + parts[1] + "' (only sum)");
    }
    if (parts.size() > 2) {
        ops.activation = parse_activation(parts[2]);
    }
    return ops;
}

std::string OperatorSet::str() const { return nodal + ",sum," + std::string(to_string(activation)); }

// ---------------------------------------------------------------------------
// Parameters

LayerParams::LayerParams(std::size_t out, std::size_t in, KernelSize k, std::size_t q)
    : out_neurons(out), in_neurons(in), kernel(k), order(q), weights(out * q * in * k.area(), 0.0), bias(out, 0.0) {
    if (q == 0) {
        throw std::invalid_argument("layer order must be at least 1");
    }
}

std::span<const double> LayerParams::neuron(std::size_t o) const {
    return {weights.data() + o * neuron_size(), neuron_size()};
}

std::span<const double> LayerParams::slice(std::size_t o, std::size_t q) const {
    return {weights.data() + o * neuron_size() + q * slice_size(), slice_size()};
}

std::span<double> LayerParams::slice(std::size_t o, std::size_t q) {
    return {weights.data() + o * neuron_size() + q * slice_size(), slice_size()};
}

double& LayerParams::weight(std::size_t o, std::size_t q, std::size_t i, std::size_t u, std::size_t v) {
    return weights[o * neuron_size() + q * slice_size() + (i * kernel.height + u) * kernel.width + v];
}

// ---------------------------------------------------------------------------
// Generative / convolutional layers

Tensor generative_forward_naive(const Tensor& input, const GenerativeLayerParams& params,
                                RangeDiagnostics* diagnostics) {
    check_input(input, params, "generative_forward_naive");
    check_range(input, params.center, diagnostics);
    const Shape& s = input.shape();
    const std::size_t pad = (params.kernel.height - 1) / 2;
    Tensor out({s.batch, params.out_neurons, s.height, s.width});

    for (std::size_t n = 0; n < s.batch; ++n) {
        Tensor shifted = input.sample(n);
        if (params.center != 0.0) {
            for (double& v : shifted.data()) {
                v -= params.center;
            }
        }
        const PatchMatrix patches = im2col(shifted, params.kernel, pad);
        for (std::size_t o = 0; o < params.out_neurons; ++o) {
            std::vector<double> acc(patches.rows(), 0.0);
            for (std::size_t q = 0; q < params.order; ++q) {
                const PatchMatrix powered = elementwise_pow(patches, static_cast<int>(q + 1));
                // Rows of the replicated weight matrix are copies of vec(W^(q)).
                PatchMatrix replicated(patches.rows(), patches.cols());
                const auto w = params.slice(o, q);
                for (std::size_t r = 0; r < replicated.rows(); ++r) {
                    std::copy(w.begin(), w.end(), replicated.row(r).begin());
                }
                const auto pooled = hadamard(powered, replicated).row_sums();
                for (std::size_t r = 0; r < acc.size(); ++r) {
                    acc[r] += pooled[r];
                }
            }
            for (std::size_t r = 0; r < acc.size(); ++r) {
                out(n, o, r / s.width, r % s.width) = acc[r] + params.bias[o];
            }
        }
    }
    out.require_finite("generative_forward_naive");
    return out;
}

namespace {

// Shifted convolution over the stacked channels [Y-a, (Y-a)^2, ...].
//
// Each sample's stacked channels live in a zero-padded (H+2p_y) x (W+2p_x)
// plane. Output (y, x) maps to flat index y*Wp + x and its window element
// (u, v) to flat index y*Wp + x + u*Wp + v, so every kernel offset is a
// contiguous shift of the whole plane. Flat positions with x >= W are scratch
// and never read back.
struct ShiftWorkspace {
    std::size_t channels = 0;  // order * in_neurons
    std::size_t hp = 0;
    std::size_t wp = 0;
    std::size_t span = 0;    // (H-1)*Wp + W
    std::size_t n = 0;       // span rounded up to the kernel tile
    std::size_t stride = 0;  // per-channel stride of `stacked`
    std::size_t lead = 0;    // p_y*Wp + p_x, flat offset of the window center
    std::vector<std::size_t> offsets;     // per tap
    std::vector<double> stacked;          // channels x stride
    std::vector<double> packed_weights;   // taps x out x channels
    std::vector<double> flat;             // out x n
    std::vector<double> padded_grad;      // out x (n + 2 lead)
    std::vector<double> flipped_weights;  // taps x channels x out, taps reversed
    std::vector<double> stacked_grad;     // channels x n
    std::vector<double> packed_grad;      // taps x out x channels
};

ShiftWorkspace& workspace() {
    thread_local ShiftWorkspace ws;
    return ws;
}

void prepare(ShiftWorkspace& ws, const LayerParams& params, const Shape& s) {
    const std::size_t py = (params.kernel.height - 1) / 2;
    const std::size_t px = (params.kernel.width - 1) / 2;
    ws.channels = params.order * s.channels;
    ws.hp = s.height + 2 * py;
    ws.wp = s.width + 2 * px;
    ws.span = (s.height - 1) * ws.wp + s.width;
    ws.n = (ws.span + detail::kShiftTile - 1) / detail::kShiftTile * detail::kShiftTile;
    ws.stride = ws.hp * ws.wp + (ws.n - ws.span);
    ws.lead = py * ws.wp + px;
    ws.stacked.assign(ws.channels * ws.stride, 0.0);

    const std::size_t taps = params.kernel.area();
    ws.offsets.resize(taps);
    for (std::size_t u = 0; u < params.kernel.height; ++u) {
        for (std::size_t v = 0; v < params.kernel.width; ++v) {
            ws.offsets[u * params.kernel.width + v] = u * ws.wp + v;
        }
    }
    ws.packed_weights.resize(taps * params.out_neurons * ws.channels);
    for (std::size_t o = 0; o < params.out_neurons; ++o) {
        const auto w = params.neuron(o);
        for (std::size_t j = 0; j < ws.channels; ++j) {
            for (std::size_t t = 0; t < taps; ++t) {
                ws.packed_weights[(t * params.out_neurons + o) * ws.channels + j] = w[j * taps + t];
            }
        }
    }
}

/// Writes the stacked powers of one sample into the padded interior.
void fill_stacked(ShiftWorkspace& ws, const LayerParams& params, const Shape& s, std::span<const double> sample) {
    const std::size_t py = (params.kernel.height - 1) / 2;
    const std::size_t px = (params.kernel.width - 1) / 2;
    for (std::size_t c = 0; c < s.channels; ++c) {
        for (std::size_t y = 0; y < s.height; ++y) {
            const double* src = sample.data() + (c * s.height + y) * s.width;
            double* base = ws.stacked.data() + c * ws.stride + (y + py) * ws.wp + px;
            for (std::size_t x = 0; x < s.width; ++x) {
                base[x] = src[x] - params.center;
            }
            for (std::size_t q = 1; q < params.order; ++q) {
                const double* prev = base + (q - 1) * s.channels * ws.stride;
                double* cur = base + q * s.channels * ws.stride;
                for (std::size_t x = 0; x < s.width; ++x) {
                    cur[x] = prev[x] * base[x];
                }
            }
        }
    }
}

}  // namespace

Tensor generative_forward_fast(const Tensor& input, const GenerativeLayerParams& params,
                               RangeDiagnostics* diagnostics) {
    check_input(input, params, "generative_forward_fast");
    if (params.order > 1 || params.center != 0.0) {
        check_range(input, params.center, diagnostics);
    }
    const Shape& s = input.shape();
    Tensor out({s.batch, params.out_neurons, s.height, s.width});
    if (s.size() == 0) {
        return out;
    }
    ShiftWorkspace& ws = workspace();
    prepare(ws, params, s);
    ws.flat.resize(params.out_neurons * ws.n);

    for (std::size_t b = 0; b < s.batch; ++b) {
        fill_stacked(ws, params, s, input.sample_data(b));
        std::fill(ws.flat.begin(), ws.flat.end(), 0.0);
        detail::correlate(ws.stacked.data(), ws.channels, ws.stride, ws.packed_weights.data(), params.out_neurons,
                          ws.offsets, ws.flat.data(), ws.n, ws.n);
        auto dst = out.sample_data(b);
        for (std::size_t o = 0; o < params.out_neurons; ++o) {
            for (std::size_t y = 0; y < s.height; ++y) {
                const double* src = ws.flat.data() + o * ws.n + y * ws.wp;
                double* row = dst.data() + (o * s.height + y) * s.width;
                for (std::size_t x = 0; x < s.width; ++x) {
                    row[x] = src[x] + params.bias[o];
                }
            }
        }
    }
    out.require_finite("generative_forward_fast");
    return out;
}

LayerGradients generative_backward(const Tensor& input, const GenerativeLayerParams& params, const Tensor& upstream,
                                   bool want_input_grad) {
    check_input(input, params, "generative_backward");
    check_upstream(input, params, upstream, "generative_backward");
    const Shape& s = input.shape();

    LayerGradients grads;
    grads.weights.assign(params.weights.size(), 0.0);
    grads.bias.assign(params.bias.size(), 0.0);
    if (want_input_grad) {
        grads.input = Tensor(s);
    }
    if (s.size() == 0) {
        return grads;
    }
    ShiftWorkspace& ws = workspace();
    prepare(ws, params, s);
    const std::size_t taps = params.kernel.area();
    const std::size_t py = (params.kernel.height - 1) / 2;
    const std::size_t px = (params.kernel.width - 1) / 2;
    const std::size_t out_n = params.out_neurons;
    // The upstream gradient sits `lead` positions into a plane padded by `lead`
    // on both sides, so the input gradient is a forward correlation of it with
    // the tap-reversed, transposed weights.
    const std::size_t g_stride = ws.n + 2 * ws.lead;
    ws.padded_grad.assign(out_n * g_stride, 0.0);
    const double* g = ws.padded_grad.data() + ws.lead;
    ws.packed_grad.assign(taps * out_n * ws.channels, 0.0);
    if (want_input_grad) {
        ws.stacked_grad.resize(ws.channels * ws.n);
        ws.flipped_weights.resize(taps * ws.channels * out_n);
        for (std::size_t t = 0; t < taps; ++t) {
            for (std::size_t o = 0; o < out_n; ++o) {
                for (std::size_t j = 0; j < ws.channels; ++j) {
                    ws.flipped_weights[((taps - 1 - t) * ws.channels + j) * out_n + o] =
                        ws.packed_weights[(t * out_n + o) * ws.channels + j];
                }
            }
        }
    }

    for (std::size_t b = 0; b < s.batch; ++b) {
        fill_stacked(ws, params, s, input.sample_data(b));
        const auto up = upstream.sample_data(b);
        for (std::size_t o = 0; o < out_n; ++o) {
            double acc = 0.0;
            for (std::size_t y = 0; y < s.height; ++y) {
                const double* src = up.data() + (o * s.height + y) * s.width;
                double* row = ws.padded_grad.data() + o * g_stride + ws.lead + y * ws.wp;
                for (std::size_t x = 0; x < s.width; ++x) {
                    row[x] = src[x];
                    acc += src[x];
                }
            }
            grads.bias[o] += acc;
        }
        // d psi / d W^(q) = (Y-a)^q, pooled against the upstream gradient.
        detail::weight_grad(g, g_stride, out_n, ws.stacked.data(), ws.channels, ws.stride, ws.offsets,
                            ws.packed_grad.data(), ws.n);
        if (!want_input_grad) {
            continue;
        }
        std::fill(ws.stacked_grad.begin(), ws.stacked_grad.end(), 0.0);
        detail::correlate(ws.padded_grad.data(), out_n, g_stride, ws.flipped_weights.data(), ws.channels,
                          ws.offsets, ws.stacked_grad.data(), ws.n, ws.n);
        // d psi / dY = sum_q q (Y-a)^(q-1) W^(q), chained through the stacked channels.
        auto dy = grads.input.sample_data(b);
        for (std::size_t c = 0; c < s.channels; ++c) {
            for (std::size_t y = 0; y < s.height; ++y) {
                const std::size_t padded = c * ws.stride + (y + py) * ws.wp + px;
                const std::size_t flat = c * ws.n + y * ws.wp;
                double* row = dy.data() + (c * s.height + y) * s.width;
                const double* d1 = ws.stacked_grad.data() + flat;
                for (std::size_t x = 0; x < s.width; ++x) {
                    row[x] = d1[x];
                }
                for (std::size_t q = 1; q < params.order; ++q) {
                    const double* lower = ws.stacked.data() + (q - 1) * s.channels * ws.stride + padded;
                    const double* dq = ws.stacked_grad.data() + q * s.channels * ws.n + flat;
                    const auto factor = static_cast<double>(q + 1);
                    for (std::size_t x = 0; x < s.width; ++x) {
                        row[x] += factor * lower[x] * dq[x];
                    }
                }
            }
        }
    }

    for (std::size_t o = 0; o < out_n; ++o) {
        double* w = grads.weights.data() + o * params.neuron_size();
        for (std::size_t j = 0; j < ws.channels; ++j) {
            for (std::size_t t = 0; t < taps; ++t) {
                w[j * taps + t] = ws.packed_grad[(t * out_n + o) * ws.channels + j];
            }
        }
    }
    if (want_input_grad) {
        grads.input.require_finite("generative_backward");
    }
    return grads;
}

Tensor conv_forward(const Tensor& input, const ConvLayerParams& params) {
    if (params.order != 1) {
        throw std::invalid_argument("conv_forward: convolutional parameters must have order 1");
    }
    return generative_forward_fast(input, params);
}

LayerGradients conv_backward(const Tensor& input, const ConvLayerParams& params, const Tensor& upstream,
                             bool want_input_grad) {
    if (params.order != 1) {
        throw std::invalid_argument("conv_backward: convolutional parameters must have order 1");
    }
    return generative_backward(input, params, upstream, want_input_grad);
}

// ---------------------------------------------------------------------------
// Operational layers

Tensor operational_forward(const Tensor& input, const ConvLayerParams& params, const OperatorSet& ops,
                           const OperatorLibrary& library) {
    check_input(input, params, "operational_forward");
    if (params.order != 1) {
        throw std::invalid_argument("operational_forward: operational parameters must have order 1");
    }
    const NodalOperator& nodal = library.nodal(ops.nodal);
    const Shape& s = input.shape();
    const std::size_t pad = (params.kernel.height - 1) / 2;
    Tensor out({s.batch, params.out_neurons, s.height, s.width});

    for (std::size_t n = 0; n < s.batch; ++n) {
        const PatchMatrix patches = im2col(input.sample(n), params.kernel, pad);
        auto dst = out.sample_data(n);
        for (std::size_t o = 0; o < params.out_neurons; ++o) {
            const auto w = params.neuron(o);
            for (std::size_t r = 0; r < patches.rows(); ++r) {
                const auto y = patches.row(r);
                double acc = 0.0;
                for (std::size_t j = 0; j < y.size(); ++j) {
                    acc += nodal.value(y[j], w[j]);
                }
                dst[o * patches.rows() + r] = acc + params.bias[o];
            }
        }
    }
    out.require_finite("operational_forward");
    return out;
}

LayerGradients operational_backward(const Tensor& input, const ConvLayerParams& params, const OperatorSet& ops,
                                    const Tensor& upstream, bool want_input_grad, const OperatorLibrary& library) {
    check_input(input, params, "operational_backward");
    check_upstream(input, params, upstream, "operational_backward");
    if (params.order != 1) {
        throw std::invalid_argument("operational_backward: operational parameters must have order 1");
    }
    const NodalOperator& nodal = library.nodal(ops.nodal);
    const Shape& s = input.shape();
    const std::size_t pad = (params.kernel.height - 1) / 2;

    LayerGradients grads;
    grads.weights.assign(params.weights.size(), 0.0);
    grads.bias.assign(params.bias.size(), 0.0);
    if (want_input_grad) {
        grads.input = Tensor(s);
    }

    for (std::size_t n = 0; n < s.batch; ++n) {
        const PatchMatrix patches = im2col(input.sample(n), params.kernel, pad);
        PatchMatrix patch_grad(patches.rows(), patches.cols());
        const auto g = upstream.sample_data(n);
        for (std::size_t o = 0; o < params.out_neurons; ++o) {
            const auto w = params.neuron(o);
            double* dw = grads.weights.data() + o * params.neuron_size();
            for (std::size_t r = 0; r < patches.rows(); ++r) {
                const double go = g[o * patches.rows() + r];
                grads.bias[o] += go;
                const auto y = patches.row(r);
                auto dp = patch_grad.row(r);
                for (std::size_t j = 0; j < y.size(); ++j) {
                    dw[j] += go * nodal.d_weight(y[j], w[j]);
                    if (want_input_grad) {
                        dp[j] += go * nodal.d_input(y[j], w[j]);
                    }
                }
            }
        }
        if (want_input_grad) {
            col2im_add(patch_grad.data(), s.channels, s.height, s.width, params.kernel,
                       grads.input.sample_data(n));
        }
    }
    if (want_input_grad) {
        grads.input.require_finite("operational_backward");
    }
    return grads;
}

Tensor tanh_activation(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::tanh(x.data()[i]);
    }
    return Tensor(x.shape(), std::move(out));
}

Tensor tanh_backward(const Tensor& output, const Tensor& grad) {
    if (output.shape() != grad.shape()) {
        throw std::invalid_argument("tanh_backward: shape mismatch");
    }
    std::vector<double> out(output.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double y = output.data()[i];
        out[i] = (1.0 - y * y) * grad.data()[i];
    }
    return Tensor(output.shape(), std::move(out));
}

Tensor activate(const Tensor& x, Activation activation) {
    return activation == Activation::tanh ? tanh_activation(x) : x;
}

Tensor activation_backward(const Tensor& output, const Tensor& grad, Activation activation) {
    return activation == Activation::tanh ? tanh_backward(output, grad) : grad;
}

}  // namespace selfonn
