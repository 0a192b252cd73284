#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "selfonn/tensor.hpp"

namespace selfonn {

enum class Activation { tanh, identity };
enum class Pool { sum };

[[nodiscard]] std::string_view to_string(Activation a);
[[nodiscard]] Activation parse_activation(std::string_view name);

/// A nodal function psi(y, w) with its two partial derivatives.
struct NodalOperator {
    using Fn = std::function<double(double input, double weight)>;
    std::string name;
    Fn value;
    Fn d_input;
    Fn d_weight;
};

/// Registry of nodal operators. The builtin library carries multiply,
/// sine (sin(w*y)) and expm1 (exp(w*y) - 1); other libraries may extend it.
class OperatorLibrary {
  public:
    [[nodiscard]] static const OperatorLibrary& builtin();

    /// Rejects duplicate names and operators missing a derivative.
    void add(NodalOperator op);
    [[nodiscard]] bool contains(std::string_view name) const;
    [[nodiscard]] const NodalOperator& nodal(std::string_view name) const;
    [[nodiscard]] std::vector<std::string> names() const;

  private:
    std::map<std::string, NodalOperator, std::less<>> ops_;
};

/// (nodal, pool, activation) triplet of an operational layer.
struct OperatorSet {
    std::string nodal = "multiply";
    Pool pool = Pool::sum;
    Activation activation = Activation::tanh;

    /// Parses "nodal[,pool[,activation]]", e.g. "sine,sum,tanh".
    [[nodiscard]] static OperatorSet parse(std::string_view text, const OperatorLibrary& library = OperatorLibrary::builtin());
    [[nodiscard]] std::string str() const;

    friend bool operator==(const OperatorSet&, const OperatorSet&) = default;
};

/// Weight bank of a layer of generative neurons, laid out
/// (out_neurons, order, in_neurons, k_y, k_x), plus one bias per neuron.
/// A convolutional layer is the order-1 case with the same layout.
struct LayerParams {
    std::size_t out_neurons = 0;
    std::size_t in_neurons = 0;
    KernelSize kernel{};
    std::size_t order = 1;
    double center = 0.0;
    std::vector<double> weights;
    std::vector<double> bias;

    LayerParams() = default;
    LayerParams(std::size_t out, std::size_t in, KernelSize kernel, std::size_t order = 1);

    [[nodiscard]] std::size_t slice_size() const noexcept { return in_neurons * kernel.area(); }
    [[nodiscard]] std::size_t neuron_size() const noexcept { return order * slice_size(); }
    [[nodiscard]] std::size_t param_count() const noexcept { return weights.size() + bias.size(); }

    [[nodiscard]] std::span<const double> neuron(std::size_t o) const;
    [[nodiscard]] std::span<const double> slice(std::size_t o, std::size_t q) const;
    [[nodiscard]] std::span<double> slice(std::size_t o, std::size_t q);
    [[nodiscard]] double& weight(std::size_t o, std::size_t q, std::size_t i, std::size_t u, std::size_t v);
};

using ConvLayerParams = LayerParams;
using GenerativeLayerParams = LayerParams;

struct LayerGradients {
    std::vector<double> weights;
    std::vector<double> bias;
    Tensor input;  // empty when the input gradient was not requested
};

/// Counts generative-layer inputs found outside [a - 1 - 1e-6, a + 1 + 1e-6].
struct RangeDiagnostics {
    std::size_t out_of_range = 0;
    double worst = 0.0;
};

// Convolutional neuron. Cross-correlation with zero padding, unit stride.
[[nodiscard]] Tensor conv_forward(const Tensor& input, const ConvLayerParams& params);
[[nodiscard]] LayerGradients conv_backward(const Tensor& input, const ConvLayerParams& params, const Tensor& upstream,
                                           bool want_input_grad = true);

// Generative neuron: sum over q of pool-sum((Y - a)^q * W^(q)) + bias.
// When `diagnostics` is null an out-of-range input is reported on stderr.
[[nodiscard]] Tensor generative_forward_naive(const Tensor& input, const GenerativeLayerParams& params,
                                              RangeDiagnostics* diagnostics = nullptr);
/// Stacks [Y, Y^2, ..., Y^Q] on the channel axis and runs one convolution.
[[nodiscard]] Tensor generative_forward_fast(const Tensor& input, const GenerativeLayerParams& params,
                                             RangeDiagnostics* diagnostics = nullptr);
[[nodiscard]] LayerGradients generative_backward(const Tensor& input, const GenerativeLayerParams& params,
                                                 const Tensor& upstream, bool want_input_grad = true);

// Operational neuron with a registered nodal operator and summation pool.
[[nodiscard]] Tensor operational_forward(const Tensor& input, const ConvLayerParams& params, const OperatorSet& ops,
                                         const OperatorLibrary& library = OperatorLibrary::builtin());
[[nodiscard]] LayerGradients operational_backward(const Tensor& input, const ConvLayerParams& params,
                                                  const OperatorSet& ops, const Tensor& upstream,
                                                  bool want_input_grad = true,
                                                  const OperatorLibrary& library = OperatorLibrary::builtin());

[[nodiscard]] Tensor tanh_activation(const Tensor& x);
/// `output` is the forward result tanh(x).
[[nodiscard]] Tensor tanh_backward(const Tensor& output, const Tensor& grad);

[[nodiscard]] Tensor activate(const Tensor& x, Activation activation);
[[nodiscard]] Tensor activation_backward(const Tensor& output, const Tensor& grad, Activation activation);

}  // namespace selfonn
