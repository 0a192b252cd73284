#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "selfonn/layers.hpp"
#include "selfonn/random.hpp"
#include "selfonn/tensor.hpp"

namespace selfonn {

enum class LayerKind { convolutional, generative, operational };

[[nodiscard]] std::string_view to_string(LayerKind kind);
[[nodiscard]] LayerKind parse_layer_kind(std::string_view name);

/// Two hidden layers and a single-neuron output layer, all k x k.
struct ArchitectureSpec {
    std::string name;
    LayerKind kind = LayerKind::convolutional;
    std::size_t hidden1 = 6;
    std::size_t hidden2 = 10;
    std::size_t order = 1;
    std::size_t kernel = 7;
    OperatorSet operators{};  // consulted for operational layers only

    void validate() const;
    friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

/// Named architectures: CNN-1, CNN-3, CNN-5, CNN-7, SelfONN-3, SelfONN-5,
/// SelfONN-7 and ONN (operational, sine nodal operator).
[[nodiscard]] ArchitectureSpec preset(std::string_view name);
[[nodiscard]] std::vector<std::string> preset_names();
/// Same kind and order with (2, 3) hidden neurons and a 3x3 kernel.
[[nodiscard]] ArchitectureSpec shrink(ArchitectureSpec spec);

struct Layer {
    LayerKind kind = LayerKind::convolutional;
    LayerParams params;
    OperatorSet operators{};

    [[nodiscard]] Activation activation() const noexcept { return operators.activation; }
};

class Network {
  public:
    /// Post-activation output of every layer from one forward pass.
    struct Trace {
        std::vector<Tensor> outputs;
    };

    Network(ArchitectureSpec spec, std::vector<Layer> layers);

    [[nodiscard]] const ArchitectureSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const std::vector<Layer>& layers() const noexcept { return layers_; }
    [[nodiscard]] std::vector<Layer>& layers() noexcept { return layers_; }

    [[nodiscard]] Tensor forward(const Tensor& input, RangeDiagnostics* diagnostics = nullptr) const;
    [[nodiscard]] Tensor forward(const Tensor& input, Trace& trace, RangeDiagnostics* diagnostics = nullptr) const;
    /// Gradients of every layer given dLoss/dOutput. The first layer's input
    /// gradient is computed only when `want_input_grad` is set.
    [[nodiscard]] std::vector<LayerGradients> backward(const Tensor& input, const Trace& trace,
                                                       const Tensor& output_grad, bool want_input_grad = false) const;

  private:
    ArchitectureSpec spec_;
    std::vector<Layer> layers_;
};

/// Weights uniform in [-b, b], b = 1/sqrt(C_in k^2 Q); biases zero.
[[nodiscard]] Network build_network(const ArchitectureSpec& spec, std::uint64_t seed);

[[nodiscard]] std::size_t count_params(const Network& net);
[[nodiscard]] std::size_t count_params(const ArchitectureSpec& spec);
/// Sum over layers of |Y_l| (C_in k^2 Q + 1).
[[nodiscard]] std::uint64_t count_macs(const Network& net, std::uint64_t input_pixels);
[[nodiscard]] std::uint64_t count_macs(const ArchitectureSpec& spec, std::uint64_t input_pixels);

/// Mean of squared residuals.
[[nodiscard]] double mse_loss(const Tensor& output, const Tensor& target);

struct LossAndGradients {
    double loss = 0.0;
    std::vector<LayerGradients> grads;
};
[[nodiscard]] LossAndGradients compute_gradients(const Network& net, const Tensor& input, const Tensor& target,
                                                 RangeDiagnostics* diagnostics = nullptr);

/// SGD with momentum: v <- mu v - lr g, p <- p + v.
class OptimizerState {
  public:
    OptimizerState(const Network& net, double learning_rate = 0.01, double momentum = 0.9);

    [[nodiscard]] double learning_rate() const noexcept { return learning_rate_; }
    [[nodiscard]] double momentum() const noexcept { return momentum_; }
    [[nodiscard]] const std::vector<std::vector<double>>& velocity() const noexcept { return velocity_; }

    void step(Network& net, const std::vector<LayerGradients>& grads);

  private:
    double learning_rate_;
    double momentum_;
    // Per layer: weights followed by bias, one buffer each.
    std::vector<std::vector<double>> velocity_;
};

class DivergenceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// One pass over the samples in shuffled minibatches. Returns the mean
/// minibatch loss; throws DivergenceError on a non-finite loss.
double train_epoch(Network& net, std::span<const Tensor> inputs, std::span<const Tensor> targets,
                   OptimizerState& opt, std::size_t batch_size, Rng& shuffle_rng,
                   RangeDiagnostics* diagnostics = nullptr);

struct GradCheckGroup {
    std::string name;
    std::size_t count = 0;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    [[nodiscard]] bool passed() const noexcept { return max_rel_error < tolerance; }
};

/// |a - n| / max(|a|, |n|, floor); the floor keeps vanishing gradients from
/// turning rounding noise into large ratios.
[[nodiscard]] double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Central differences of the MSE loss against backpropagation for every
/// parameter and every input element. Groups are the weights and biases of
/// each layer and the input; within a group the floor of relative_error is
/// the group's largest analytic gradient magnitude.
[[nodiscard]] GradCheckReport grad_check(const Network& net, const Tensor& input, const Tensor& target, double h,
                                         double tolerance);

// Checkpoints: little-endian binary, see README for the layout.
void save_checkpoint(const Network& net, std::ostream& out);
[[nodiscard]] Network load_checkpoint(std::istream& in);
void save_checkpoint(const Network& net, const std::filesystem::path& path);
[[nodiscard]] Network load_checkpoint(const std::filesystem::path& path);

}  // namespace selfonn
