#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace selfonn {

/// Raised when an operation would produce a NaN or infinity.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Shape {
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    [[nodiscard]] std::size_t size() const noexcept { return batch * channels * height * width; }
    [[nodiscard]] std::size_t plane() const noexcept { return height * width; }
    [[nodiscard]] std::size_t sample_size() const noexcept { return channels * height * width; }
    [[nodiscard]] std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense (batch, channels, height, width) array stored row-major.
///
/// Every value held by a tensor is finite; constructors and the elementwise
/// kernels below throw NumericError otherwise.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] bool empty() const noexcept { return values_.empty(); }

    [[nodiscard]] std::span<const double> data() const noexcept { return values_; }
    [[nodiscard]] std::span<double> data() noexcept { return values_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }

    [[nodiscard]] std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return ((n * shape_.channels + c) * shape_.height + y) * shape_.width + x;
    }
    [[nodiscard]] double operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return values_[index(n, c, y, x)];
    }
    [[nodiscard]] double& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
        return values_[index(n, c, y, x)];
    }

    /// Contiguous view of one sample (all channels).
    [[nodiscard]] std::span<const double> sample_data(std::size_t n) const;
    [[nodiscard]] std::span<double> sample_data(std::size_t n);
    /// Copy of sample n as a 1xCxHxW tensor.
    [[nodiscard]] Tensor sample(std::size_t n) const;

    /// Throws NumericError if any value is NaN or infinite.
    void require_finite(const char* context) const;

    [[nodiscard]] static Tensor stack(std::span<const Tensor> samples);

  private:
    Shape shape_{};
    std::vector<double> values_;
};

/// im2col matrix: one row per output position, one column per receptive-field
/// element. Columns are ordered channel-major, then kernel row, then kernel column.
class PatchMatrix {
  public:
    PatchMatrix() = default;
    PatchMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    PatchMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return values_; }
    [[nodiscard]] std::span<double> data() noexcept { return values_; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }

    [[nodiscard]] double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }
    [[nodiscard]] double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }

    /// Sum of each row; the summation pool of a neuron.
    [[nodiscard]] std::vector<double> row_sums() const;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

struct KernelSize {
    std::size_t height = 1;  // k_y
    std::size_t width = 1;   // k_x

    [[nodiscard]] std::size_t area() const noexcept { return height * width; }
    friend bool operator==(const KernelSize&, const KernelSize&) = default;
};

/// Padding that preserves spatial size for an odd kernel.
[[nodiscard]] std::size_t same_padding(KernelSize kernel);

/// Unrolls the zero-padded sliding windows of a single-sample tensor.
/// Unit stride; `pad` must equal (k-1)/2 in both directions so the row count
/// equals height*width. Even kernels are rejected.
[[nodiscard]] PatchMatrix im2col(const Tensor& input, KernelSize kernel, std::size_t pad);

/// Adjoint of im2col: scatter-adds every row back into its source window.
/// Returns a 1xCxHxW tensor.
[[nodiscard]] Tensor col2im(const PatchMatrix& grad, std::size_t channels, std::size_t height, std::size_t width,
                            KernelSize kernel, std::size_t pad);

// Raw-buffer forms used by the layer kernels. `sample` is C*H*W values and
// `patches` is (H*W) x (C*kh*kw) values, row-major.
void im2col_into(std::span<const double> sample, std::size_t channels, std::size_t height, std::size_t width,
                 KernelSize kernel, std::span<double> patches);
void col2im_add(std::span<const double> patches, std::size_t channels, std::size_t height, std::size_t width,
                KernelSize kernel, std::span<double> sample);

[[nodiscard]] Tensor hadamard(const Tensor& a, const Tensor& b);
[[nodiscard]] PatchMatrix hadamard(const PatchMatrix& a, const PatchMatrix& b);

/// Integer power by repeated multiplication. q = 0 yields all ones only when
/// `allow_zero` is set; negative q is always rejected.
[[nodiscard]] Tensor elementwise_pow(const Tensor& a, int q, bool allow_zero = false);
[[nodiscard]] PatchMatrix elementwise_pow(const PatchMatrix& a, int q, bool allow_zero = false);

[[nodiscard]] double inner_product(std::span<const double> a, std::span<const double> b);
[[nodiscard]] double max_abs_difference(const Tensor& a, const Tensor& b);

}  // namespace selfonn
