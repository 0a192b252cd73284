#include "selfonn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace selfonn {

namespace {

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void check_odd(KernelSize kernel) {
    if (kernel.height == 0 || kernel.width == 0 || kernel.height % 2 == 0 || kernel.width % 2 == 0) {
        throw std::invalid_argument("kernel dimensions must be odd, got " + std::to_string(kernel.height) + "x" +
                                    std::to_string(kernel.width));
    }
}

}  // namespace

std::string Shape::str() const {
    std::ostringstream out;
    out << batch << 'x' << channels << 'x' << height << 'x' << width;
    return out.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), values_(shape.size(), fill) {
    if (!std::isfinite(fill)) {
        throw NumericError("tensor fill value is not finite");
    }
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), values_(std::move(values)) {
    if (values_.size() != shape_.size()) {
        throw std::invalid_argument("tensor data length " + std::to_string(values_.size()) + " does not match shape " +
                                    shape_.str());
    }
    require_finite("tensor construction");
}

std::span<const double> Tensor::sample_data(std::size_t n) const {
    if (n >= shape_.batch) {
        throw std::out_of_range("sample index out of range");
    }
    return {values_.data() + n * shape_.sample_size(), shape_.sample_size()};
}

std::span<double> Tensor::sample_data(std::size_t n) {
    if (n >= shape_.batch) {
        throw std::out_of_range("sample index out of range");
    }
    return {values_.data() + n * shape_.sample_size(), shape_.sample_size()};
}

Tensor Tensor::sample(std::size_t n) const {
    auto src = sample_data(n);
    return Tensor({1, shape_.channels, shape_.height, shape_.width}, std::vector<double>(src.begin(), src.end()));
}

void Tensor::require_finite(const char* context) const {
    if (!all_finite(values_)) {
        throw NumericError(std::string("non-finite value produced by ") + context);
    }
}

Tensor Tensor::stack(std::span<const Tensor> samples) {
    if (samples.empty()) {
        return {};
    }
    const Shape first = samples.front().shape();
    Shape out{0, first.channels, first.height, first.width};
    for (const auto& s : samples) {
        if (s.shape().channels != first.channels || s.shape().height != first.height ||
            s.shape().width != first.width) {
            throw std::invalid_argument("cannot stack tensors of differing sample shapes");
        }
        out.batch += s.shape().batch;
    }
    std::vector<double> values;
    values.reserve(out.size());
    for (const auto& s : samples) {
        values.insert(values.end(), s.values().begin(), s.values().end());
    }
    return Tensor(out, std::move(values));
}

PatchMatrix::PatchMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

PatchMatrix::PatchMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
        throw std::invalid_argument("patch matrix data length does not match its dimensions");
    }
}

std::vector<double> PatchMatrix::row_sums() const {
    std::vector<double> sums(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
        double acc = 0.0;
        for (double v : row(r)) {
            acc += v;
        }
        sums[r] = acc;
    }
    return sums;
}

std::size_t same_padding(KernelSize kernel) {
    check_odd(kernel);
    if (kernel.height != kernel.width) {
        throw std::invalid_argument("same padding needs a square kernel");
    }
    return (kernel.height - 1) / 2;
}

void im2col_into(std::span<const double> sample, std::size_t channels, std::size_t height, std::size_t width,
                 KernelSize kernel, std::span<double> patches) {
    const std::size_t kh = kernel.height;
    const std::size_t kw = kernel.width;
    const auto pad_y = static_cast<std::ptrdiff_t>((kh - 1) / 2);
    const auto pad_x = static_cast<std::ptrdiff_t>((kw - 1) / 2);
    const std::size_t cols = channels * kh * kw;
    const auto h = static_cast<std::ptrdiff_t>(height);
    const auto w = static_cast<std::ptrdiff_t>(width);

    for (std::ptrdiff_t oy = 0; oy < h; ++oy) {
        for (std::ptrdiff_t ox = 0; ox < w; ++ox) {
            double* dst = patches.data() + static_cast<std::size_t>(oy * w + ox) * cols;
            for (std::size_t c = 0; c < channels; ++c) {
                const double* plane = sample.data() + c * height * width;
                for (std::size_t u = 0; u < kh; ++u) {
                    const std::ptrdiff_t iy = oy + static_cast<std::ptrdiff_t>(u) - pad_y;
                    if (iy < 0 || iy >= h) {
                        std::fill_n(dst, kw, 0.0);
                        dst += kw;
                        continue;
                    }
                    const double* src = plane + iy * w;
                    for (std::size_t v = 0; v < kw; ++v) {
                        const std::ptrdiff_t ix = ox + static_cast<std::ptrdiff_t>(v) - pad_x;
                        *dst++ = (ix < 0 || ix >= w) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

void col2im_add(std::span<const double> patches, std::size_t channels, std::size_t height, std::size_t width,
                KernelSize kernel, std::span<double> sample) {
    const std::size_t kh = kernel.height;
    const std::size_t kw = kernel.width;
    const auto pad_y = static_cast<std::ptrdiff_t>((kh - 1) / 2);
    const auto pad_x = static_cast<std::ptrdiff_t>((kw - 1) / 2);
    const std::size_t cols = channels * kh * kw;
    const auto h = static_cast<std::ptrdiff_t>(height);
    const auto w = static_cast<std::ptrdiff_t>(width);

    for (std::ptrdiff_t oy = 0; oy < h; ++oy) {
        for (std::ptrdiff_t ox = 0; ox < w; ++ox) {
            const double* src = patches.data() + static_cast<std::size_t>(oy * w + ox) * cols;
            for (std::size_t c = 0; c < channels; ++c) {
                double* plane = sample.data() + c * height * width;
                for (std::size_t u = 0; u < kh; ++u) {
                    const std::ptrdiff_t iy = oy + static_cast<std::ptrdiff_t>(u) - pad_y;
                    if (iy < 0 || iy >= h) {
                        src += kw;
                        continue;
                    }
                    double* dst = plane + iy * w;
                    for (std::size_t v = 0; v < kw; ++v, ++src) {
                        const std::ptrdiff_t ix = ox + static_cast<std::ptrdiff_t>(v) - pad_x;
                        if (ix >= 0 && ix < w) {
                            dst[ix] += *src;
                        }
                    }
                }
            }
        }
    }
}

PatchMatrix im2col(const Tensor& input, KernelSize kernel, std::size_t pad) {
    check_odd(kernel);
    if (kernel.height != kernel.width || pad != (kernel.height - 1) / 2) {
        throw std::invalid_argument("im2col requires size-preserving padding (k-1)/2");
    }
    const Shape& s = input.shape();
    if (s.batch != 1) {
        throw std::invalid_argument("im2col expects a single-sample tensor, got " + s.str());
    }
    PatchMatrix patches(s.plane(), s.channels * kernel.area());
    im2col_into(input.data(), s.channels, s.height, s.width, kernel, patches.data());
    return patches;
}

Tensor col2im(const PatchMatrix& grad, std::size_t channels, std::size_t height, std::size_t width,
              KernelSize kernel, std::size_t pad) {
    check_odd(kernel);
    if (kernel.height != kernel.width || pad != (kernel.height - 1) / 2) {
        throw std::invalid_argument("col2im requires size-preserving padding (k-1)/2");
    }
    if (grad.rows() != height * width || grad.cols() != channels * kernel.area()) {
        throw std::invalid_argument("col2im: patch matrix is " + std::to_string(grad.rows()) + "x" +
                                    std::to_string(grad.cols()) + ", inconsistent with the requested shape");
    }
    Tensor out({1, channels, height, width});
    col2im_add(grad.data(), channels, height, width, kernel, out.data());
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("hadamard: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.data()[i] * b.data()[i];
    }
    return Tensor(a.shape(), std::move(out));
}

PatchMatrix hadamard(const PatchMatrix& a, const PatchMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("hadamard: patch matrix shape mismatch");
    }
    std::vector<double> out(a.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.data()[i] * b.data()[i];
    }
    if (!all_finite(out)) {
        throw NumericError("non-finite value produced by hadamard");
    }
    return PatchMatrix(a.rows(), a.cols(), std::move(out));
}

namespace {

std::vector<double> power_values(std::span<const double> a, int q, bool allow_zero) {
    if (q < 0) {
        throw std::invalid_argument("elementwise_pow: negative exponent");
    }
    if (q == 0 && !allow_zero) {
        throw std::invalid_argument("elementwise_pow: zero exponent not requested");
    }
    std::vector<double> out(a.size(), 1.0);
    if (q == 0) {
        return out;
    }
    std::copy(a.begin(), a.end(), out.begin());
    for (int k = 1; k < q; ++k) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] *= a[i];
        }
    }
    if (!all_finite(out)) {
        throw NumericError("non-finite value produced by elementwise_pow");
    }
    return out;
}

}  // namespace

Tensor elementwise_pow(const Tensor& a, int q, bool allow_zero) {
    return Tensor(a.shape(), power_values(a.data(), q, allow_zero));
}

PatchMatrix elementwise_pow(const PatchMatrix& a, int q, bool allow_zero) {
    return PatchMatrix(a.rows(), a.cols(), power_values(a.data(), q, allow_zero));
}

double inner_product(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("inner_product: length mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("max_abs_difference: shape mismatch");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    }
    return worst;
}

}  // namespace selfonn
