#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "selfonn/random.hpp"
#include "selfonn/tensor.hpp"

namespace selfonn {

enum class NoiseKind { awgn, impulse, speckle };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::awgn;
    double snr_db = -5.0;  // awgn
    double p = 0.4;        // impulse
    double m = 5.0;        // speckle shape; field variance is 1/M

    void validate() const;
    /// "awgn", "awgn:-5", "impulse:0.4", "speckle:5"
    [[nodiscard]] static NoiseSpec parse(std::string_view text);
    [[nodiscard]] std::string str() const;
};

/// Additive Gaussian noise with variance var(image) * 10^(-snr_db / 10).
/// The result is not clipped.
[[nodiscard]] Tensor corrupt_awgn(const Tensor& image, double snr_db, Rng& rng);
/// Each pixel independently replaced, with probability p, by 0 or 1.
[[nodiscard]] Tensor corrupt_impulse(const Tensor& image, double p, Rng& rng);
/// Multiplicative Gamma(M, 1/M) field.
[[nodiscard]] Tensor corrupt_speckle(const Tensor& image, double m, Rng& rng);
[[nodiscard]] Tensor corrupt(const Tensor& image, const NoiseSpec& noise, Rng& rng);

/// Population variance of all values.
[[nodiscard]] double variance(std::span<const double> values);

/// Returned by psnr for a zero-error estimate.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE) in dB; kInfinitePsnr when MSE is zero.
[[nodiscard]] double psnr(const Tensor& reference, const Tensor& estimate, double peak = 1.0);
[[nodiscard]] inline bool is_infinite_psnr(double db) noexcept { return db == kInfinitePsnr; }

/// Per-sample fold index from a seeded permutation split into k near-equal parts.
struct FoldPlan {
    std::size_t fold_count = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> assignments;

    /// Samples in fold f; these form the training split of fold f.
    [[nodiscard]] std::vector<std::size_t> members(std::size_t fold) const;
    /// Every sample outside fold f; the held-out split of fold f.
    [[nodiscard]] std::vector<std::size_t> complement(std::size_t fold) const;
};

[[nodiscard]] FoldPlan make_folds(std::size_t n, std::size_t k, std::uint64_t seed);

/// x -> 2x - 1 and back.
[[nodiscard]] Tensor normalize(const Tensor& image);
[[nodiscard]] Tensor denormalize(const Tensor& image);

}  // namespace selfonn
