#include "selfonn/restoration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace selfonn {

void NoiseSpec::validate() const {
    switch (kind) {
        case NoiseKind::awgn:
            if (std::isnan(snr_db)) {
                throw std::invalid_argument("AWGN snr_db must be a number");
            }
            break;
        case NoiseKind::impulse:
            if (!(p >= 0.0 && p <= 1.0)) {
                throw std::invalid_argument("impulse probability must lie in [0, 1]");
            }
            break;
        case NoiseKind::speckle:
            if (!(m > 0.0) || !std::isfinite(m)) {
                throw std::invalid_argument("speckle M must be positive and finite");
            }
            break;
    }
}

NoiseSpec NoiseSpec::parse(std::string_view text) {
    const auto colon = text.find(':');
    const std::string kind(text.substr(0, colon));
    NoiseSpec spec;
    if (kind == "awgn") {
        spec.kind = NoiseKind::awgn;
    } else if (kind == "impulse") {
        spec.kind = NoiseKind::impulse;
    } else if (kind == "speckle") {
        spec.kind = NoiseKind::speckle;
    } else {
        throw std::invalid_argument("unknown noise kind '" + kind + "' (expected awgn, impulse or speckle)");
    }
    if (colon != std::string_view::npos) {
        const std::string value(text.substr(colon + 1));
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != value.size()) {
            throw std::invalid_argument("bad noise parameter '" + value + "'");
        }
        switch (spec.kind) {
            case NoiseKind::awgn:
                spec.snr_db = v;
                break;
            case NoiseKind::impulse:
                spec.p = v;
                break;
            case NoiseKind::speckle:
                spec.m = v;
                break;
        }
    }
    spec.validate();
    return spec;
}

std::string NoiseSpec::str() const {
    std::ostringstream out;
    switch (kind) {
        case NoiseKind::awgn:
            out << "awgn:" << snr_db;
            break;
        case NoiseKind::impulse:
            out << "impulse:" << p;
            break;
        case NoiseKind::speckle:
            out << "speckle:" << m;
            break;
    }
    return out.str();
}

double variance(std::span<const double> values) {
    if (values.empty()) {
        return 0.0;
    }
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double acc = 0.0;
    for (double v : values) {
        acc += (v - mean) * (v - mean);
    }
    return acc / n;
}

Tensor corrupt_awgn(const Tensor& image, double snr_db, Rng& rng) {
    if (std::isinf(snr_db) && snr_db > 0.0) {
        return image;
    }
    const double var = variance(image.data());
    if (!(var > 0.0)) {
        throw std::invalid_argument("AWGN: image has zero variance, SNR is undefined");
    }
    const double sigma = std::sqrt(var * std::pow(10.0, -snr_db / 10.0));
    Tensor out = image;
    for (double& v : out.data()) {
        v += sigma * rng.normal();
    }
    out.require_finite("corrupt_awgn");
    return out;
}

Tensor corrupt_impulse(const Tensor& image, double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("impulse probability must lie in [0, 1]");
    }
    Tensor out = image;
    for (double& v : out.data()) {
        // Draw both variates for every pixel so the stream layout is independent of p.
        const double u = rng.uniform();
        const bool bright = rng.coin();
        if (u < p) {
            v = bright ? 1.0 : 0.0;
        }
    }
    return out;
}

Tensor corrupt_speckle(const Tensor& image, double m, Rng& rng) {
    if (!(m > 0.0) || !std::isfinite(m)) {
        throw std::invalid_argument("speckle M must be positive and finite");
    }
    Tensor out = image;
    for (double& v : out.data()) {
        v *= rng.gamma(m, 1.0 / m);
    }
    out.require_finite("corrupt_speckle");
    return out;
}

Tensor corrupt(const Tensor& image, const NoiseSpec& noise, Rng& rng) {
    noise.validate();
    switch (noise.kind) {
        case NoiseKind::awgn:
            return corrupt_awgn(image, noise.snr_db, rng);
        case NoiseKind::impulse:
            return corrupt_impulse(image, noise.p, rng);
        case NoiseKind::speckle:
            return corrupt_speckle(image, noise.m, rng);
    }
    throw std::logic_error("unhandled noise kind");
}

double psnr(const Tensor& reference, const Tensor& estimate, double peak) {
    if (reference.shape() != estimate.shape()) {
        throw std::invalid_argument("psnr: shape mismatch " + reference.shape().str() + " vs " +
                                    estimate.shape().str());
    }
    if (!(peak > 0.0)) {
        throw std::invalid_argument("psnr: peak must be positive");
    }
    if (reference.empty()) {
        throw std::invalid_argument("psnr: empty images");
    }
    // Neumaier-compensated sum of squared errors.
    double acc = 0.0;
    double carry = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double d = reference.data()[i] - estimate.data()[i];
        const double term = d * d;
        const double t = acc + term;
        carry += std::abs(acc) >= term ? (acc - t) + term : (term - t) + acc;
        acc = t;
    }
    const double mse = (acc + carry) / static_cast<double>(reference.size());
    if (mse == 0.0) {
        return kInfinitePsnr;
    }
    return 10.0 * std::log10(peak * peak / mse);
}

std::vector<std::size_t> FoldPlan::members(std::size_t fold) const {
    if (fold >= fold_count) {
        throw std::out_of_range("fold index out of range");
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] == fold) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> FoldPlan::complement(std::size_t fold) const {
    if (fold >= fold_count) {
        throw std::out_of_range("fold index out of range");
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] != fold) {
            out.push_back(i);
        }
    }
    return out;
}

FoldPlan make_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k == 0) {
        throw std::invalid_argument("make_folds: fold count must be positive");
    }
    if (k > n) {
        throw std::invalid_argument("make_folds: more folds (" + std::to_string(k) + ") than samples (" +
                                    std::to_string(n) + ")");
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(substream_seed(seed, 0xf01d));
    for (std::size_t i = n - 1; i > 0; --i) {
        std::swap(perm[i], perm[rng.below(i + 1)]);
    }
    FoldPlan plan{k, seed, std::vector<std::size_t>(n, 0)};
    // The first n % k folds take one extra sample.
    const std::size_t base = n / k;
    const std::size_t extra = n % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        for (std::size_t j = 0; j < size; ++j) {
            plan.assignments[perm[pos++]] = f;
        }
    }
    return plan;
}

Tensor normalize(const Tensor& image) {
    Tensor out = image;
    for (double& v : out.data()) {
        v = 2.0 * v - 1.0;
    }
    return out;
}

Tensor denormalize(const Tensor& image) {
    Tensor out = image;
    for (double& v : out.data()) {
        v = (v + 1.0) * 0.5;
    }
    return out;
}

}  // namespace selfonn
