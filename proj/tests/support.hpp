#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "selfonn/layers.hpp"
#include "selfonn/random.hpp"
#include "selfonn/tensor.hpp"

namespace selfonn::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (double& v : t.data()) {
        v = rng.uniform(lo, hi);
    }
    return t;
}

inline LayerParams random_params(std::size_t out, std::size_t in, std::size_t k, std::size_t q, Rng& rng,
                                 double scale = 0.5) {
    LayerParams p(out, in, {k, k}, q);
    for (double& w : p.weights) {
        w = rng.uniform(-scale, scale);
    }
    for (double& b : p.bias) {
        b = rng.uniform(-scale, scale);
    }
    return p;
}

/// Sliding-window evaluation straight from the neuron definition, without
/// im2col: out = b + sum_q sum_i sum_(u,v) w(o,q,i,u,v) * (y - a)^(q+1),
/// zero outside the image.
inline Tensor direct_generative(const Tensor& input, const LayerParams& p,
                                const std::function<double(double, double)>& nodal = nullptr) {
    const Shape s = input.shape();
    Tensor out({s.batch, p.out_neurons, s.height, s.width});
    const auto ky = static_cast<long>(p.kernel.height);
    const auto kx = static_cast<long>(p.kernel.width);
    const long py = (ky - 1) / 2;
    const long px = (kx - 1) / 2;
    auto& params = const_cast<LayerParams&>(p);
    for (std::size_t n = 0; n < s.batch; ++n) {
        for (std::size_t o = 0; o < p.out_neurons; ++o) {
            for (std::size_t y = 0; y < s.height; ++y) {
                for (std::size_t x = 0; x < s.width; ++x) {
                    double acc = p.bias[o];
                    for (std::size_t q = 0; q < p.order; ++q) {
                        for (std::size_t i = 0; i < p.in_neurons; ++i) {
                            for (long u = 0; u < ky; ++u) {
                                for (long v = 0; v < kx; ++v) {
                                    const long yy = static_cast<long>(y) + u - py;
                                    const long xx = static_cast<long>(x) + v - px;
                                    double val = 0.0;
                                    if (yy >= 0 && xx >= 0 && yy < static_cast<long>(s.height) &&
                                        xx < static_cast<long>(s.width)) {
                                        val = input(n, i, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
                                    }
                                    const double w = params.weight(o, q, i, static_cast<std::size_t>(u),
                                                                   static_cast<std::size_t>(v));
                                    if (nodal) {
                                        acc += nodal(val, w);
                                    } else {
                                        acc += w * std::pow(val - p.center, static_cast<double>(q + 1));
                                    }
                                }
                            }
                        }
                    }
                    out(n, o, y, x) = acc;
                }
            }
        }
    }
    return out;
}

/// Largest |a - n| over the group, relative to the group's largest magnitude.
inline double normwise_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
        scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    }
    return scale == 0.0 ? diff : diff / scale;
}

/// Central differences of a scalar function of `values`, step h.
inline std::vector<double> central_differences(std::vector<double>& values, const std::function<double()>& f,
                                               double h = 1e-4) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + h;
        const double plus = f();
        values[i] = saved - h;
        const double minus = f();
        values[i] = saved;
        out[i] = (plus - minus) / (2.0 * h);
    }
    return out;
}

inline double half_sum_squares(const Tensor& t) {
    double acc = 0.0;
    for (double v : t.data()) {
        acc += v * v;
    }
    return 0.5 * acc;
}

}  // namespace selfonn::testing
