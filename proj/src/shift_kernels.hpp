#pragma once

// Register-blocked kernels for the shifted convolution in layers.cpp.
//
// Planes are flat rows with a per-channel stride. Tap t reads its input at
// flat offset off[t] from the output position. Lengths passed as `n` must be
// multiples of kShiftTile, and inputs must stay readable up to
// n - 1 + max(off) in every channel.

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <span>

namespace selfonn::detail {

// Eight doubles; one AVX-512 register, or a pair on narrower targets.
using Lanes = double __attribute__((vector_size(64)));
inline constexpr std::size_t kLanes = 8;
inline constexpr std::size_t kShiftTile = 2 * kLanes;

inline Lanes load_lanes(const double* p) {
    Lanes v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store_lanes(double* p, Lanes v) { std::memcpy(p, &v, sizeof v); }

inline double sum_lanes(Lanes v) {
    double sum = 0.0;
    for (std::size_t l = 0; l < kLanes; ++l) {
        sum += v[l];
    }
    return sum;
}

template <std::size_t OB>
void correlate_block(const double* in, std::size_t in_ch, std::size_t in_stride, const double* w,
                     std::size_t out_ch, std::size_t o0, std::span<const std::size_t> off, double* out,
                     std::size_t out_stride, std::size_t n) {
    for (std::size_t p0 = 0; p0 < n; p0 += kShiftTile) {
        Lanes lo[OB];
        Lanes hi[OB];
        for (std::size_t o = 0; o < OB; ++o) {
            const double* dst = out + (o0 + o) * out_stride + p0;
            lo[o] = load_lanes(dst);
            hi[o] = load_lanes(dst + kLanes);
        }
        for (std::size_t t = 0; t < off.size(); ++t) {
            const double* wt = w + (t * out_ch + o0) * in_ch;
            const double* base = in + p0 + off[t];
            for (std::size_t i = 0; i < in_ch; ++i) {
                const double* src = base + i * in_stride;
                const Lanes a = load_lanes(src);
                const Lanes b = load_lanes(src + kLanes);
                for (std::size_t o = 0; o < OB; ++o) {
                    const double wv = wt[o * in_ch + i];
                    lo[o] += wv * a;
                    hi[o] += wv * b;
                }
            }
        }
        for (std::size_t o = 0; o < OB; ++o) {
            double* dst = out + (o0 + o) * out_stride + p0;
            store_lanes(dst, lo[o]);
            store_lanes(dst + kLanes, hi[o]);
        }
    }
}

/// out[o][p] += sum_t sum_i w[t][o][i] * in[i][p + off[t]]
inline void correlate(const double* in, std::size_t in_ch, std::size_t in_stride, const double* w,
                      std::size_t out_ch, std::span<const std::size_t> off, double* out, std::size_t out_stride,
                      std::size_t n) {
    // Near-equal output blocks of at most eight neurons.
    const std::size_t blocks = (out_ch + 7) / 8;
    std::size_t o0 = 0;
    for (std::size_t k = 0; k < blocks; ++k) {
        const std::size_t size = (out_ch - o0 + (blocks - k) - 1) / (blocks - k);
        switch (size) {
            case 1: correlate_block<1>(in, in_ch, in_stride, w, out_ch, o0, off, out, out_stride, n); break;
            case 2: correlate_block<2>(in, in_ch, in_stride, w, out_ch, o0, off, out, out_stride, n); break;
            case 3: correlate_block<3>(in, in_ch, in_stride, w, out_ch, o0, off, out, out_stride, n); break;
            case 4: correlate_block<4>(in, in_ch, in_stride, w, out_ch, o0, off, out, out_stride, n); break;
            case 5: correlate_block<5>(in, in_ch, in_stride, w, out_ch, o0, off, out, out_stride, n); break;
            case 6: correlate_block<6>(in, in_ch, in_stride, w, out_ch, o0, off, out, out_stride, n); break;
            case 7: correlate_block<7>(in, in_ch, in_stride, w, out_ch, o0, off, out, out_stride, n); break;
            default: correlate_block<8>(in, in_ch, in_stride, w, out_ch, o0, off, out, out_stride, n); break;
        }
        o0 += size;
    }
}

// Pairs (tap, input channel) handled together per pass over the gradient,
// sized so accumulators, gradient lanes and sources fit the register file.
constexpr std::size_t pair_group(std::size_t ob) {
    constexpr std::size_t table[] = {0, 8, 6, 5, 4, 4, 3, 3, 2};
    return table[ob];
}

template <std::size_t OB, std::size_t R>
void weight_grad_pairs(const double* g, std::size_t g_stride, std::size_t o0, const double* const* src,
                       double* const* dst, std::size_t out_ch, std::size_t in_ch, std::size_t len) {
    Lanes acc[R][OB] = {};
    for (std::size_t pp = 0; pp < len; pp += kLanes) {
        Lanes gv[OB];
        for (std::size_t o = 0; o < OB; ++o) {
            gv[o] = load_lanes(g + (o0 + o) * g_stride + pp);
        }
        for (std::size_t r = 0; r < R; ++r) {
            const Lanes a = load_lanes(src[r] + pp);
            for (std::size_t o = 0; o < OB; ++o) {
                acc[r][o] += gv[o] * a;
            }
        }
    }
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t o = 0; o < OB; ++o) {
            dst[r][(o0 + o) * in_ch] += sum_lanes(acc[r][o]);
        }
    }
    (void)out_ch;
}

template <std::size_t OB>
void weight_grad_block(const double* g, std::size_t g_stride, std::size_t out_ch, std::size_t o0, const double* in,
                       std::size_t in_ch, std::size_t in_stride, std::span<const std::size_t> off, double* dw,
                       std::size_t n) {
    constexpr std::size_t kSpan = 1024;
    constexpr std::size_t R = pair_group(OB);
    const std::size_t pairs = off.size() * in_ch;
    for (std::size_t p0 = 0; p0 < n; p0 += kSpan) {
        const std::size_t len = std::min(kSpan, n - p0);
        const double* gp = g + p0;
        std::size_t k = 0;
        const double* src[R];
        double* dst[R];
        auto locate = [&](std::size_t pair, std::size_t r) {
            const std::size_t t = pair / in_ch;
            const std::size_t i = pair % in_ch;
            src[r] = in + i * in_stride + p0 + off[t];
            dst[r] = dw + t * out_ch * in_ch + i;
        };
        for (; k + R <= pairs; k += R) {
            for (std::size_t r = 0; r < R; ++r) {
                locate(k + r, r);
            }
            weight_grad_pairs<OB, R>(gp, g_stride, o0, src, dst, out_ch, in_ch, len);
        }
        for (; k < pairs; ++k) {
            locate(k, 0);
            weight_grad_pairs<OB, 1>(gp, g_stride, o0, src, dst, out_ch, in_ch, len);
        }
    }
}

/// dw[t][o][i] += sum_p g[o][p] * in[i][p + off[t]]
inline void weight_grad(const double* g, std::size_t g_stride, std::size_t out_ch, const double* in,
                        std::size_t in_ch, std::size_t in_stride, std::span<const std::size_t> off, double* dw,
                        std::size_t n) {
    // Near-equal output blocks of at most eight neurons.
    const std::size_t blocks = (out_ch + 7) / 8;
    std::size_t o0 = 0;
    for (std::size_t k = 0; k < blocks; ++k) {
        const std::size_t size = (out_ch - o0 + (blocks - k) - 1) / (blocks - k);
        switch (size) {
            case 1: weight_grad_block<1>(g, g_stride, out_ch, o0, in, in_ch, in_stride, off, dw, n); break;
            case 2: weight_grad_block<2>(g, g_stride, out_ch, o0, in, in_ch, in_stride, off, dw, n); break;
            case 3: weight_grad_block<3>(g, g_stride, out_ch, o0, in, in_ch, in_stride, off, dw, n); break;
            case 4: weight_grad_block<4>(g, g_stride, out_ch, o0, in, in_ch, in_stride, off, dw, n); break;
            case 5: weight_grad_block<5>(g, g_stride, out_ch, o0, in, in_ch, in_stride, off, dw, n); break;
            case 6: weight_grad_block<6>(g, g_stride, out_ch, o0, in, in_ch, in_stride, off, dw, n); break;
            case 7: weight_grad_block<7>(g, g_stride, out_ch, o0, in, in_ch, in_stride, off, dw, n); break;
            default: weight_grad_block<8>(g, g_stride, out_ch, o0, in, in_ch, in_stride, off, dw, n); break;
        }
        o0 += size;
    }
}

}  // namespace selfonn::detail
