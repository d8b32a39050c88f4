// Copyright 2026 The rseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense f32 kernels. Pure functions with a fixed accumulation order.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>

#include "rseg/attention_mask.hpp"
#include "rseg/error.hpp"
#include "rseg/tensor.hpp"

namespace rseg {

/// Row-major matrix product. Each output element accumulates over k from
/// left to right, starting from 0.
inline Tensor matmul(const Tensor &a, const Tensor &b) {
    expect_rank(a, 2, "matmul lhs");
    expect_rank(b, 2, "matmul rhs");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    Tensor out({m, n});
    const float *pa = a.data().data();
    const float *pb = b.data().data();
    float *po = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            float acc = 0.0f;
            for (std::size_t p = 0; p < k; ++p) {
                acc += pa[i * k + p] * pb[p * n + j];
            }
            po[i * n + j] = acc;
        }
    }
    return out;
}

/// x·W + b, with the bias added after the full dot product.
inline Tensor linear(const Tensor &x, const Tensor &weight, const Tensor &bias) {
    Tensor out = matmul(x, weight);
    const std::size_t n = out.dim(1);
    if (bias.size() != n) {
        throw DimensionError("linear: bias length " + std::to_string(bias.size()) + " != " +
                             std::to_string(n));
    }
    for (std::size_t i = 0; i < out.dim(0); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            r[j] += bias[j];
        }
    }
    return out;
}

/// Softmax over the entries of `logits` whose mask byte is nonzero; the
/// remaining outputs are set to exactly 0. A null mask admits every entry.
inline void masked_softmax_row(std::span<const float> logits, const std::uint8_t *mask,
                               std::span<float> out) {
    const std::size_t n = logits.size();
    float max_logit = -std::numeric_limits<float>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
        if (!mask || mask[j]) {
            max_logit = any ? std::max(max_logit, logits[j]) : logits[j];
            any = true;
        }
    }
    if (!any) {
        throw DegenerateRowError("masked_softmax: row has no unmasked entry");
    }
    float sum = 0.0f;
    for (std::size_t j = 0; j < n; ++j) {
        if (!mask || mask[j]) {
            out[j] = std::exp(logits[j] - max_logit);
            sum += out[j];
        } else {
            out[j] = 0.0f;
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (!mask || mask[j]) {
            out[j] /= sum;
        }
    }
}

inline Tensor softmax_rows(const Tensor &logits) {
    expect_rank(logits, 2, "softmax");
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < logits.dim(0); ++i) {
        masked_softmax_row(logits.row(i), nullptr, out.row(i));
    }
    return out;
}

/// Row-wise softmax in which disallowed positions are excluded, which is
/// the same as biasing them with -inf before exponentiation.
inline Tensor masked_softmax(const Tensor &logits, const AttentionMask &mask) {
    expect_rank(logits, 2, "masked_softmax");
    const std::size_t n = logits.dim(0);
    if (logits.dim(1) != n || mask.size() != n) {
        throw DimensionError("masked_softmax: logits " + shape_str(logits.shape()) +
                             " vs mask size " + std::to_string(mask.size()));
    }
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
        masked_softmax_row(logits.row(i), mask.row(i), out.row(i));
    }
    return out;
}

namespace detail {

struct Tap {
    std::size_t lo, hi;
    float frac;
};

// Half-pixel centers: output i samples source (i + 0.5) * src / dst - 0.5,
// clamped to [0, src - 1].
inline Tap bilinear_tap(std::size_t i, std::size_t src, std::size_t dst) {
    double pos = (static_cast<double>(i) + 0.5) * static_cast<double>(src) / static_cast<double>(dst) - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(src - 1));
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, src - 1);
    return {lo, hi, static_cast<float>(pos - static_cast<double>(lo))};
}

inline float lerp(float a, float b, float t) { return a + t * (b - a); }

} // namespace detail

/// Channel-independent bilinear upsampling of an h×w×C map.
inline Tensor bilinear_upsample(const Tensor &src, std::size_t out_h, std::size_t out_w) {
    expect_rank(src, 3, "bilinear_upsample");
    const std::size_t h = src.dim(0), w = src.dim(1), c = src.dim(2);
    if (out_h == 0 || out_w == 0) {
        throw DimensionError("bilinear_upsample: zero-size target");
    }
    if (out_h < h || out_w < w) {
        throw DimensionError("bilinear_upsample: target " + std::to_string(out_h) + "x" +
                             std::to_string(out_w) + " smaller than source " + shape_str(src.shape()));
    }
    Tensor out({out_h, out_w, c});
    const float *ps = src.data().data();
    float *po = out.data().data();
    for (std::size_t y = 0; y < out_h; ++y) {
        const detail::Tap ty = detail::bilinear_tap(y, h, out_h);
        for (std::size_t x = 0; x < out_w; ++x) {
            const detail::Tap tx = detail::bilinear_tap(x, w, out_w);
            const float *p00 = ps + (ty.lo * w + tx.lo) * c;
            const float *p01 = ps + (ty.lo * w + tx.hi) * c;
            const float *p10 = ps + (ty.hi * w + tx.lo) * c;
            const float *p11 = ps + (ty.hi * w + tx.hi) * c;
            float *dst = po + (y * out_w + x) * c;
            for (std::size_t k = 0; k < c; ++k) {
                const float top = detail::lerp(p00[k], p01[k], tx.frac);
                const float bottom = detail::lerp(p10[k], p11[k], tx.frac);
                dst[k] = detail::lerp(top, bottom, ty.frac);
            }
        }
    }
    return out;
}

/// Cosine of the angle between two vectors, clamped to [-1, 1].
inline float cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw DimensionError("cosine_similarity: lengths " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw UndefinedSimilarityError("cosine_similarity: zero vector");
    }
    return static_cast<float>(std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0));
}

/// Normalizes every position over the last dimension, then applies the
/// affine scale and shift.
inline Tensor layer_norm(const Tensor &x, std::span<const float> gamma, std::span<const float> beta,
                         float eps = 1e-5f) {
    const std::size_t d = x.shape().back();
    if (gamma.size() != d || beta.size() != d) {
        throw DimensionError("layer_norm: gamma/beta length does not match last dimension " +
                             std::to_string(d));
    }
    Tensor out(x.shape());
    const std::size_t rows = x.size() / d;
    const float *px = x.data().data();
    float *po = out.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const float *in = px + r * d;
        double mean = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            mean += in[i];
        }
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double diff = in[i] - mean;
            var += diff * diff;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        for (std::size_t i = 0; i < d; ++i) {
            po[r * d + i] = static_cast<float>((in[i] - mean) * inv) * gamma[i] + beta[i];
        }
    }
    return out;
}

inline float gelu(float x) {
    return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f));
}

/// Sigmoid approximation used by the original CLIP checkpoints.
inline float quick_gelu(float x) { return x / (1.0f + std::exp(-1.702f * x)); }

inline float l2_norm(std::span<const float> v) {
    double s = 0.0;
    for (float x : v) {
        s += static_cast<double>(x) * x;
    }
    return static_cast<float>(std::sqrt(s));
}

} // namespace rseg
