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

// Dense prediction: patch/text cosine similarity, bilinear upsampling,
// argmax labelling and sliding-window tiling with per-pixel averaging.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rseg/encoder.hpp"
#include "rseg/numerics.hpp"
#include "rseg/parallel.hpp"
#include "rseg/regions.hpp"

namespace rseg {

/// Per-pixel class scores, stored as an H×W×C tensor.
struct SimilarityMap {
    Tensor scores;

    std::size_t height() const { return scores.dim(0); }
    std::size_t width() const { return scores.dim(1); }
    std::size_t classes() const { return scores.dim(2); }
    float at(std::size_t y, std::size_t x, std::size_t c) const {
        return scores[(y * width() + x) * classes() + c];
    }
};

struct LabelMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint32_t> labels;

    std::uint32_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
    bool operator==(const LabelMap &) const = default;
};

struct Segmentation {
    SimilarityMap scores;
    LabelMap labels;
};

/// Cosine similarity of every patch feature (CLS excluded) with every row
/// of `text` (C×D), at patch resolution.
inline SimilarityMap similarity_map(const FeatureSet &features, const Tensor &text) {
    expect_rank(text, 2, "class embeddings");
    const std::size_t n = features.patches(), c = text.dim(0);
    if (features.tokens.dim(0) != n + 1) {
        throw DimensionError("similarity_map: feature set has " + std::to_string(features.tokens.dim(0)) +
                             " tokens for " + std::to_string(n) + " patches");
    }
    if (features.tokens.dim(1) != text.dim(1)) {
        throw DimensionError("similarity_map: feature dim " + std::to_string(features.tokens.dim(1)) +
                             " != text dim " + std::to_string(text.dim(1)));
    }
    SimilarityMap sim{Tensor({features.grid_rows, features.grid_cols, c})};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < c; ++k) {
            sim.scores[i * c + k] = cosine_similarity(features.tokens.row(i + 1), text.row(k));
        }
    }
    return sim;
}

/// Per-pixel argmax; ties go to the lowest class index.
inline LabelMap argmax_labels(const SimilarityMap &sim) {
    LabelMap out{sim.height(), sim.width(), std::vector<std::uint32_t>(sim.height() * sim.width())};
    const std::size_t c = sim.classes();
    for (std::size_t p = 0; p < out.labels.size(); ++p) {
        const float *s = sim.scores.data().data() + p * c;
        std::uint32_t best = 0;
        for (std::size_t k = 1; k < c; ++k) {
            if (s[k] > s[best]) best = static_cast<std::uint32_t>(k);
        }
        out.labels[p] = best;
    }
    return out;
}

inline Segmentation upsample_and_label(const SimilarityMap &low, std::size_t height, std::size_t width) {
    SimilarityMap up{bilinear_upsample(low.scores, height, width)};
    LabelMap labels = argmax_labels(up);
    return {std::move(up), std::move(labels)};
}

/// Encode → similarity → upsample → argmax for a single preprocessed image.
inline Segmentation segment_image(const Tensor &image, const Checkpoint &ckpt, const EncoderConfig &cfg,
                                  const Tensor &text, const MaskHierarchy *hierarchy) {
    const FeatureSet f = encode(image, ckpt, cfg, hierarchy);
    return upsample_and_label(similarity_map(f, text), image.dim(0), image.dim(1));
}

enum class ScoreAveraging {
    /// Average raw cosine similarities.
    Similarity,
    /// Average per-pixel softmax(logit_scale · similarity) over classes.
    Probability,
};

struct SlidingWindowConfig {
    std::size_t tile = 224;
    std::size_t stride = 50;
    /// Reflect-pad images smaller than a tile; otherwise they are rejected.
    bool pad = true;
    ScoreAveraging averaging = ScoreAveraging::Similarity;
    float logit_scale = 100.0f;
    std::size_t threads = 1;

    void validate() const {
        if (tile == 0 || stride == 0 || stride > tile) {
            throw ConfigError("sliding window: need 1 <= stride <= tile, got stride " + std::to_string(stride) +
                              " and tile " + std::to_string(tile));
        }
    }
};

/// Tile start offsets along one axis of length `extent` (>= tile). The last
/// tile is clamped to end exactly at the boundary.
inline std::vector<std::size_t> tile_offsets(std::size_t extent, std::size_t tile, std::size_t stride) {
    if (extent < tile) {
        throw DimensionError("tile_offsets: extent " + std::to_string(extent) + " smaller than tile " +
                             std::to_string(tile));
    }
    std::vector<std::size_t> offs;
    for (std::size_t off = 0;;) {
        offs.push_back(off);
        if (off + tile >= extent) break;
        off = std::min(off + stride, extent - tile);
    }
    return offs;
}

struct TileWindow {
    std::size_t y0 = 0;
    std::size_t x0 = 0;
    std::size_t size = 0;
};

/// Supplies the mask hierarchy for one tile. Windows are in the coordinates
/// of the (possibly reflect-padded) image.
class MaskSource {
public:
    virtual ~MaskSource() = default;
    /// Number of hierarchy levels produced (0 = unmasked).
    virtual std::size_t levels() const = 0;
    virtual MaskHierarchy hierarchy_for(const TileWindow &w, std::size_t patch) const = 0;
    /// Throws if the source cannot serve an image of this size.
    virtual void check_image(std::size_t /*height*/, std::size_t /*width*/) const {}
};

class NoMasks final : public MaskSource {
public:
    std::size_t levels() const override { return 0; }
    MaskHierarchy hierarchy_for(const TileWindow &, std::size_t) const override { return {}; }
};

/// Crops full-image label rasters (ordered coarse to fine) per tile,
/// reflecting beyond the raster edge.
class RasterMaskSource final : public MaskSource {
public:
    explicit RasterMaskSource(std::vector<RegionLabelImage> levels) : levels_(std::move(levels)) {
        for (const auto &l : levels_) {
            if (l.height != levels_.front().height || l.width != levels_.front().width) {
                throw DimensionError("mask rasters have differing dimensions");
            }
        }
    }

    std::size_t levels() const override { return levels_.size(); }

    void check_image(std::size_t height, std::size_t width) const override {
        for (std::size_t r = 0; r < levels_.size(); ++r) {
            if (levels_[r].height != height || levels_[r].width != width) {
                throw DimensionError("mask level " + std::to_string(r) + " is " + std::to_string(levels_[r].height) +
                                     "x" + std::to_string(levels_[r].width) + " but the image is " +
                                     std::to_string(height) + "x" + std::to_string(width));
            }
        }
    }

    MaskHierarchy hierarchy_for(const TileWindow &w, std::size_t patch) const override {
        std::vector<RegionLabelImage> crops;
        crops.reserve(levels_.size());
        for (const auto &l : levels_) {
            RegionLabelImage c(w.size, w.size);
            for (std::size_t y = 0; y < w.size; ++y) {
                for (std::size_t x = 0; x < w.size; ++x) {
                    c.at(y, x) = l.at(reflect_index(w.y0 + y, l.height), reflect_index(w.x0 + x, l.width));
                }
            }
            crops.push_back(std::move(c));
        }
        return build_hierarchy(crops, patch);
    }

    const std::vector<RegionLabelImage> &rasters() const { return levels_; }

private:
    std::vector<RegionLabelImage> levels_;
};

/// Reflect-pads an H×W×C tensor at the bottom/right to at least h×w.
inline Tensor reflect_pad(const Tensor &img, std::size_t h, std::size_t w) {
    expect_rank(img, 3, "reflect_pad");
    const std::size_t ih = img.dim(0), iw = img.dim(1), c = img.dim(2);
    const std::size_t oh = std::max(h, ih), ow = std::max(w, iw);
    Tensor out({oh, ow, c});
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            const float *src = img.data().data() + (reflect_index(y, ih) * iw + reflect_index(x, iw)) * c;
            std::copy_n(src, c, out.data().data() + (y * ow + x) * c);
        }
    }
    return out;
}

inline Tensor crop_tile(const Tensor &img, const TileWindow &w) {
    const std::size_t iw = img.dim(1), c = img.dim(2);
    Tensor out({w.size, w.size, c});
    for (std::size_t y = 0; y < w.size; ++y) {
        const float *src = img.data().data() + ((w.y0 + y) * iw + w.x0) * c;
        std::copy_n(src, w.size * c, out.data().data() + y * w.size * c);
    }
    return out;
}

/// Windows in raster order (rows of tiles top to bottom, each left to right).
inline std::vector<TileWindow> tile_windows(std::size_t height, std::size_t width, const SlidingWindowConfig &swc) {
    std::vector<TileWindow> out;
    for (std::size_t y : tile_offsets(height, swc.tile, swc.stride)) {
        for (std::size_t x : tile_offsets(width, swc.tile, swc.stride)) {
            out.push_back({y, x, swc.tile});
        }
    }
    return out;
}

/// Sliding-window segmentation of a preprocessed H×W×3 image. Each tile is
/// encoded independently (optionally in parallel), its patch scores are
/// upsampled to tile resolution, and every pixel's score is the mean over
/// all tiles covering it (summed in double, rounded once, in tile raster
/// order). Output is independent of the thread count.
inline Segmentation sliding_window_segment(const Tensor &image, const Checkpoint &ckpt, const EncoderConfig &cfg,
                                           const SlidingWindowConfig &swc, const Tensor &text,
                                           const MaskSource &masks) {
    swc.validate();
    expect_rank(image, 3, "image");
    const std::size_t h = image.dim(0), w = image.dim(1);
    if (swc.tile % cfg.patch != 0) {
        throw ConfigError("tile size " + std::to_string(swc.tile) + " is not a multiple of patch size " +
                          std::to_string(cfg.patch));
    }
    if (masks.levels() != cfg.masked_layers) {
        throw ConfigError("mask source provides " + std::to_string(masks.levels()) + " levels but " +
                          std::to_string(cfg.masked_layers) + " masked layers are configured");
    }
    masks.check_image(h, w);
    if ((h < swc.tile || w < swc.tile) && !swc.pad) {
        throw DimensionError("image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than tile " +
                             std::to_string(swc.tile) + " and padding is disabled");
    }
    const Tensor padded = (h < swc.tile || w < swc.tile) ? reflect_pad(image, swc.tile, swc.tile) : image;
    const std::size_t ph = padded.dim(0), pw = padded.dim(1);
    const auto windows = tile_windows(ph, pw, swc);

    std::vector<SimilarityMap> low(windows.size());
    parallel_for(windows.size(), swc.threads, [&](std::size_t i) {
        const Tensor tile = crop_tile(padded, windows[i]);
        if (cfg.masked_layers == 0) {
            low[i] = similarity_map(encode(tile, ckpt, cfg, nullptr), text);
        } else {
            const MaskHierarchy hier = masks.hierarchy_for(windows[i], cfg.patch);
            low[i] = similarity_map(encode(tile, ckpt, cfg, &hier), text);
        }
    });

    const std::size_t c = text.dim(0);
    std::vector<double> sum(ph * pw * c, 0.0);
    std::vector<std::uint32_t> count(ph * pw, 0);
    std::vector<float> probs(c);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        Tensor up = bilinear_upsample(low[i].scores, swc.tile, swc.tile);
        if (swc.averaging == ScoreAveraging::Probability) {
            for (std::size_t p = 0; p < swc.tile * swc.tile; ++p) {
                auto s = up.data().subspan(p * c, c);
                for (std::size_t k = 0; k < c; ++k) probs[k] = swc.logit_scale * s[k];
                masked_softmax_row(probs, nullptr, s);
            }
        }
        const TileWindow &win = windows[i];
        for (std::size_t y = 0; y < win.size; ++y) {
            for (std::size_t x = 0; x < win.size; ++x) {
                const std::size_t p = (win.y0 + y) * pw + (win.x0 + x);
                const float *s = up.data().data() + (y * win.size + x) * c;
                for (std::size_t k = 0; k < c; ++k) sum[p * c + k] += s[k];
                ++count[p];
            }
        }
    }

    SimilarityMap avg{Tensor({h, w, c})};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t p = y * pw + x;
            for (std::size_t k = 0; k < c; ++k) {
                avg.scores[(y * w + x) * c + k] = static_cast<float>(sum[p * c + k] / count[p]);
            }
        }
    }
    LabelMap labels = argmax_labels(avg);
    return {std::move(avg), std::move(labels)};
}

} // namespace rseg
