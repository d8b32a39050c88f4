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

// Region rasters and the region-constrained attention masks built from them.
//
// A label image assigns every pixel a region index (0 = background). Each
// patch takes the majority label of its pixels, and two patch tokens may
// attend to each other iff their patch labels are equal. The CLS token
// attends only to itself.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rseg/attention_mask.hpp"
#include "rseg/error.hpp"

namespace rseg {

/// Binary coverage raster for a single region proposal.
struct BinaryMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;

    bool at(std::size_t y, std::size_t x) const { return bits[y * width + x] != 0; }
};

/// Pixel-level region labels; 0 is background, q >= 1 a region.
struct RegionLabelImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint32_t> labels;
    /// Opaque description of the mask generator configuration.
    std::string provenance;

    RegionLabelImage() = default;
    RegionLabelImage(std::size_t h, std::size_t w, std::uint32_t fill = 0)
        : height(h), width(w), labels(h * w, fill) {}

    std::uint32_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
    std::uint32_t &at(std::size_t y, std::size_t x) { return labels[y * width + x]; }

    std::uint32_t max_label() const {
        return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
    }

    bool operator==(const RegionLabelImage &) const = default;
};

/// Patch-level dominant region index, one entry per patch token.
struct RegionIndexGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint32_t> index;

    std::size_t size() const { return index.size(); }
};

/// Ordered attention masks; entry r applies at encoder layer L - |masks| + r.
struct MaskHierarchy {
    std::vector<AttentionMask> masks;

    std::size_t size() const { return masks.size(); }
    bool empty() const { return masks.empty(); }
};

/// Merges region masks into one label image. Where masks overlap the lowest
/// mask index wins; uncovered pixels stay background.
inline RegionLabelImage combine_masks(std::span<const BinaryMask> masks, std::size_t height,
                                      std::size_t width) {
    RegionLabelImage out(height, width, 0);
    for (std::size_t q = 0; q < masks.size(); ++q) {
        const BinaryMask &m = masks[q];
        if (m.height != height || m.width != width || m.bits.size() != height * width) {
            throw DimensionError("combine_masks: mask " + std::to_string(q + 1) + " is " +
                                 std::to_string(m.height) + "x" + std::to_string(m.width) +
                                 ", expected " + std::to_string(height) + "x" +
                                 std::to_string(width));
        }
        const auto label = static_cast<std::uint32_t>(q + 1);
        for (std::size_t i = 0; i < out.labels.size(); ++i) {
            if (m.bits[i] && out.labels[i] == 0) {
                out.labels[i] = label;
            }
        }
    }
    return out;
}

/// Majority label of each P×P patch, counting background; ties go to the
/// smallest label.
inline RegionIndexGrid patch_region_index(const RegionLabelImage &labels, std::size_t patch) {
    if (patch == 0 || labels.height % patch != 0 || labels.width % patch != 0) {
        throw DimensionError("patch_region_index: " + std::to_string(labels.height) + "x" +
                             std::to_string(labels.width) + " is not divisible by patch size " +
                             std::to_string(patch));
    }
    RegionIndexGrid grid;
    grid.rows = labels.height / patch;
    grid.cols = labels.width / patch;
    grid.index.resize(grid.rows * grid.cols);
    std::vector<std::uint32_t> votes(patch * patch);
    for (std::size_t pr = 0; pr < grid.rows; ++pr) {
        for (std::size_t pc = 0; pc < grid.cols; ++pc) {
            std::size_t k = 0;
            for (std::size_t y = 0; y < patch; ++y) {
                for (std::size_t x = 0; x < patch; ++x) {
                    votes[k++] = labels.at(pr * patch + y, pc * patch + x);
                }
            }
            std::sort(votes.begin(), votes.end());
            std::uint32_t best = votes[0];
            std::size_t best_count = 0;
            for (std::size_t i = 0; i < votes.size();) {
                std::size_t j = i;
                while (j < votes.size() && votes[j] == votes[i]) {
                    ++j;
                }
                // strict > keeps the smaller label on ties (ascending scan)
                if (j - i > best_count) {
                    best_count = j - i;
                    best = votes[i];
                }
                i = j;
            }
            grid.index[pr * grid.cols + pc] = best;
        }
    }
    return grid;
}

/// Token-level mask of size N+1. Background patches (index 0) form a region
/// of their own like any other label.
inline AttentionMask build_attention_mask(const RegionIndexGrid &ri) {
    const std::size_t n = ri.size();
    AttentionMask mask(n + 1);
    mask.set(0, 0, true);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            mask.set(a + 1, b + 1, ri.index[a] == ri.index[b]);
        }
    }
    return mask;
}

/// One mask per label image, in the given (coarse to fine) order.
inline MaskHierarchy build_hierarchy(std::span<const RegionLabelImage> levels, std::size_t patch) {
    MaskHierarchy h;
    h.masks.reserve(levels.size());
    for (std::size_t r = 0; r < levels.size(); ++r) {
        if (levels[r].height != levels.front().height || levels[r].width != levels.front().width) {
            throw DimensionError("build_hierarchy: level " + std::to_string(r) +
                                 " dimensions differ from level 0");
        }
        h.masks.push_back(build_attention_mask(patch_region_index(levels[r], patch)));
    }
    return h;
}

/// Copies the h×w window whose top-left corner is (y0, x0).
inline RegionLabelImage crop(const RegionLabelImage &img, std::size_t y0, std::size_t x0,
                             std::size_t h, std::size_t w) {
    if (y0 + h > img.height || x0 + w > img.width) {
        throw DimensionError("crop: window exceeds label image bounds");
    }
    RegionLabelImage out(h, w);
    out.provenance = img.provenance;
    for (std::size_t y = 0; y < h; ++y) {
        std::copy_n(img.labels.begin() + static_cast<std::ptrdiff_t>((y0 + y) * img.width + x0), w,
                    out.labels.begin() + static_cast<std::ptrdiff_t>(y * w));
    }
    return out;
}

/// Mirror index for reflect padding (edge pixel not repeated).
inline std::size_t reflect_index(std::size_t i, std::size_t n) {
    if (n == 1) {
        return 0;
    }
    const std::size_t period = 2 * (n - 1);
    const std::size_t m = i % period;
    return m < n ? m : period - m;
}

/// Extends a label image to at least h×w by reflecting at the bottom/right
/// edges.
inline RegionLabelImage reflect_pad(const RegionLabelImage &img, std::size_t h, std::size_t w) {
    const std::size_t oh = std::max(h, img.height), ow = std::max(w, img.width);
    RegionLabelImage out(oh, ow);
    out.provenance = img.provenance;
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            out.at(y, x) = img.at(reflect_index(y, img.height), reflect_index(x, img.width));
        }
    }
    return out;
}

} // namespace rseg
