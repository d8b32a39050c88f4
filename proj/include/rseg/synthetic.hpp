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

// Seeded synthetic region rasters, scenes and ground truth.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rseg/error.hpp"
#include "rseg/random.hpp"
#include "rseg/regions.hpp"
#include "rseg/tensor.hpp"

namespace rseg::synthetic {

/// Voronoi label image over `points` distinct seed pixels. Pixel label is
/// 1 + index of the nearest seed (ties to the lower index), so exactly
/// `points` regions are present.
inline RegionLabelImage voronoi_labels(std::size_t height, std::size_t width, std::size_t points,
                                       std::uint64_t seed) {
    if (points == 0 || points > height * width) {
        throw ConfigError("voronoi: need 1 <= points <= " + std::to_string(height * width));
    }
    SplitMix64 rng(seed);
    std::vector<std::pair<long, long>> sites;
    std::set<std::pair<long, long>> taken;
    while (sites.size() < points) {
        const auto y = static_cast<long>(rng.below(height));
        const auto x = static_cast<long>(rng.below(width));
        if (taken.insert({y, x}).second) sites.emplace_back(y, x);
    }
    RegionLabelImage img(height, width);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            long best = std::numeric_limits<long>::max();
            std::uint32_t label = 0;
            for (std::size_t i = 0; i < sites.size(); ++i) {
                const long dy = static_cast<long>(y) - sites[i].first;
                const long dx = static_cast<long>(x) - sites[i].second;
                const long d = dy * dy + dx * dx;
                if (d < best) {
                    best = d;
                    label = static_cast<std::uint32_t>(i + 1);
                }
            }
            img.at(y, x) = label;
        }
    }
    img.provenance = "voronoi points=" + std::to_string(points) + " seed=" + std::to_string(seed);
    return img;
}

/// Coarse-to-fine Voronoi hierarchy; `counts` must be strictly increasing.
inline std::vector<RegionLabelImage> voronoi_hierarchy(std::size_t height, std::size_t width,
                                                       const std::vector<std::size_t> &counts, std::uint64_t seed) {
    std::vector<RegionLabelImage> levels;
    for (std::size_t r = 0; r < counts.size(); ++r) {
        if (r > 0 && counts[r] <= counts[r - 1]) {
            throw ConfigError("region counts must increase from coarse to fine");
        }
        levels.push_back(voronoi_labels(height, width, counts[r], derive_seed(seed, r)));
    }
    return levels;
}

struct Scene {
    Tensor image;            // H×W×3 in [0, 1]
    RegionLabelImage truth;  // class index per pixel
};

/// Piecewise-constant scene: Voronoi cells each assigned a random class,
/// painted with a per-class colour plus uniform noise.
inline Scene make_scene(std::size_t height, std::size_t width, std::size_t classes, std::size_t cells,
                        std::uint64_t seed, float noise = 0.05f) {
    Scene s;
    const RegionLabelImage cells_img = voronoi_labels(height, width, cells, derive_seed(seed, 1));
    SplitMix64 rng(derive_seed(seed, 2));
    std::vector<std::uint32_t> cell_class(cells + 1);
    for (auto &c : cell_class) c = static_cast<std::uint32_t>(rng.below(classes));
    std::vector<std::array<float, 3>> colour(classes);
    for (auto &col : colour) {
        for (float &v : col) v = rng.uniform(0.1f, 0.9f);
    }
    s.truth = RegionLabelImage(height, width);
    s.truth.provenance = "synthetic ground truth seed=" + std::to_string(seed);
    s.image = Tensor({height, width, 3});
    for (std::size_t p = 0; p < height * width; ++p) {
        const std::uint32_t cls = cell_class[cells_img.labels[p]];
        s.truth.labels[p] = cls;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            s.image[p * 3 + ch] = std::clamp(colour[cls][ch] + rng.uniform(-noise, noise), 0.0f, 1.0f);
        }
    }
    return s;
}

} // namespace rseg::synthetic
