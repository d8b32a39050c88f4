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

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rseg/error.hpp"

namespace rseg {

/// C×C pixel counts; rows are ground truth, columns prediction.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes, std::optional<std::uint32_t> ignore_label = std::nullopt)
        : classes_(classes), ignore_(ignore_label), counts_(classes * classes, 0) {
        if (classes == 0) throw DataError("confusion matrix needs at least one class");
    }

    std::size_t classes() const { return classes_; }
    std::optional<std::uint32_t> ignore_label() const { return ignore_; }
    std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * classes_ + pred]; }
    const std::vector<std::uint64_t> &counts() const { return counts_; }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : counts_) t += c;
        return t;
    }

    /// Adds one image pair. Pixels whose ground truth is the ignore label are
    /// skipped; any other label must be < C. On error nothing is added.
    void accumulate(std::span<const std::uint32_t> gt, std::span<const std::uint32_t> pred) {
        if (gt.size() != pred.size()) {
            throw DataError("ground truth has " + std::to_string(gt.size()) + " pixels, prediction " +
                            std::to_string(pred.size()));
        }
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (ignore_ && gt[i] == *ignore_) continue;
            if (gt[i] >= classes_ || pred[i] >= classes_) {
                throw DataError("label out of range at pixel " + std::to_string(i) + ": gt " +
                                std::to_string(gt[i]) + ", pred " + std::to_string(pred[i]) + ", classes " +
                                std::to_string(classes_));
            }
        }
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (ignore_ && gt[i] == *ignore_) continue;
            ++counts_[gt[i] * classes_ + pred[i]];
        }
    }

    ConfusionMatrix &operator+=(const ConfusionMatrix &o) {
        if (o.classes_ != classes_) throw DataError("cannot add confusion matrices of different size");
        for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
        return *this;
    }

    bool operator==(const ConfusionMatrix &) const = default;

private:
    std::size_t classes_;
    std::optional<std::uint32_t> ignore_;
    std::vector<std::uint64_t> counts_;
};

struct IoUResult {
    /// Per-class IoU; empty where TP + FP + FN = 0.
    std::vector<std::optional<double>> per_class;
    double miou = 0.0;
};

/// IoU_c = TP / (TP + FP + FN). Classes with zero union are excluded from
/// the mean.
inline IoUResult iou(const ConfusionMatrix &cm) {
    const std::size_t c = cm.classes();
    IoUResult r;
    r.per_class.resize(c);
    double sum = 0.0;
    std::size_t defined = 0;
    for (std::size_t k = 0; k < c; ++k) {
        std::uint64_t row = 0, col = 0;
        for (std::size_t j = 0; j < c; ++j) {
            row += cm.at(k, j);
            col += cm.at(j, k);
        }
        const std::uint64_t tp = cm.at(k, k);
        const std::uint64_t uni = row + col - tp;
        if (uni == 0) continue;
        r.per_class[k] = static_cast<double>(tp) / static_cast<double>(uni);
        sum += *r.per_class[k];
        ++defined;
    }
    if (defined == 0) {
        throw EmptyEvaluationError("no class has ground truth or predictions; IoU is undefined");
    }
    r.miou = sum / static_cast<double>(defined);
    return r;
}

inline nlohmann::json metrics_json(const ConfusionMatrix &cm) {
    const IoUResult r = iou(cm);
    nlohmann::json j;
    j["classes"] = cm.classes();
    j["ignore_label"] = cm.ignore_label() ? nlohmann::json(*cm.ignore_label()) : nlohmann::json(nullptr);
    j["pixels"] = cm.total();
    j["miou"] = r.miou;
    j["per_class"] = nlohmann::json::array();
    for (std::size_t k = 0; k < cm.classes(); ++k) {
        std::uint64_t gt_pixels = 0, pred_pixels = 0;
        for (std::size_t i = 0; i < cm.classes(); ++i) {
            gt_pixels += cm.at(k, i);
            pred_pixels += cm.at(i, k);
        }
        j["per_class"].push_back({{"class", k},
                                  {"iou", r.per_class[k] ? nlohmann::json(*r.per_class[k]) : nlohmann::json(nullptr)},
                                  {"gt_pixels", gt_pixels},
                                  {"pred_pixels", pred_pixels}});
    }
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t k = 0; k < cm.classes(); ++k) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t i = 0; i < cm.classes(); ++i) row.push_back(cm.at(k, i));
        rows.push_back(std::move(row));
    }
    j["confusion"] = std::move(rows);
    return j;
}

/// Masked-layer counts evaluated by the layer sweep.
inline const std::vector<std::size_t> &default_theta_grid() {
    static const std::vector<std::size_t> grid = {0, 1, 3, 6, 12, 18};
    return grid;
}

/// Picks `count` hierarchy levels from `available` rasters ordered coarse to
/// fine: level r uses raster floor(r · available / count).
inline std::vector<std::size_t> select_levels(std::size_t available, std::size_t count) {
    std::vector<std::size_t> idx(count);
    for (std::size_t r = 0; r < count; ++r) idx[r] = r * available / count;
    return idx;
}

} // namespace rseg
