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

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rseg/error.hpp"

namespace rseg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape &shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape &shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major f32 tensor. Every dimension is at least 1 and the data
/// length always equals the product of the shape.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, float fill = 0.0f) : shape_(std::move(shape)) {
        check_shape(shape_);
        data_.assign(shape_numel(shape_), fill);
    }

    Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape(shape_);
        if (data_.size() != shape_numel(shape_)) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
        }
    }

    const Shape &shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    const std::vector<float> &values() const { return data_; }

    float &operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // 2-D accessors; callers are expected to have checked the rank.
    float &at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    float at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    std::span<float> row(std::size_t r) {
        const std::size_t w = data_.size() / shape_[0];
        return std::span<float>(data_).subspan(r * w, w);
    }
    std::span<const float> row(std::size_t r) const {
        const std::size_t w = data_.size() / shape_[0];
        return std::span<const float>(data_).subspan(r * w, w);
    }

    bool operator==(const Tensor &) const = default;

private:
    static void check_shape(const Shape &shape) {
        if (shape.empty()) {
            throw DimensionError("tensor must have rank >= 1");
        }
        for (std::size_t d : shape) {
            if (d == 0) {
                throw DimensionError("tensor dimension of size 0 in " + shape_str(shape));
            }
        }
    }

    Shape shape_;
    std::vector<float> data_;
};

inline void expect_rank(const Tensor &t, std::size_t rank, const char *what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                             ", got shape " + shape_str(t.shape()));
    }
}

} // namespace rseg
