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
#include <cstdint>
#include <vector>

namespace rseg {

/// Square boolean matrix; `allowed(a, b)` means query token `a` may attend
/// to key token `b`. Index 0 is the CLS token when used inside the encoder.
class AttentionMask {
public:
    AttentionMask() = default;
    explicit AttentionMask(std::size_t size, bool value = false)
        : size_(size), bits_(size * size, value ? 1 : 0) {}

    static AttentionMask all_allowed(std::size_t size) { return AttentionMask(size, true); }

    static AttentionMask diagonal(std::size_t size) {
        AttentionMask m(size);
        for (std::size_t i = 0; i < size; ++i) {
            m.set(i, i, true);
        }
        return m;
    }

    std::size_t size() const { return size_; }
    bool allowed(std::size_t a, std::size_t b) const { return bits_[a * size_ + b] != 0; }
    void set(std::size_t a, std::size_t b, bool v) { bits_[a * size_ + b] = v ? 1 : 0; }

    const std::uint8_t *row(std::size_t a) const { return bits_.data() + a * size_; }

    bool operator==(const AttentionMask &) const = default;

private:
    std::size_t size_ = 0;
    std::vector<std::uint8_t> bits_;
};

} // namespace rseg
