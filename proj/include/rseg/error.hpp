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

#include <stdexcept>
#include <string>

namespace rseg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define RSEG_DEFINE_ERROR(Name)                                                \
    class Name : public Error {                                                \
    public:                                                                    \
        using Error::Error;                                                    \
    }

/// Shapes or sizes do not agree.
RSEG_DEFINE_ERROR(DimensionError);
/// A softmax row has no admissible entry.
RSEG_DEFINE_ERROR(DegenerateRowError);
/// Cosine similarity against a zero vector.
RSEG_DEFINE_ERROR(UndefinedSimilarityError);
/// A vector that must be L2-normalized has zero norm.
RSEG_DEFINE_ERROR(NormalizationError);
/// Encoder or pipeline configuration is inconsistent.
RSEG_DEFINE_ERROR(ConfigError);
/// Prompt grammar is malformed.
RSEG_DEFINE_ERROR(GrammarError);
/// Too few prompt variants or classes for a similarity statistic.
RSEG_DEFINE_ERROR(InsufficientDataError);
/// A model's separation margin is zero or negative.
RSEG_DEFINE_ERROR(NonPositiveMarginError);
/// Checkpoints cannot be merged (names or shapes differ).
RSEG_DEFINE_ERROR(IncompatibleCheckpointError);
/// Merge weights are malformed.
RSEG_DEFINE_ERROR(WeightError);
/// Label data is out of range or misaligned.
RSEG_DEFINE_ERROR(DataError);
/// No class has a defined IoU.
RSEG_DEFINE_ERROR(EmptyEvaluationError);
/// A file is truncated or carries the wrong magic.
RSEG_DEFINE_ERROR(FormatError);

#undef RSEG_DEFINE_ERROR

} // namespace rseg
