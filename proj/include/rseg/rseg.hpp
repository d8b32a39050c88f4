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

#include "rseg/attention_mask.hpp"
#include "rseg/checkpoint.hpp"
#include "rseg/encoder.hpp"
#include "rseg/error.hpp"
#include "rseg/eval.hpp"
#include "rseg/merge.hpp"
#include "rseg/numerics.hpp"
#include "rseg/parallel.hpp"
#include "rseg/random.hpp"
#include "rseg/raster_io.hpp"
#include "rseg/regions.hpp"
#include "rseg/segment.hpp"
#include "rseg/synthetic.hpp"
#include "rseg/tensor.hpp"
#include "rseg/text.hpp"
