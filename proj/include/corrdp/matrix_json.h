// Copyright 2026 The corrdp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// JSON form of strategy matrices: {"order", "family", "payload"}.
//   dense:    payload = row-major list of rows
//   banded:   payload = {"band_width", "diagonals"}
//   toeplitz: payload = coefficient list
//   blt:      payload = {"buffers", "weights", "decays"}

#ifndef CORRDP_MATRIX_JSON_H_
#define CORRDP_MATRIX_JSON_H_

#include "absl/status/statusor.h"
#include "corrdp/matrix_core.h"
#include "json.hpp"

namespace corrdp {

nlohmann::json StrategyToJson(const StrategyMatrix& strategy);
absl::StatusOr<StrategyMatrix> StrategyFromJson(const nlohmann::json& json);

}  // namespace corrdp

#endif  // CORRDP_MATRIX_JSON_H_
