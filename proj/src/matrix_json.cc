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

#include "corrdp/matrix_json.h"

#include <string>
#include <vector>

#include "absl/strings/str_cat.h"

namespace corrdp {

using nlohmann::json;

json StrategyToJson(const StrategyMatrix& strategy) {
  json out;
  out["order"] = strategy.order();
  out["family"] = FamilyName(strategy.family());
  const auto& rep = strategy.representation();
  if (const auto* dense = std::get_if<DenseStrategy>(&rep)) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < dense->entries.rows(); ++i) {
      std::vector<double> row(dense->entries.cols());
      for (Eigen::Index j = 0; j < dense->entries.cols(); ++j) {
        row[j] = dense->entries(i, j);
      }
      rows.push_back(row);
    }
    out["payload"] = rows;
  } else if (const auto* banded = std::get_if<BandedStrategy>(&rep)) {
    out["payload"] = {{"band_width", banded->diagonals.size()},
                      {"diagonals", banded->diagonals}};
  } else if (const auto* t = std::get_if<ToeplitzStrategy>(&rep)) {
    out["payload"] = t->coeffs;
  } else if (const auto* blt = std::get_if<BltStrategy>(&rep)) {
    out["payload"] = {{"buffers", blt->weights.size()},
                      {"weights", blt->weights},
                      {"decays", blt->decays}};
  }
  return out;
}

absl::StatusOr<StrategyMatrix> StrategyFromJson(const json& in) {
  try {
    const int order = in.at("order").get<int>();
    const std::string family = in.at("family").get<std::string>();
    const json& payload = in.at("payload");
    if (family == "dense") {
      if (!payload.is_array() || static_cast<int>(payload.size()) != order) {
        return absl::InvalidArgumentError("dense payload must have order rows");
      }
      Eigen::MatrixXd entries(order, order);
      for (int i = 0; i < order; ++i) {
        const auto row = payload[i].get<std::vector<double>>();
        if (static_cast<int>(row.size()) != order) {
          return absl::InvalidArgumentError(
              absl::StrCat("dense row ", i, " must have order entries"));
        }
        for (int j = 0; j < order; ++j) entries(i, j) = row[j];
      }
      return StrategyMatrix::Dense(std::move(entries));
    }
    if (family == "banded") {
      auto diagonals =
          payload.at("diagonals").get<std::vector<std::vector<double>>>();
      if (payload.contains("band_width") &&
          payload.at("band_width").get<size_t>() != diagonals.size()) {
        return absl::InvalidArgumentError("band_width != number of diagonals");
      }
      return StrategyMatrix::Banded(order, std::move(diagonals));
    }
    if (family == "toeplitz") {
      return StrategyMatrix::Toeplitz(order,
                                      payload.get<std::vector<double>>());
    }
    if (family == "blt") {
      auto weights = payload.at("weights").get<std::vector<double>>();
      auto decays = payload.at("decays").get<std::vector<double>>();
      if (payload.contains("buffers") &&
          payload.at("buffers").get<size_t>() != weights.size()) {
        return absl::InvalidArgumentError("buffers != number of weights");
      }
      return StrategyMatrix::Blt(order, std::move(weights), std::move(decays));
    }
    return absl::InvalidArgumentError(
        absl::StrCat("unknown matrix family '", family, "'"));
  } catch (const json::exception& e) {
    return absl::InvalidArgumentError(
        absl::StrCat("malformed matrix json: ", e.what()));
  }
}

}  // namespace corrdp
