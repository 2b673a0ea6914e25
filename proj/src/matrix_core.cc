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

#include "corrdp/matrix_core.h"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>

#include "absl/strings/str_cat.h"

namespace corrdp {
namespace {

bool AllFinite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

absl::StatusOr<ParticipationSchema> ParticipationSchema::Create(
    int batches_per_epoch, int epochs) {
  if (batches_per_epoch < 1) {
    return absl::InvalidArgumentError("batches_per_epoch must be >= 1");
  }
  if (epochs < 1) {
    return absl::InvalidArgumentError("epochs must be >= 1");
  }
  return ParticipationSchema(batches_per_epoch, epochs);
}

std::string FamilyName(StrategyFamily family) {
  switch (family) {
    case StrategyFamily::kDense:
      return "dense";
    case StrategyFamily::kBanded:
      return "banded";
    case StrategyFamily::kToeplitz:
      return "toeplitz";
    case StrategyFamily::kBlt:
      return "blt";
  }
  return "unknown";
}

absl::StatusOr<StrategyMatrix> StrategyMatrix::Dense(Eigen::MatrixXd entries) {
  const Eigen::Index n = entries.rows();
  if (n < 1 || entries.cols() != n) {
    return absl::InvalidArgumentError("dense strategy must be square, n >= 1");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = entries(i, j);
      if (!std::isfinite(v)) {
        return absl::InvalidArgumentError("dense strategy has non-finite entry");
      }
      if (j > i && v != 0.0) {
        return absl::InvalidArgumentError(
            absl::StrCat("dense strategy is not lower triangular at (", i,
                         ", ", j, ")"));
      }
    }
    if (!(entries(i, i) > 0.0)) {
      return absl::InvalidArgumentError(
          absl::StrCat("nonpositive diagonal entry at ", i));
    }
  }
  return StrategyMatrix(DenseStrategy{std::move(entries)});
}

absl::StatusOr<StrategyMatrix> StrategyMatrix::Banded(
    int order, std::vector<std::vector<double>> diagonals) {
  if (order < 1) return absl::InvalidArgumentError("order must be >= 1");
  if (diagonals.empty() || static_cast<int>(diagonals.size()) > order) {
    return absl::InvalidArgumentError("band width must be in [1, order]");
  }
  for (size_t d = 0; d < diagonals.size(); ++d) {
    if (static_cast<int>(diagonals[d].size()) != order - static_cast<int>(d)) {
      return absl::InvalidArgumentError(
          absl::StrCat("diagonal ", d, " must have ", order - d, " entries"));
    }
    if (!AllFinite(diagonals[d])) {
      return absl::InvalidArgumentError("banded strategy has non-finite entry");
    }
  }
  for (double v : diagonals[0]) {
    if (!(v > 0.0)) return absl::InvalidArgumentError("nonpositive diagonal");
  }
  return StrategyMatrix(BandedStrategy{order, std::move(diagonals)});
}

absl::StatusOr<StrategyMatrix> StrategyMatrix::Toeplitz(
    int order, std::vector<double> coeffs) {
  if (order < 1) return absl::InvalidArgumentError("order must be >= 1");
  if (coeffs.empty() || static_cast<int>(coeffs.size()) > order) {
    return absl::InvalidArgumentError(
        "toeplitz coefficient count must be in [1, order]");
  }
  if (!AllFinite(coeffs)) {
    return absl::InvalidArgumentError("toeplitz coefficient is not finite");
  }
  if (!(coeffs[0] > 0.0)) {
    return absl::InvalidArgumentError("toeplitz c_0 must be positive");
  }
  return StrategyMatrix(ToeplitzStrategy{order, std::move(coeffs)});
}

absl::StatusOr<StrategyMatrix> StrategyMatrix::Blt(int order,
                                                   std::vector<double> weights,
                                                   std::vector<double> decays) {
  if (order < 1) return absl::InvalidArgumentError("order must be >= 1");
  if (weights.empty() || weights.size() != decays.size()) {
    return absl::InvalidArgumentError(
        "blt needs the same positive number of weights and decays");
  }
  for (size_t m = 0; m < weights.size(); ++m) {
    if (!std::isfinite(weights[m]) || weights[m] < 0.0) {
      return absl::InvalidArgumentError("blt weights must be finite and >= 0");
    }
    if (!(decays[m] > 0.0 && decays[m] < 1.0)) {
      return absl::InvalidArgumentError("blt decays must lie in (0, 1)");
    }
  }
  return StrategyMatrix(
      BltStrategy{order, std::move(weights), std::move(decays)});
}

StrategyMatrix StrategyMatrix::Identity(int order) {
  return StrategyMatrix(ToeplitzStrategy{order, {1.0}});
}

int StrategyMatrix::order() const {
  struct Visitor {
    int operator()(const DenseStrategy& s) const {
      return static_cast<int>(s.entries.rows());
    }
    int operator()(const BandedStrategy& s) const { return s.order; }
    int operator()(const ToeplitzStrategy& s) const { return s.order; }
    int operator()(const BltStrategy& s) const { return s.order; }
  };
  return std::visit(Visitor{}, rep_);
}

StrategyFamily StrategyMatrix::family() const {
  return static_cast<StrategyFamily>(rep_.index());
}

std::vector<double> ExpandBltCoefficients(int order,
                                          std::span<const double> weights,
                                          std::span<const double> decays) {
  std::vector<double> c(order, 0.0);
  c[0] = 1.0;
  for (size_t m = 0; m < weights.size(); ++m) {
    double power = 1.0;  // decay^(k-1)
    for (int k = 1; k < order; ++k) {
      c[k] += weights[m] * power;
      power *= decays[m];
    }
  }
  return c;
}

absl::StatusOr<std::vector<double>> ToeplitzCoefficients(
    const StrategyMatrix& strategy) {
  if (const auto* t = std::get_if<ToeplitzStrategy>(&strategy.representation())) {
    std::vector<double> c(t->order, 0.0);
    std::copy(t->coeffs.begin(), t->coeffs.end(), c.begin());
    return c;
  }
  if (const auto* blt = std::get_if<BltStrategy>(&strategy.representation())) {
    return ExpandBltCoefficients(blt->order, blt->weights, blt->decays);
  }
  return absl::NotFoundError(
      absl::StrCat(FamilyName(strategy.family()), " strategy is not Toeplitz"));
}

Eigen::MatrixXd Materialize(const StrategyMatrix& strategy) {
  const int n = strategy.order();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  const auto& rep = strategy.representation();
  if (const auto* dense = std::get_if<DenseStrategy>(&rep)) {
    return dense->entries;
  }
  if (const auto* banded = std::get_if<BandedStrategy>(&rep)) {
    for (size_t d = 0; d < banded->diagonals.size(); ++d) {
      for (int j = 0; j + static_cast<int>(d) < n; ++j) {
        out(j + d, j) = banded->diagonals[d][j];
      }
    }
    return out;
  }
  const std::vector<double> c = *ToeplitzCoefficients(strategy);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) out(i, j) = c[i - j];
  }
  return out;
}

absl::StatusOr<ModeSet> ModeVectors(const Eigen::MatrixXd& strategy,
                                    const ParticipationSchema& schema) {
  const int n = schema.iterations();
  if (strategy.rows() != n || strategy.cols() != n) {
    return absl::InvalidArgumentError(
        absl::StrCat("strategy order ", strategy.rows(),
                     " does not match schema iterations ", n));
  }
  const int b = schema.batches_per_epoch();
  ModeSet out;
  out.modes = Eigen::MatrixXd::Zero(n, b);
  for (int i = 0; i < b; ++i) {
    for (int epoch = 0; epoch < schema.epochs(); ++epoch) {
      out.modes.col(i) += strategy.col(b * epoch + i).cwiseAbs();
    }
  }
  out.gram = out.modes.transpose() * out.modes;
  return out;
}

absl::StatusOr<ModeSet> ModeVectors(const StrategyMatrix& strategy,
                                    const ParticipationSchema& schema) {
  return ModeVectors(Materialize(strategy), schema);
}

double UnamplifiedSensitivity(const ModeSet& modes) {
  return modes.modes.colwise().norm().maxCoeff();
}

absl::StatusOr<double> UnamplifiedSensitivity(
    const StrategyMatrix& strategy, const ParticipationSchema& schema) {
  absl::StatusOr<ModeSet> modes = ModeVectors(strategy, schema);
  if (!modes.ok()) return modes.status();
  return UnamplifiedSensitivity(*modes);
}

absl::StatusOr<std::vector<double>> ToeplitzInverseCoeffs(
    std::span<const double> coeffs, int order) {
  if (coeffs.empty() || !(coeffs[0] > 0.0)) {
    return absl::InvalidArgumentError("c_0 must be positive");
  }
  if (order < 1) return absl::InvalidArgumentError("order must be >= 1");
  const int len = static_cast<int>(coeffs.size());
  std::vector<double> g(order, 0.0);
  g[0] = 1.0 / coeffs[0];
  for (int k = 1; k < order; ++k) {
    double acc = 0.0;
    for (int j = 1; j <= std::min(k, len - 1); ++j) acc += coeffs[j] * g[k - j];
    g[k] = -acc / coeffs[0];
  }
  return g;
}

absl::StatusOr<double> PrefixErrorNormDense(const Eigen::MatrixXd& strategy) {
  const Eigen::Index n = strategy.rows();
  if (n < 1 || strategy.cols() != n) {
    return absl::InvalidArgumentError("strategy must be square");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(std::abs(strategy(i, i)) > 0.0)) {
      return absl::InvalidArgumentError("singular strategy matrix");
    }
  }
  Eigen::MatrixXd workload = Eigen::MatrixXd::Zero(n, n);
  workload.triangularView<Eigen::Lower>().setOnes();
  // X C = A  <=>  C^T X^T = A^T.
  const Eigen::MatrixXd x = strategy.triangularView<Eigen::Lower>()
                                .transpose()
                                .solve(workload.transpose())
                                .transpose();
  return x.norm();
}

absl::StatusOr<double> PrefixErrorNormToeplitz(std::span<const double> coeffs,
                                               int order) {
  absl::StatusOr<std::vector<double>> g = ToeplitzInverseCoeffs(coeffs, order);
  if (!g.ok()) return g.status();
  double h = 0.0;
  double sum_sq = 0.0;
  for (int k = 0; k < order; ++k) {
    h += (*g)[k];
    sum_sq += static_cast<double>(order - k) * h * h;
  }
  return std::sqrt(sum_sq);
}

absl::StatusOr<double> Rmse(const StrategyMatrix& strategy, double sigma) {
  if (!(sigma > 0.0)) return absl::InvalidArgumentError("sigma must be > 0");
  absl::StatusOr<std::vector<double>> coeffs = ToeplitzCoefficients(strategy);
  absl::StatusOr<double> norm =
      coeffs.ok() ? PrefixErrorNormToeplitz(*coeffs, strategy.order())
                  : PrefixErrorNormDense(Materialize(strategy));
  if (!norm.ok()) return norm.status();
  return sigma * *norm;
}

std::string MatrixFingerprint(const StrategyMatrix& strategy) {
  // FNV-1a over the order and the bit patterns of the row-major entries.
  uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&hash](uint64_t word) {
    for (int byte = 0; byte < 8; ++byte) {
      hash ^= (word >> (8 * byte)) & 0xff;
      hash *= 0x100000001b3ULL;
    }
  };
  const Eigen::MatrixXd m = Materialize(strategy);
  mix(static_cast<uint64_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      mix(std::bit_cast<uint64_t>(m(i, j) + 0.0));
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace corrdp
