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

#include "corrdp/monte_carlo_accountant.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "absl/strings/str_cat.h"
#include "corrdp/gaussian_mechanism.h"
#include "corrdp/parallel.h"

namespace corrdp {
namespace {

constexpr double kEpsilonSearchMax = 128.0;

int64_t NumChunks(int64_t count) {
  return (count + kSampleChunkSize - 1) / kSampleChunkSize;
}

int64_t ChunkLength(int64_t count, int64_t chunk) {
  return std::min(kSampleChunkSize, count - chunk * kSampleChunkSize);
}

// Fills one chunk of draws: a uniform mode index then `width` standard
// normals, optionally mapped through `factor`.
void GenerateChunk(int num_modes, int width, const Eigen::MatrixXd* factor,
                   uint64_t seed, int64_t chunk, int64_t length,
                   int32_t* indices, double* noise) {
  Rng rng = MakeStreamRng(seed, static_cast<uint64_t>(chunk));
  std::uniform_int_distribution<int32_t> pick(0, num_modes - 1);
  std::normal_distribution<double> normal;
  Eigen::VectorXd xi(width);
  for (int64_t j = 0; j < length; ++j) {
    indices[j] = pick(rng);
    for (int k = 0; k < width; ++k) xi[k] = normal(rng);
    Eigen::Map<Eigen::VectorXd> out(noise + j * width, width);
    if (factor != nullptr) {
      out.noalias() = *factor * xi;
    } else {
      out = xi;
    }
  }
}

// Privacy loss of one draw in terms of the Gram matrix.
class LossKernel {
 public:
  LossKernel(const Eigen::MatrixXd& gram, double sigma)
      : num_modes_(static_cast<int>(gram.rows())),
        sigma_(sigma),
        inv_sigma_sq_(1.0 / (sigma * sigma)),
        log_num_modes_(std::log(static_cast<double>(gram.rows()))),
        gram_(num_modes_ * num_modes_),
        half_norm_sq_(num_modes_),
        scratch_(num_modes_) {
    for (int i = 0; i < num_modes_; ++i) {
      for (int j = 0; j < num_modes_; ++j) {
        gram_[i * num_modes_ + j] = gram(i, j);
      }
      half_norm_sq_[i] = 0.5 * gram(i, i);
    }
  }

  // log[(1/b) sum_j exp((x.m_j - |m_j|^2/2) / s^2)], x.m_j = G_ij + s u_j.
  double Add(int mode_index, const double* u) {
    const double* row = gram_.data() + mode_index * num_modes_;
    for (int j = 0; j < num_modes_; ++j) {
      scratch_[j] =
          (row[j] - half_norm_sq_[j] + sigma_ * u[j]) * inv_sigma_sq_;
    }
    return LogMeanExp();
  }

  // -log[(1/b) sum_j exp((s u_j - |m_j|^2/2) / s^2)].
  double Remove(const double* u) {
    for (int j = 0; j < num_modes_; ++j) {
      scratch_[j] = (sigma_ * u[j] - half_norm_sq_[j]) * inv_sigma_sq_;
    }
    return -LogMeanExp();
  }

 private:
  double LogMeanExp() const {
    const double top = *std::max_element(scratch_.begin(), scratch_.end());
    double acc = 0.0;
    for (double a : scratch_) acc += std::exp(a - top);
    return top + std::log(acc) - log_num_modes_;
  }

  int num_modes_;
  double sigma_;
  double inv_sigma_sq_;
  double log_num_modes_;
  std::vector<double> gram_;
  std::vector<double> half_norm_sq_;
  std::vector<double> scratch_;
};

double ClampTerm(double epsilon, double loss) {
  return loss > epsilon ? -std::expm1(epsilon - loss) : 0.0;
}

struct TermStats {
  double sum = 0.0;
  double sum_sq = 0.0;

  void Add(double t) {
    sum += t;
    sum_sq += t * t;
  }
  friend TermStats operator+(const TermStats& a, const TermStats& b) {
    return {a.sum + b.sum, a.sum_sq + b.sum_sq};
  }
};

struct PairStats {
  TermStats add;
  TermStats remove;
  friend PairStats operator+(const PairStats& a, const PairStats& b) {
    return {a.add + b.add, a.remove + b.remove};
  }
};

EstimatorResult Summarize(const TermStats& stats, int64_t count,
                          Adjacency adjacency) {
  EstimatorResult out;
  out.sample_count = count;
  out.adjacency = adjacency;
  const double m = static_cast<double>(count);
  out.delta_hat = std::clamp(stats.sum / m, 0.0, 1.0);
  if (count > 1) {
    const double var =
        std::max(0.0, (stats.sum_sq - m * out.delta_hat * out.delta_hat) /
                          (m - 1.0));
    out.std_error = std::sqrt(var / m);
  }
  return out;
}

AdjacencyEstimates SummarizePair(const PairStats& stats, int64_t count) {
  AdjacencyEstimates out;
  out.add = Summarize(stats.add, count, Adjacency::kAdd);
  out.remove = Summarize(stats.remove, count, Adjacency::kRemove);
  out.both = out.add.delta_hat >= out.remove.delta_hat ? out.add : out.remove;
  return out;
}

absl::Status CheckSigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    return absl::InvalidArgumentError("sigma must be finite and > 0");
  }
  return absl::OkStatus();
}

absl::Status CheckBase(const PldBaseSample& base,
                       const Eigen::MatrixXd& gram) {
  if (gram.rows() != base.num_modes || gram.cols() != base.num_modes) {
    return absl::InvalidArgumentError("gram size does not match base sample");
  }
  if (base.sample_count < 1) {
    return absl::InvalidArgumentError("base sample is empty");
  }
  return absl::OkStatus();
}

// Accumulates the add and/or remove terms of one chunk.
PairStats ChunkStats(double epsilon, double sigma, const PldBaseSample& base,
                     const Eigen::MatrixXd& gram, int64_t chunk, bool add,
                     bool remove) {
  LossKernel kernel(gram, sigma);
  PairStats stats;
  const int64_t begin = chunk * kSampleChunkSize;
  const int64_t end = begin + ChunkLength(base.sample_count, chunk);
  for (int64_t j = begin; j < end; ++j) {
    const double* u = base.projected_noise.data() + j * base.num_modes;
    if (add) stats.add.Add(ClampTerm(epsilon, kernel.Add(base.mode_indices[j], u)));
    if (remove) stats.remove.Add(ClampTerm(epsilon, kernel.Remove(u)));
  }
  return stats;
}

AdjacencyEstimates EstimateUnchecked(double epsilon, double sigma,
                                     const PldBaseSample& base,
                                     const Eigen::MatrixXd& gram, bool add,
                                     bool remove) {
  const int64_t chunks = NumChunks(base.sample_count);
  std::vector<PairStats> partial(chunks);
  ParallelFor(chunks, [&](int64_t c) {
    partial[c] = ChunkStats(epsilon, sigma, base, gram, c, add, remove);
  });
  return SummarizePair(
      PairwiseReduce(std::move(partial),
                     [](const PairStats& a, const PairStats& b) { return a + b; }),
      base.sample_count);
}

EstimatorResult Select(const AdjacencyEstimates& est, Adjacency adjacency) {
  switch (adjacency) {
    case Adjacency::kAdd:
      return est.add;
    case Adjacency::kRemove:
      return est.remove;
    case Adjacency::kBoth:
      return est.both;
  }
  return est.both;
}

EstimatorResult EstimateFor(double epsilon, double sigma,
                            const PldBaseSample& base,
                            const Eigen::MatrixXd& gram, Adjacency adjacency) {
  const bool add = adjacency != Adjacency::kRemove;
  const bool remove = adjacency != Adjacency::kAdd;
  return Select(EstimateUnchecked(epsilon, sigma, base, gram, add, remove),
                adjacency);
}

}  // namespace

std::string AdjacencyName(Adjacency adjacency) {
  switch (adjacency) {
    case Adjacency::kAdd:
      return "add";
    case Adjacency::kRemove:
      return "remove";
    case Adjacency::kBoth:
      return "both";
  }
  return "unknown";
}

absl::StatusOr<Adjacency> ParseAdjacency(const std::string& name) {
  if (name == "add") return Adjacency::kAdd;
  if (name == "remove") return Adjacency::kRemove;
  if (name == "both") return Adjacency::kBoth;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown adjacency '", name, "'"));
}

absl::Status PrivacyParams::Validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    return absl::InvalidArgumentError("epsilon must be finite and >= 0");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    return absl::InvalidArgumentError("delta must lie in (0, 1)");
  }
  return absl::OkStatus();
}

absl::StatusOr<Eigen::MatrixXd> GramFactor(const Eigen::MatrixXd& gram) {
  if (gram.rows() != gram.cols() || gram.rows() < 1) {
    return absl::InvalidArgumentError("gram must be square and non-empty");
  }
  if (!gram.allFinite()) {
    return absl::InvalidArgumentError("gram matrix is not finite");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() == Eigen::Success) return Eigen::MatrixXd(llt.matrixL());
  const double jitter = 1e-12 * gram.trace() / static_cast<double>(gram.rows());
  Eigen::MatrixXd jittered = gram;
  jittered.diagonal().array() += jitter;
  llt.compute(jittered);
  if (llt.info() == Eigen::Success) return Eigen::MatrixXd(llt.matrixL());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return Eigen::MatrixXd(eig.eigenvectors() * root.asDiagonal() *
                         eig.eigenvectors().transpose());
}

absl::StatusOr<PldBaseSample> DrawBaseSample(const ModeSet& modes,
                                             int64_t sample_count,
                                             uint64_t seed) {
  if (sample_count < 1) {
    return absl::InvalidArgumentError("sample_count must be >= 1");
  }
  absl::StatusOr<Eigen::MatrixXd> factor = GramFactor(modes.gram);
  if (!factor.ok()) return factor.status();
  PldBaseSample out;
  out.num_modes = modes.num_modes();
  out.sample_count = sample_count;
  out.seed = seed;
  out.mode_indices.resize(sample_count);
  out.projected_noise.resize(sample_count * out.num_modes);
  ParallelFor(NumChunks(sample_count), [&](int64_t c) {
    const int64_t begin = c * kSampleChunkSize;
    GenerateChunk(out.num_modes, out.num_modes, &*factor, seed, c,
                  ChunkLength(sample_count, c), out.mode_indices.data() + begin,
                  out.projected_noise.data() + begin * out.num_modes);
  });
  return out;
}

absl::StatusOr<FullDimensionalSample> DrawFullDimensionalSample(
    int dimension, int num_modes, int64_t sample_count, uint64_t seed) {
  if (dimension < 1 || num_modes < 1 || sample_count < 1) {
    return absl::InvalidArgumentError(
        "dimension, num_modes and sample_count must be >= 1");
  }
  FullDimensionalSample out;
  out.dimension = dimension;
  out.num_modes = num_modes;
  out.sample_count = sample_count;
  out.seed = seed;
  out.mode_indices.resize(sample_count);
  out.noise.resize(sample_count * dimension);
  ParallelFor(NumChunks(sample_count), [&](int64_t c) {
    const int64_t begin = c * kSampleChunkSize;
    GenerateChunk(num_modes, dimension, nullptr, seed, c,
                  ChunkLength(sample_count, c), out.mode_indices.data() + begin,
                  out.noise.data() + begin * dimension);
  });
  return out;
}

absl::StatusOr<PldBaseSample> ProjectOntoModes(
    const FullDimensionalSample& sample, const ModeSet& modes) {
  if (modes.dimension() != sample.dimension ||
      modes.num_modes() != sample.num_modes) {
    return absl::InvalidArgumentError("mode set does not match the sample");
  }
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  PldBaseSample out;
  out.num_modes = sample.num_modes;
  out.sample_count = sample.sample_count;
  out.seed = sample.seed;
  out.mode_indices = sample.mode_indices;
  out.projected_noise.resize(sample.sample_count * sample.num_modes);
  ParallelFor(NumChunks(sample.sample_count), [&](int64_t c) {
    const int64_t begin = c * kSampleChunkSize;
    const int64_t len = ChunkLength(sample.sample_count, c);
    Eigen::Map<const RowMajor> z(sample.noise.data() + begin * sample.dimension,
                                 len, sample.dimension);
    Eigen::Map<RowMajor> u(out.projected_noise.data() + begin * out.num_modes,
                           len, out.num_modes);
    u.noalias() = z * modes.modes;
  });
  return out;
}

absl::StatusOr<double> LogDensityRatio(int mode_index,
                                       std::span<const double> u, double sigma,
                                       const Eigen::MatrixXd& gram,
                                       Adjacency adjacency) {
  if (absl::Status s = CheckSigma(sigma); !s.ok()) return s;
  const int b = static_cast<int>(gram.rows());
  if (gram.cols() != b || static_cast<int>(u.size()) != b) {
    return absl::InvalidArgumentError("u and gram sizes disagree");
  }
  if (mode_index < 0 || mode_index >= b) {
    return absl::OutOfRangeError("mode index out of range");
  }
  LossKernel kernel(gram, sigma);
  switch (adjacency) {
    case Adjacency::kAdd:
      return kernel.Add(mode_index, u.data());
    case Adjacency::kRemove:
      return kernel.Remove(u.data());
    case Adjacency::kBoth:
      break;
  }
  return absl::InvalidArgumentError(
      "a single privacy loss needs the add or remove adjacency");
}

absl::StatusOr<EstimatorResult> EstimateDelta(double epsilon, double sigma,
                                              const PldBaseSample& base,
                                              const Eigen::MatrixXd& gram,
                                              Adjacency adjacency) {
  if (absl::Status s = CheckSigma(sigma); !s.ok()) return s;
  if (absl::Status s = CheckBase(base, gram); !s.ok()) return s;
  return EstimateFor(epsilon, sigma, base, gram, adjacency);
}

absl::StatusOr<AdjacencyEstimates> EstimateDeltaPerAdjacency(
    double epsilon, double sigma, const PldBaseSample& base,
    const Eigen::MatrixXd& gram) {
  if (absl::Status s = CheckSigma(sigma); !s.ok()) return s;
  if (absl::Status s = CheckBase(base, gram); !s.ok()) return s;
  return EstimateUnchecked(epsilon, sigma, base, gram, true, true);
}

absl::StatusOr<AdjacencyEstimates> EstimateDeltaStreaming(
    double epsilon, double sigma, const ModeSet& modes, int64_t sample_count,
    uint64_t seed) {
  if (absl::Status s = CheckSigma(sigma); !s.ok()) return s;
  if (sample_count < 1) {
    return absl::InvalidArgumentError("sample_count must be >= 1");
  }
  absl::StatusOr<Eigen::MatrixXd> factor = GramFactor(modes.gram);
  if (!factor.ok()) return factor.status();
  const int b = modes.num_modes();
  const int64_t chunks = NumChunks(sample_count);
  std::vector<PairStats> partial(chunks);
  ParallelFor(chunks, [&](int64_t c) {
    const int64_t len = ChunkLength(sample_count, c);
    PldBaseSample piece;
    piece.num_modes = b;
    piece.sample_count = len;
    piece.mode_indices.resize(len);
    piece.projected_noise.resize(len * b);
    GenerateChunk(b, b, &*factor, seed, c, len, piece.mode_indices.data(),
                  piece.projected_noise.data());
    partial[c] = ChunkStats(epsilon, sigma, piece, modes.gram, 0, true, true);
  });
  return SummarizePair(
      PairwiseReduce(std::move(partial),
                     [](const PairStats& a, const PairStats& b) { return a + b; }),
      sample_count);
}

absl::StatusOr<double> BernsteinFailureProb(double samples, double tau,
                                            double delta) {
  if (!(tau > 1.0)) return absl::InvalidArgumentError("tau must be > 1");
  if (!(delta > 0.0 && delta < 1.0)) {
    return absl::InvalidArgumentError("delta must lie in (0, 1)");
  }
  if (!(samples >= 0.0)) {
    return absl::InvalidArgumentError("sample count must be >= 0");
  }
  const double gap = tau - 1.0;
  return std::exp(-samples * gap * gap * delta /
                  (8.0 * tau / 3.0 - 2.0 / 3.0));
}

EvrDecision EvrGate(const PrivacyParams& target, double delta_hat) {
  return delta_hat <= target.delta ? EvrDecision::kProceed
                                   : EvrDecision::kAbort;
}

PrivacyParams ReleasedGuarantee(const PrivacyParams& target, double tau) {
  return {.epsilon = target.epsilon, .delta = tau * target.delta};
}

absl::StatusOr<CalibrationResult> CalibrateSigmaOnSample(
    double epsilon, double target_delta, const PldBaseSample& base,
    const Eigen::MatrixXd& gram, double sigma_lo, double sigma_hi,
    const CalibrationOptions& options) {
  if (absl::Status s = CheckBase(base, gram); !s.ok()) return s;
  if (!(sigma_lo > 0.0 && sigma_lo < sigma_hi) || !std::isfinite(sigma_hi)) {
    return absl::InvalidArgumentError("need 0 < sigma_lo < sigma_hi");
  }
  if (!(target_delta > 0.0 && target_delta < 1.0)) {
    return absl::InvalidArgumentError("target delta must lie in (0, 1)");
  }
  auto delta_at = [&](double sigma) {
    return EstimateFor(epsilon, sigma, base, gram, options.adjacency);
  };
  CalibrationResult out;
  out.delta_prime = target_delta;
  out.bracket_lo = sigma_lo;
  double lo = sigma_lo;
  double hi = sigma_hi;
  EstimatorResult at_hi = delta_at(hi);
  while (at_hi.delta_hat > target_delta) {
    if (out.bracket_expansions == options.max_bracket_expansions) {
      return absl::FailedPreconditionError(absl::StrCat(
          "bracket does not straddle delta' = ", target_delta,
          ": delta_hat(", hi, ") = ", at_hi.delta_hat));
    }
    lo = hi;
    hi *= 2.0;
    ++out.bracket_expansions;
    at_hi = delta_at(hi);
  }
  if (out.bracket_expansions == 0 && delta_at(lo).delta_hat <= target_delta) {
    return absl::FailedPreconditionError(absl::StrCat(
        "bracket does not straddle delta' = ", target_delta,
        ": delta_hat at the lower end ", lo, " is already below it"));
  }
  out.bracket_hi = hi;
  while (out.iterations < options.max_iterations &&
         hi - lo > options.relative_tolerance * hi) {
    const double mid = 0.5 * (lo + hi);
    const EstimatorResult at_mid = delta_at(mid);
    if (at_mid.delta_hat > target_delta) {
      lo = mid;
    } else {
      hi = mid;
      at_hi = at_mid;
    }
    ++out.iterations;
  }
  out.sigma = hi;
  out.estimate = at_hi;
  return out;
}

absl::StatusOr<CalibrationResult> CalibrateSigma(
    double epsilon, double delta, const StrategyMatrix& strategy,
    const ParticipationSchema& schema, int64_t sample_count, uint64_t seed,
    const CalibrationOptions& options) {
  const PrivacyParams target{.epsilon = epsilon, .delta = delta};
  if (absl::Status s = target.Validate(); !s.ok()) return s;
  if (!(options.tau >= 1.0)) return absl::InvalidArgumentError("tau < 1");
  const double delta_prime = delta / options.tau;
  absl::StatusOr<ModeSet> modes = ModeVectors(strategy, schema);
  if (!modes.ok()) return modes.status();
  absl::StatusOr<double> sigma_max = CalibrateGaussianSigma(
      epsilon, delta_prime, UnamplifiedSensitivity(*modes));
  if (!sigma_max.ok()) return sigma_max.status();
  absl::StatusOr<PldBaseSample> base =
      DrawBaseSample(*modes, sample_count, seed);
  if (!base.ok()) return base.status();
  absl::StatusOr<CalibrationResult> result =
      CalibrateSigmaOnSample(epsilon, delta_prime, *base, modes->gram,
                             1e-6 * *sigma_max, *sigma_max, options);
  if (!result.ok()) return result.status();
  result->sigma_max = *sigma_max;
  return result;
}

absl::StatusOr<double> EstimateEpsilon(double delta, double sigma,
                                       const PldBaseSample& base,
                                       const Eigen::MatrixXd& gram,
                                       Adjacency adjacency,
                                       double relative_tolerance) {
  if (absl::Status s = CheckSigma(sigma); !s.ok()) return s;
  if (absl::Status s = CheckBase(base, gram); !s.ok()) return s;
  if (!(delta > 0.0 && delta < 1.0)) {
    return absl::InvalidArgumentError("delta must lie in (0, 1)");
  }
  // The losses do not depend on epsilon; compute them once.
  const bool use_add = adjacency != Adjacency::kRemove;
  const bool use_remove = adjacency != Adjacency::kAdd;
  std::vector<double> add_loss(use_add ? base.sample_count : 0);
  std::vector<double> remove_loss(use_remove ? base.sample_count : 0);
  const int64_t chunks = NumChunks(base.sample_count);
  ParallelFor(chunks, [&](int64_t c) {
    LossKernel kernel(gram, sigma);
    const int64_t begin = c * kSampleChunkSize;
    const int64_t end = begin + ChunkLength(base.sample_count, c);
    for (int64_t j = begin; j < end; ++j) {
      const double* u = base.projected_noise.data() + j * base.num_modes;
      if (use_add) add_loss[j] = kernel.Add(base.mode_indices[j], u);
      if (use_remove) remove_loss[j] = kernel.Remove(u);
    }
  });
  auto delta_at = [&](double eps) {
    std::vector<PairStats> partial(chunks);
    ParallelFor(chunks, [&](int64_t c) {
      const int64_t begin = c * kSampleChunkSize;
      const int64_t end = begin + ChunkLength(base.sample_count, c);
      for (int64_t j = begin; j < end; ++j) {
        if (use_add) partial[c].add.Add(ClampTerm(eps, add_loss[j]));
        if (use_remove) partial[c].remove.Add(ClampTerm(eps, remove_loss[j]));
      }
    });
    const AdjacencyEstimates est = SummarizePair(
        PairwiseReduce(std::move(partial), [](const PairStats& a,
                                              const PairStats& b) {
          return a + b;
        }),
        base.sample_count);
    return Select(est, adjacency).delta_hat;
  };
  double lo = 0.0;
  double hi = kEpsilonSearchMax;
  if (delta_at(lo) < delta || delta_at(hi) > delta) {
    return absl::OutOfRangeError(absl::StrCat(
        "target delta ", delta, " outside the achievable range on [0, ",
        kEpsilonSearchMax, "]"));
  }
  for (int iter = 0; iter < 200; ++iter) {
    if (hi - lo <= relative_tolerance * hi || hi - lo < 1e-12) break;
    const double mid = 0.5 * (lo + hi);
    if (delta_at(mid) > delta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

}  // namespace corrdp
