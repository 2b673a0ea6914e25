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

#include "corrdp/strategy_optimizer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <boost/math/tools/toms748_solve.hpp>

#include "absl/strings/str_cat.h"
#include "corrdp/gaussian_mechanism.h"
#include "corrdp/parallel.h"

namespace corrdp {
namespace {

constexpr int kMaxHalvings = 10;
constexpr int kMaxConsecutiveRejections = 10;
constexpr double kDecayMargin = 1e-3;
// Stream index of the final verification sample, disjoint from step indices.
constexpr uint64_t kFinalStream = uint64_t{1} << 62;

double SignOf(double c) { return c < 0.0 ? -1.0 : 1.0; }

double Norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

// Running sums for one adjacency over a chunk of draws.
struct GradientStats {
  double sum = 0.0;
  double sum_sq = 0.0;
  double d_sigma = 0.0;
  std::vector<double> d_coeffs;

  friend GradientStats operator+(const GradientStats& a,
                                 const GradientStats& b) {
    GradientStats out{a.sum + b.sum, a.sum_sq + b.sum_sq,
                      a.d_sigma + b.d_sigma, a.d_coeffs};
    if (out.d_coeffs.empty()) out.d_coeffs.assign(b.d_coeffs.size(), 0.0);
    for (size_t k = 0; k < b.d_coeffs.size(); ++k) {
      out.d_coeffs[k] += b.d_coeffs[k];
    }
    return out;
  }
};

struct ChunkGradients {
  GradientStats add;
  GradientStats remove;
  friend ChunkGradients operator+(const ChunkGradients& a,
                                  const ChunkGradients& b) {
    return {a.add + b.add, a.remove + b.remove};
  }
};

EstimatorResult Summarize(const GradientStats& stats, int64_t count,
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

// Softmax weights of `a` in place; returns log((1/b) sum exp(a)).
double SoftmaxInPlace(std::vector<double>& a) {
  const double top = *std::max_element(a.begin(), a.end());
  double total = 0.0;
  for (double& x : a) {
    x = std::exp(x - top);
    total += x;
  }
  for (double& x : a) x /= total;
  return top + std::log(total / static_cast<double>(a.size()));
}

}  // namespace

absl::StatusOr<DeltaPartials> DeltaHatPartials(
    double epsilon, double sigma, std::span<const double> coeffs,
    const ParticipationSchema& schema, const FullDimensionalSample& sample,
    Adjacency adjacency) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    return absl::InvalidArgumentError("sigma must be finite and > 0");
  }
  const int n = schema.iterations();
  const int b = schema.batches_per_epoch();
  if (static_cast<int>(coeffs.size()) != n) {
    return absl::InvalidArgumentError("need one coefficient per iteration");
  }
  if (sample.dimension != n || sample.num_modes != b ||
      sample.sample_count < 1) {
    return absl::InvalidArgumentError("sample does not match the schema");
  }
  absl::StatusOr<StrategyMatrix> strategy =
      StrategyMatrix::Toeplitz(n, {coeffs.begin(), coeffs.end()});
  if (!strategy.ok()) return strategy.status();
  absl::StatusOr<ModeSet> modes = ModeVectors(*strategy, schema);
  if (!modes.ok()) return modes.status();
  const Eigen::MatrixXd& m = modes->modes;
  const Eigen::MatrixXd& gram = modes->gram;

  // r(j, k) = sum_e m_j[b e + k], so that
  // dG_ij / dc_d = s_d (r(j, i + d) + r(i, j + d)).
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(b, n);
  for (int j = 0; j < b; ++j) {
    for (int k = n - 1; k >= 0; --k) {
      r(j, k) = m(k, j) + (k + b < n ? r(j, k + b) : 0.0);
    }
  }
  std::vector<double> sign(n);
  for (int d = 0; d < n; ++d) sign[d] = SignOf(coeffs[d]);

  const bool use_add = adjacency != Adjacency::kRemove;
  const bool use_remove = adjacency != Adjacency::kAdd;
  const double inv_sq = 1.0 / (sigma * sigma);
  const double inv_cube = inv_sq / sigma;
  const int64_t count = sample.sample_count;
  const int64_t chunks = (count + kSampleChunkSize - 1) / kSampleChunkSize;
  std::vector<ChunkGradients> partial(chunks);

  ParallelFor(chunks, [&](int64_t c) {
    ChunkGradients& out = partial[c];
    out.add.d_coeffs.assign(n, 0.0);
    out.remove.d_coeffs.assign(n, 0.0);
    std::vector<double> u(b);
    std::vector<double> t(n);
    std::vector<double> w(b);
    std::vector<double> dy(n);
    const int64_t begin = c * kSampleChunkSize;
    const int64_t end = std::min(count, begin + kSampleChunkSize);
    for (int64_t s = begin; s < end; ++s) {
      const std::span<const double> z = sample.z(s);
      // t[k] = sum_e z[b e + k] = d u_j / d|c|_d with k = j + d.
      for (int k = n - 1; k >= 0; --k) {
        t[k] = z[k] + (k + b < n ? t[k + b] : 0.0);
      }
      for (int j = 0; j < b; ++j) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) acc += z[k] * m(k, j);
        u[j] = acc;
      }
      if (use_add) {
        const int i = sample.mode_indices[s];
        for (int j = 0; j < b; ++j) {
          w[j] = (gram(i, j) - 0.5 * gram(j, j) + sigma * u[j]) * inv_sq;
        }
        const double y = SoftmaxInPlace(w);
        if (y > epsilon) {
          const double weight = std::exp(epsilon - y);
          const double term = -std::expm1(epsilon - y);
          out.add.sum += term;
          out.add.sum_sq += term * term;
          std::fill(dy.begin(), dy.end(), 0.0);
          double dy_sigma = 0.0;
          for (int j = 0; j < b; ++j) {
            const double p = w[j];
            dy_sigma += p * (-2.0 * (gram(i, j) - 0.5 * gram(j, j)) * inv_cube -
                             u[j] * inv_sq);
            for (int d = 0; d + std::min(i, j) < n; ++d) {
              double g = 0.0;
              if (i + d < n) g += r(j, i + d);
              if (j + d < n) g += r(i, j + d) - r(j, j + d) + sigma * t[j + d];
              dy[d] += p * g;
            }
          }
          out.add.d_sigma += weight * dy_sigma;
          for (int d = 0; d < n; ++d) {
            out.add.d_coeffs[d] += weight * sign[d] * dy[d] * inv_sq;
          }
        }
      }
      if (use_remove) {
        for (int j = 0; j < b; ++j) {
          w[j] = (sigma * u[j] - 0.5 * gram(j, j)) * inv_sq;
        }
        const double y = -SoftmaxInPlace(w);
        if (y > epsilon) {
          const double weight = std::exp(epsilon - y);
          const double term = -std::expm1(epsilon - y);
          out.remove.sum += term;
          out.remove.sum_sq += term * term;
          std::fill(dy.begin(), dy.end(), 0.0);
          double dy_sigma = 0.0;
          for (int j = 0; j < b; ++j) {
            const double p = w[j];
            dy_sigma -= p * (-u[j] * inv_sq + gram(j, j) * inv_cube);
            for (int d = 0; j + d < n; ++d) {
              dy[d] -= p * (sigma * t[j + d] - r(j, j + d));
            }
          }
          out.remove.d_sigma += weight * dy_sigma;
          for (int d = 0; d < n; ++d) {
            out.remove.d_coeffs[d] += weight * sign[d] * dy[d] * inv_sq;
          }
        }
      }
    }
  });

  const ChunkGradients total = PairwiseReduce(
      std::move(partial),
      [](const ChunkGradients& a, const ChunkGradients& b) { return a + b; });
  const EstimatorResult add = Summarize(total.add, count, Adjacency::kAdd);
  const EstimatorResult remove =
      Summarize(total.remove, count, Adjacency::kRemove);
  bool pick_add = adjacency == Adjacency::kAdd;
  if (adjacency == Adjacency::kBoth) pick_add = add.delta_hat >= remove.delta_hat;
  const GradientStats& chosen = pick_add ? total.add : total.remove;
  DeltaPartials out;
  out.estimate = pick_add ? add : remove;
  const double inv_m = 1.0 / static_cast<double>(count);
  out.d_sigma = chosen.d_sigma * inv_m;
  out.d_coeffs.assign(n, 0.0);
  for (int d = 0; d < n && d < static_cast<int>(chosen.d_coeffs.size()); ++d) {
    out.d_coeffs[d] = chosen.d_coeffs[d] * inv_m;
  }
  return out;
}

absl::StatusOr<std::vector<double>> ImplicitSigmaGradient(
    const DeltaPartials& partials, double target_delta, double sigma) {
  if (!(sigma > 0.0)) return absl::InvalidArgumentError("sigma must be > 0");
  if (!(partials.d_sigma < 0.0) ||
      std::abs(partials.d_sigma) < kDecayMargin * target_delta / sigma) {
    return absl::FailedPreconditionError(absl::StrCat(
        "degenerate constraint: d delta_hat / d sigma = ", partials.d_sigma));
  }
  std::vector<double> out(partials.d_coeffs.size());
  for (size_t k = 0; k < out.size(); ++k) {
    out[k] = -partials.d_coeffs[k] / partials.d_sigma;
  }
  return out;
}

absl::StatusOr<std::vector<double>> PrefixErrorNormGradient(
    std::span<const double> coeffs, int order) {
  absl::StatusOr<std::vector<double>> g = ToeplitzInverseCoeffs(coeffs, order);
  if (!g.ok()) return g.status();
  const int n = order;
  std::vector<double> h(n);
  double running = 0.0;
  double norm_sq = 0.0;
  for (int k = 0; k < n; ++k) {
    running += (*g)[k];
    h[k] = running;
    norm_sq += (n - k) * h[k] * h[k];
  }
  const double norm = std::sqrt(norm_sq);
  // d g / d c_d = -(g * g) shifted by d; d h_k / d c_d = -q_cum[k - d].
  std::vector<double> q_cum(n, 0.0);
  running = 0.0;
  for (int k = 0; k < n; ++k) {
    double q = 0.0;
    for (int j = 0; j <= k; ++j) q += (*g)[j] * (*g)[k - j];
    running += q;
    q_cum[k] = running;
  }
  std::vector<double> out(n, 0.0);
  for (int d = 0; d < n; ++d) {
    double acc = 0.0;
    for (int k = d; k < n; ++k) acc += (n - k) * h[k] * q_cum[k - d];
    out[d] = -acc / norm;
  }
  return out;
}

absl::StatusOr<std::vector<double>> RmseGradient(
    std::span<const double> coeffs, int order, double sigma,
    std::span<const double> sigma_gradient) {
  if (static_cast<int>(sigma_gradient.size()) != order) {
    return absl::InvalidArgumentError("sigma gradient has the wrong size");
  }
  absl::StatusOr<double> norm = PrefixErrorNormToeplitz(coeffs, order);
  if (!norm.ok()) return norm.status();
  absl::StatusOr<std::vector<double>> d_norm =
      PrefixErrorNormGradient(coeffs, order);
  if (!d_norm.ok()) return d_norm.status();
  std::vector<double> out(order);
  for (int k = 0; k < order; ++k) {
    out[k] = sigma * (*d_norm)[k] + *norm * sigma_gradient[k];
  }
  return out;
}

StrategyParameterization StrategyParameterization::Toeplitz(int order) {
  return StrategyParameterization(OptimizerFamily::kToeplitz, order, 0);
}

StrategyParameterization StrategyParameterization::Blt(int order,
                                                       int buffers) {
  return StrategyParameterization(OptimizerFamily::kBlt, order, buffers);
}

int StrategyParameterization::num_params() const {
  return family_ == OptimizerFamily::kToeplitz ? order_ - 1 : 2 * buffers_;
}

std::vector<double> StrategyParameterization::DefaultInitialization() const {
  if (family_ == OptimizerFamily::kToeplitz) {
    return std::vector<double>(num_params(), 0.0);
  }
  std::vector<double> params(num_params());
  for (int m = 0; m < buffers_; ++m) {
    params[m] = 0.1;
    params[buffers_ + m] = 0.3 + 0.6 * (m + 1) / (buffers_ + 1);
  }
  return params;
}

std::vector<double> StrategyParameterization::Coefficients(
    std::span<const double> params) const {
  if (family_ == OptimizerFamily::kToeplitz) {
    std::vector<double> coeffs(order_);
    coeffs[0] = 1.0;
    std::copy(params.begin(), params.end(), coeffs.begin() + 1);
    return coeffs;
  }
  return ExpandBltCoefficients(order_, params.first(buffers_),
                               params.subspan(buffers_, buffers_));
}

std::vector<double> StrategyParameterization::PullBack(
    std::span<const double> params,
    std::span<const double> coeff_gradient) const {
  if (family_ == OptimizerFamily::kToeplitz) {
    return {coeff_gradient.begin() + 1, coeff_gradient.end()};
  }
  std::vector<double> out(num_params(), 0.0);
  for (int m = 0; m < buffers_; ++m) {
    const double weight = params[m];
    const double decay = params[buffers_ + m];
    double power = 1.0;  // decay^(k - 1)
    double d_power = 0.0;  // (k - 1) decay^(k - 2)
    for (int k = 1; k < order_; ++k) {
      out[m] += coeff_gradient[k] * power;
      out[buffers_ + m] += coeff_gradient[k] * weight * d_power;
      d_power = d_power * decay + power;
      power *= decay;
    }
  }
  return out;
}

std::vector<double> StrategyParameterization::Project(
    std::span<const double> params) const {
  std::vector<double> out(params.begin(), params.end());
  if (family_ == OptimizerFamily::kToeplitz) {
    for (double& c : out) c = std::max(c, 0.0);
    return out;
  }
  for (int m = 0; m < buffers_; ++m) {
    out[m] = std::max(out[m], 0.0);
    out[buffers_ + m] = std::clamp(out[buffers_ + m], 1e-3, 1.0 - 1e-3);
  }
  return out;
}

absl::Status StrategyParameterization::CheckParams(
    std::span<const double> params) const {
  if (static_cast<int>(params.size()) != num_params()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "expected ", num_params(), " parameters, got ", params.size()));
  }
  for (double p : params) {
    if (!std::isfinite(p)) {
      return absl::InvalidArgumentError("parameters must be finite");
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<StrategyMatrix> StrategyParameterization::ToStrategy(
    std::span<const double> params) const {
  if (absl::Status s = CheckParams(params); !s.ok()) return s;
  if (family_ == OptimizerFamily::kToeplitz) {
    return StrategyMatrix::Toeplitz(order_, Coefficients(params));
  }
  return StrategyMatrix::Blt(
      order_, {params.begin(), params.begin() + buffers_},
      {params.begin() + buffers_, params.end()});
}

absl::StatusOr<double> SolveSigmaOnSample(double epsilon, double target_delta,
                                          const PldBaseSample& base,
                                          const Eigen::MatrixXd& gram,
                                          double sigma_lo, double sigma_hi,
                                          Adjacency adjacency,
                                          double relative_tolerance) {
  if (!(sigma_lo > 0.0 && sigma_lo < sigma_hi) || !std::isfinite(sigma_hi)) {
    return absl::InvalidArgumentError("need 0 < sigma_lo < sigma_hi");
  }
  absl::Status error;
  auto excess = [&](double sigma) {
    absl::StatusOr<EstimatorResult> r =
        EstimateDelta(epsilon, sigma, base, gram, adjacency);
    if (!r.ok()) {
      error = r.status();
      return 0.0;
    }
    return r->delta_hat - target_delta;
  };
  double f_lo = excess(sigma_lo);
  double f_hi = excess(sigma_hi);
  for (int i = 0; i < 60 && f_hi > 0.0 && error.ok(); ++i) {
    sigma_lo = sigma_hi;
    f_lo = f_hi;
    sigma_hi *= 2.0;
    f_hi = excess(sigma_hi);
  }
  for (int i = 0; i < 60 && f_lo <= 0.0 && error.ok(); ++i) {
    sigma_hi = sigma_lo;
    f_hi = f_lo;
    sigma_lo *= 0.5;
    f_lo = excess(sigma_lo);
  }
  if (!error.ok()) return error;
  if (f_hi > 0.0 || f_lo <= 0.0) {
    return absl::FailedPreconditionError(
        "could not bracket delta_hat(sigma) = target");
  }
  boost::uintmax_t max_iter = 200;
  const auto tolerance = [relative_tolerance](double a, double b) {
    return std::abs(b - a) <= relative_tolerance * std::max(a, b);
  };
  const std::pair<double, double> root =
      boost::math::tools::toms748_solve(excess, sigma_lo, sigma_hi, f_lo, f_hi,
                                        tolerance, max_iter);
  if (!error.ok()) return error;
  // The upper end satisfies delta_hat <= target unless the bracket closed
  // on an exact root at the lower end.
  return excess(root.second) <= 0.0 ? root.second : root.first;
}

absl::Status OptimizerConfig::Validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    return absl::InvalidArgumentError("epsilon must be finite and >= 0");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    return absl::InvalidArgumentError("delta must lie in (0, 1)");
  }
  if (!(tau >= 1.0)) return absl::InvalidArgumentError("tau must be >= 1");
  if (batches_per_epoch < 1 || epochs < 1) {
    return absl::InvalidArgumentError("schema sizes must be >= 1");
  }
  if (steps < 0) return absl::InvalidArgumentError("steps must be >= 0");
  if (!(learning_rate > 0.0)) {
    return absl::InvalidArgumentError("learning_rate must be > 0");
  }
  if (samples_per_step < 1 || final_sample_count < samples_per_step) {
    return absl::InvalidArgumentError(
        "need 1 <= samples_per_step <= final_sample_count");
  }
  if (family == OptimizerFamily::kBlt && buffers < 1) {
    return absl::InvalidArgumentError("blt needs at least one buffer");
  }
  return absl::OkStatus();
}

namespace {

struct Evaluation {
  std::vector<double> coeffs;
  ModeSet modes;
  double sigma = 0.0;
  double norm = 0.0;
  double objective = 0.0;
};

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, ParticipationSchema schema)
      : config_(config),
        schema_(schema),
        param_(config.family == OptimizerFamily::kToeplitz
                   ? StrategyParameterization::Toeplitz(schema.iterations())
                   : StrategyParameterization::Blt(schema.iterations(),
                                                   config.buffers)),
        delta_prime_(config.delta / config.tau) {}

  const StrategyParameterization& parameterization() const { return param_; }

  absl::Status Run(std::vector<double>& params, OptimizationTrace& trace) {
    FullDimensionalSample sample;
    Evaluation current;
    double step_size = config_.learning_rate;
    int rejections = 0;
    trace.stop_reason = "completed all steps";
    for (int step = 0; step < config_.steps; ++step) {
      if (step == 0 || config_.resample_each_step) {
        absl::StatusOr<FullDimensionalSample> drawn = DrawFullDimensionalSample(
            schema_.iterations(), schema_.batches_per_epoch(),
            config_.samples_per_step,
            StreamSeed(config_.seed, static_cast<uint64_t>(step)));
        if (!drawn.ok()) return drawn.status();
        sample = *std::move(drawn);
        absl::StatusOr<Evaluation> eval =
            Evaluate(params, sample, step == 0 ? 0.0 : current.sigma);
        if (!eval.ok()) return eval.status();
        current = *std::move(eval);
      }
      if (step == 0) {
        trace.initial_sigma = current.sigma;
        trace.initial_rmse = current.objective;
      }
      StepRecord record{.step = step,
                        .rmse = current.objective,
                        .sigma = current.sigma,
                        .candidate_rmse = current.objective};
      absl::StatusOr<std::vector<double>> gradient =
          Gradient(params, current, sample);
      if (!gradient.ok()) {
        if (gradient.status().code() != absl::StatusCode::kFailedPrecondition) {
          return gradient.status();
        }
        record.degenerate = true;
      } else {
        record.gradient_norm = Norm(*gradient);
        double lr = step_size;
        for (int h = 0; h <= kMaxHalvings; ++h, lr *= 0.5) {
          std::vector<double> candidate(params.size());
          for (size_t k = 0; k < params.size(); ++k) {
            candidate[k] = params[k] - lr * (*gradient)[k];
          }
          candidate = param_.Project(candidate);
          absl::StatusOr<Evaluation> eval =
              Evaluate(candidate, sample, current.sigma);
          if (!eval.ok()) return eval.status();
          if (eval->objective < current.objective) {
            record.accepted = true;
            record.halvings = h;
            record.step_size = lr;
            record.candidate_rmse = eval->objective;
            params = std::move(candidate);
            current = *std::move(eval);
            // Grow the step when the first trial already succeeded.
            step_size = h == 0 ? 2.0 * lr : lr;
            break;
          }
        }
      }
      trace.steps.push_back(record);
      rejections = record.accepted ? 0 : rejections + 1;
      if (rejections >= kMaxConsecutiveRejections) {
        trace.stop_reason = "no accepted step in 10 consecutive iterations";
        break;
      }
    }
    return absl::OkStatus();
  }

 private:
  absl::StatusOr<Evaluation> Evaluate(std::span<const double> params,
                                      const FullDimensionalSample& sample,
                                      double sigma_hint) {
    Evaluation out;
    out.coeffs = param_.Coefficients(params);
    absl::StatusOr<StrategyMatrix> strategy = param_.ToStrategy(params);
    if (!strategy.ok()) return strategy.status();
    absl::StatusOr<ModeSet> modes = ModeVectors(*strategy, schema_);
    if (!modes.ok()) return modes.status();
    out.modes = *std::move(modes);
    absl::StatusOr<PldBaseSample> base = ProjectOntoModes(sample, out.modes);
    if (!base.ok()) return base.status();
    double lo = 0.0;
    double hi = 0.0;
    if (sigma_hint > 0.0) {
      lo = 0.8 * sigma_hint;
      hi = 1.25 * sigma_hint;
    } else {
      absl::StatusOr<double> sigma_max = CalibrateGaussianSigma(
          config_.epsilon, delta_prime_, UnamplifiedSensitivity(out.modes));
      if (!sigma_max.ok()) return sigma_max.status();
      lo = 1e-6 * *sigma_max;
      hi = *sigma_max;
    }
    absl::StatusOr<double> sigma =
        SolveSigmaOnSample(config_.epsilon, delta_prime_, *base,
                           out.modes.gram, lo, hi, Adjacency::kBoth);
    if (!sigma.ok()) return sigma.status();
    absl::StatusOr<double> norm =
        PrefixErrorNormToeplitz(out.coeffs, schema_.iterations());
    if (!norm.ok()) return norm.status();
    out.sigma = *sigma;
    out.norm = *norm;
    out.objective = out.sigma * out.norm;
    return out;
  }

  absl::StatusOr<std::vector<double>> Gradient(
      std::span<const double> params, const Evaluation& at,
      const FullDimensionalSample& sample) {
    absl::StatusOr<DeltaPartials> partials =
        DeltaHatPartials(config_.epsilon, at.sigma, at.coeffs, schema_,
                         sample, Adjacency::kBoth);
    if (!partials.ok()) return partials.status();
    absl::StatusOr<std::vector<double>> d_sigma =
        ImplicitSigmaGradient(*partials, delta_prime_, at.sigma);
    if (!d_sigma.ok()) return d_sigma.status();
    absl::StatusOr<std::vector<double>> d_objective = RmseGradient(
        at.coeffs, schema_.iterations(), at.sigma, *d_sigma);
    if (!d_objective.ok()) return d_objective.status();
    return param_.PullBack(params, *d_objective);
  }

  const OptimizerConfig& config_;
  ParticipationSchema schema_;
  StrategyParameterization param_;
  double delta_prime_;
};

}  // namespace

absl::StatusOr<OptimizationResult> Optimize(const OptimizerConfig& config) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  absl::StatusOr<ParticipationSchema> schema =
      ParticipationSchema::Create(config.batches_per_epoch, config.epochs);
  if (!schema.ok()) return schema.status();
  Optimizer optimizer(config, *schema);
  const StrategyParameterization& param = optimizer.parameterization();
  std::vector<double> params = config.initial_params.empty()
                                   ? param.DefaultInitialization()
                                   : config.initial_params;
  if (absl::Status s = param.CheckParams(params); !s.ok()) return s;
  params = param.Project(params);

  OptimizationResult result;
  if (absl::Status s = optimizer.Run(params, result.trace); !s.ok()) return s;
  if (config.steps == 0) result.trace.stop_reason = "no steps requested";

  absl::StatusOr<StrategyMatrix> strategy = param.ToStrategy(params);
  if (!strategy.ok()) return strategy.status();
  CalibrationOptions options;
  options.tau = config.tau;
  absl::StatusOr<CalibrationResult> final_calibration =
      CalibrateSigma(config.epsilon, config.delta, *strategy, *schema,
                     config.final_sample_count,
                     StreamSeed(config.seed, kFinalStream), options);
  if (!final_calibration.ok()) return final_calibration.status();
  absl::StatusOr<double> rmse = Rmse(*strategy, final_calibration->sigma);
  if (!rmse.ok()) return rmse.status();

  result.params = params;
  result.strategy = *std::move(strategy);
  result.sigma = final_calibration->sigma;
  result.rmse = *rmse;
  result.final_calibration = *final_calibration;
  result.trace.final_params = params;
  result.trace.final_sigma = result.sigma;
  result.trace.final_rmse = result.rmse;
  return result;
}

absl::StatusOr<OptimizerConfig> OptimizerConfigFromJson(
    const nlohmann::json& json) {
  if (!json.is_object()) {
    return absl::InvalidArgumentError("optimizer config must be an object");
  }
  OptimizerConfig config;
  try {
    const std::string family = json.value("family", std::string("toeplitz"));
    if (family == "toeplitz") {
      config.family = OptimizerFamily::kToeplitz;
    } else if (family == "blt") {
      config.family = OptimizerFamily::kBlt;
    } else {
      return absl::InvalidArgumentError(
          absl::StrCat("unknown optimizer family '", family, "'"));
    }
    config.buffers = json.value("buffers", config.buffers);
    config.epsilon = json.value("epsilon", config.epsilon);
    config.delta = json.value("delta", config.delta);
    config.tau = json.value("tau", config.tau);
    config.batches_per_epoch =
        json.value("batches_per_epoch", config.batches_per_epoch);
    config.epochs = json.value("epochs", config.epochs);
    config.steps = json.value("steps", config.steps);
    config.learning_rate = json.value("learning_rate", config.learning_rate);
    config.samples_per_step =
        json.value("samples_per_step", config.samples_per_step);
    config.final_sample_count =
        json.value("final_sample_count", config.final_sample_count);
    config.seed = json.value("seed", config.seed);
    config.resample_each_step =
        json.value("resample_each_step", config.resample_each_step);
    config.initial_params =
        json.value("initial_params", config.initial_params);
  } catch (const nlohmann::json::exception& e) {
    return absl::InvalidArgumentError(
        absl::StrCat("bad optimizer config: ", e.what()));
  }
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  return config;
}

nlohmann::json OptimizerConfigToJson(const OptimizerConfig& config) {
  return {
      {"family",
       config.family == OptimizerFamily::kToeplitz ? "toeplitz" : "blt"},
      {"buffers", config.buffers},
      {"epsilon", config.epsilon},
      {"delta", config.delta},
      {"tau", config.tau},
      {"batches_per_epoch", config.batches_per_epoch},
      {"epochs", config.epochs},
      {"steps", config.steps},
      {"learning_rate", config.learning_rate},
      {"samples_per_step", config.samples_per_step},
      {"final_sample_count", config.final_sample_count},
      {"seed", config.seed},
      {"resample_each_step", config.resample_each_step},
      {"initial_params", config.initial_params},
  };
}

nlohmann::json TraceToJson(const OptimizationTrace& trace) {
  nlohmann::json steps = nlohmann::json::array();
  for (const StepRecord& r : trace.steps) {
    steps.push_back({{"step", r.step},
                     {"rmse", r.rmse},
                     {"sigma", r.sigma},
                     {"gradient_norm", r.gradient_norm},
                     {"accepted", r.accepted},
                     {"degenerate", r.degenerate},
                     {"halvings", r.halvings},
                     {"step_size", r.step_size},
                     {"candidate_rmse", r.candidate_rmse}});
  }
  return {{"steps", steps},
          {"final_params", trace.final_params},
          {"final_sigma", trace.final_sigma},
          {"final_rmse", trace.final_rmse},
          {"initial_sigma", trace.initial_sigma},
          {"initial_rmse", trace.initial_rmse},
          {"stop_reason", trace.stop_reason}};
}

}  // namespace corrdp
