#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "symalign/core.hpp"
#include "symalign/registration.hpp"

namespace symalign {

struct FanAlignConfig {
  Method method = Method::TwoDR;
  int K = 10;
  int max_iter = 20;
  double tol_h = 0.01;  // pixels
  int upsample = default_upsample;
  std::size_t beta_index = 0;
  bool evaluate_mse = true;

  void validate() const {
    detail::require(K >= 1, "FanAlignConfig: K must be >= 1");
    detail::require(max_iter >= 1, "FanAlignConfig: max_iter must be >= 1");
    detail::require(tol_h > 0.0, "FanAlignConfig: tol_h must be positive");
    detail::require(upsample >= 1, "FanAlignConfig: upsample must be >= 1");
  }
};

namespace detail {

// View angle paired with (s, beta) by the fan symmetry about centre h:
// g(s, beta) = g(-s + 2h, beta + pi + 2 atan((s - h) / r)).
inline double mirrored_angle(double s, double h, double source_radius, double beta) {
  return beta + pi + 2.0 * std::atan((s - h) / source_radius);
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

struct FixedPointRun {
  double h = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<TraceEntry> trace;
};

// h_{k+1} = h_k + shift(lambda, reflect(h_k)) / 2 starting from h_0 = 0.
// `reflect(h)` returns the mirrored signal for centre h (pixels).
template <class Reflect>
FixedPointRun fixed_point_iterate(std::span<const double> lambda, Reflect&& reflect,
                                  const FanAlignConfig& cfg) {
  FixedPointRun run;
  double h = 0.0;
  for (int k = 0; k < cfg.max_iter; ++k) {
    const std::vector<double> mirrored = reflect(h);
    const double step = 0.5 * xcorr_shift_1d(lambda, mirrored, cfg.upsample);
    run.trace.push_back({k, h, 0.0, squared_distance(lambda, mirrored)});
    h += step;
    run.iterations = k + 1;
    if (std::abs(step) < cfg.tol_h) {
      run.converged = true;
      break;
    }
  }
  run.h = h;
  return run;
}

// Lower-middle order statistic.
inline double lower_median(std::vector<double> values) {
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

// Median over K fixed-point runs started at uniformly spread views. Runs
// that throw are dropped.
template <class RunAt>
AlignmentResult median_of_fixed_points(std::size_t n_beta, const FanAlignConfig& cfg, RunAt&& run_at) {
  require(static_cast<std::size_t>(cfg.K) <= n_beta, "FP_K: K must not exceed the number of views");
  std::vector<FixedPointRun> runs;
  for (int j = 0; j < cfg.K; ++j) {
    const auto index = static_cast<std::size_t>(
        std::llround(static_cast<double>(j) * static_cast<double>(n_beta) / cfg.K)) % n_beta;
    try {
      runs.push_back(run_at(index));
    } catch (const RegistrationError&) {
    }
  }
  if (runs.empty()) throw RegistrationError("FP_K: every fixed-point run failed");

  std::vector<double> estimates;
  for (const auto& r : runs) estimates.push_back(r.h);
  const double median = lower_median(estimates);

  AlignmentResult result;
  result.method = Method::FPK;
  result.h = median;
  for (std::size_t j = 0; j < runs.size(); ++j) {
    result.trace.push_back({static_cast<int>(j), runs[j].h, 0.0,
                            runs[j].trace.empty() ? 0.0 : runs[j].trace.back().loss});
    if (runs[j].h == median) {
      result.iterations = runs[j].iterations;
      result.converged = runs[j].converged;
    }
  }
  return result;
}

inline std::vector<double> reversed(std::span<const double> x) { return {x.rbegin(), x.rend()}; }

}  // namespace detail

/// Sum of the sinogram over all views, one entry per detector sample.
inline std::vector<double> profile_p(const Sinogram& sino) {
  std::vector<double> p(sino.n_s(), 0.0);
  for (std::size_t j = 0; j < sino.n_beta(); ++j) {
    const auto row = sino.view(j);
    for (std::size_t i = 0; i < sino.n_s(); ++i) p[i] += row[i];
  }
  return p;
}

/// View sum of the symmetry-mirrored sinogram, evaluated with linear
/// interpolation in beta.
inline std::vector<double> profile_w(const Sinogram& sino) {
  const FanGeometry& g = sino.geometry();
  std::vector<double> w(g.n_s, 0.0);
  for (std::size_t i = 0; i < g.n_s; ++i) {
    const double s = g.s(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < g.n_beta; ++j) {
      acc += sample_periodic(sino, -s, detail::mirrored_angle(s, 0.0, g.source_radius, g.beta(j)));
    }
    w[i] = acc;
  }
  return w;
}

/// The full mirrored sinogram z(s_i, beta_j) = g(-s_i, beta_j + pi + 2 atan(s_i / r)).
inline std::vector<double> mirrored_sinogram(const Sinogram& sino) {
  const FanGeometry& g = sino.geometry();
  std::vector<double> z(g.n_s * g.n_beta);
  for (std::size_t j = 0; j < g.n_beta; ++j) {
    for (std::size_t i = 0; i < g.n_s; ++i) {
      const double s = g.s(i);
      z[j * g.n_s + i] = sample_periodic(sino, -s, detail::mirrored_angle(s, 0.0, g.source_radius, g.beta(j)));
    }
  }
  return z;
}

/// Normalised symmetry residual ||g - g_hat||^2 / ||g||^2 where g_hat is the
/// sinogram mirrored about the candidate centre `h_px`.
inline double symmetry_mse(const Sinogram& sino, double h_px) {
  const FanGeometry& g = sino.geometry();
  const double h = g.pixels_to_length(h_px);
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < g.n_beta; ++j) {
    const double beta = g.beta(j);
    for (std::size_t i = 0; i < g.n_s; ++i) {
      const double s = g.s(i);
      const double value = sino(j, i);
      const double mirror = sample_periodic(sino, -s + 2.0 * h, detail::mirrored_angle(s, h, g.source_radius, beta));
      num += (value - mirror) * (value - mirror);
      den += value * value;
    }
  }
  if (!(den > 0.0)) throw std::invalid_argument("symmetry_mse: sinogram has zero norm");
  return num / den;
}

namespace detail {

inline AlignmentResult finish(AlignmentResult r, const Sinogram& sino, const FanAlignConfig& cfg) {
  if (cfg.evaluate_mse) r.mse = symmetry_mse(sino, r.h);
  return r;
}

}  // namespace detail

/// Registration of the view-summed profile against its reversal.
inline AlignmentResult align_yang(const Sinogram& sino, const FanAlignConfig& cfg = {}) {
  cfg.validate();
  const std::vector<double> p = profile_p(sino);
  AlignmentResult r;
  r.method = Method::Yang;
  r.h = 0.5 * xcorr_shift_1d(p, detail::reversed(p), cfg.upsample);
  return detail::finish(std::move(r), sino, cfg);
}

/// Linear-interpolation refinement of Yang: p registered against w.
inline AlignmentResult align_ly(const Sinogram& sino, const FanAlignConfig& cfg = {}) {
  cfg.validate();
  AlignmentResult r;
  r.method = Method::LY;
  r.h = 0.5 * xcorr_shift_1d(profile_p(sino), profile_w(sino), cfg.upsample);
  return detail::finish(std::move(r), sino, cfg);
}

/// 2D registration of the sinogram against its mirrored resampling; only
/// the s component of the displacement is kept.
inline AlignmentResult align_2dr(const Sinogram& sino, const FanAlignConfig& cfg = {}) {
  cfg.validate();
  AlignmentResult r;
  r.method = Method::TwoDR;
  r.h = 0.5 * xcorr_shift_s_2d(sino.values(), mirrored_sinogram(sino), sino.n_beta(), sino.n_s(),
                               cfg.upsample);
  return detail::finish(std::move(r), sino, cfg);
}

namespace detail {

inline FixedPointRun fan_fixed_point(const Sinogram& sino, std::size_t beta_index, const FanAlignConfig& cfg) {
  const FanGeometry& g = sino.geometry();
  require(beta_index < g.n_beta, "align_fp: beta_index out of range");
  const double beta0 = g.beta(beta_index);
  const auto lambda = sino.view(beta_index);
  auto reflect = [&](double h_px) {
    const double h = g.pixels_to_length(h_px);
    std::vector<double> mirrored(g.n_s);
    for (std::size_t i = 0; i < g.n_s; ++i) {
      const double s = g.s(i);
      mirrored[i] = sample_periodic(sino, -s + 2.0 * h, mirrored_angle(s, h, g.source_radius, beta0));
    }
    return mirrored;
  };
  return fixed_point_iterate(lambda, reflect, cfg);
}

}  // namespace detail

/// Fixed-point iteration on the single view at cfg.beta_index.
inline AlignmentResult align_fp(const Sinogram& sino, const FanAlignConfig& cfg = {}) {
  cfg.validate();
  detail::FixedPointRun run = detail::fan_fixed_point(sino, cfg.beta_index, cfg);
  AlignmentResult r;
  r.method = Method::FP;
  r.h = run.h;
  r.iterations = run.iterations;
  r.converged = run.converged;
  r.trace = std::move(run.trace);
  return detail::finish(std::move(r), sino, cfg);
}

/// Median of cfg.K fixed-point runs on views round(j n_beta / K).
inline AlignmentResult align_fp_k(const Sinogram& sino, const FanAlignConfig& cfg = {}) {
  cfg.validate();
  AlignmentResult r = detail::median_of_fixed_points(
      sino.n_beta(), cfg, [&](std::size_t index) { return detail::fan_fixed_point(sino, index, cfg); });
  return detail::finish(std::move(r), sino, cfg);
}

inline AlignmentResult align_fan(const Sinogram& sino, const FanAlignConfig& cfg) {
  switch (cfg.method) {
    case Method::Yang: return align_yang(sino, cfg);
    case Method::LY: return align_ly(sino, cfg);
    case Method::TwoDR: return align_2dr(sino, cfg);
    case Method::FP: return align_fp(sino, cfg);
    case Method::FPK: return align_fp_k(sino, cfg);
    default: throw std::invalid_argument("align_fan: not a fan-beam method");
  }
}

}  // namespace symalign
