#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "symalign/core.hpp"
#include "symalign/fan_align.hpp"
#include "symalign/registration.hpp"

namespace symalign {

/// Variable-projection settings. Angles are radians; the inner fan
/// settings (K, upsample, FP tolerances) come from `fan`.
struct VPConfig {
  Method inner = Method::TwoDR;
  double eta0 = 0.0;
  double delta_eta = 1e-3;
  double gamma0 = 1.0;
  double armijo_c = 1e-4;
  static constexpr double contraction = 0.5;
  int max_outer = 20;
  double tol_eta = 1e-4;
  int max_backtracks = 30;
  double eta_limit = pi / 4.0;
  // Cap the first trial step by the inverse second difference of the
  // reduced loss (a Newton step); Armijo backtracking still applies.
  bool curvature_step = true;
  FanAlignConfig fan;

  void validate() const {
    detail::require(inner == Method::TwoDR || inner == Method::FPK,
                    "VPConfig: inner method must be 2dr or fpk");
    detail::require(delta_eta > 0.0, "VPConfig: delta_eta must be positive");
    detail::require(gamma0 > 0.0, "VPConfig: gamma0 must be positive");
    detail::require(armijo_c > 0.0 && armijo_c < 1.0, "VPConfig: armijo_c must lie in (0, 1)");
    detail::require(max_outer >= 1 && max_backtracks >= 1, "VPConfig: iteration caps must be >= 1");
    detail::require(tol_eta > 0.0, "VPConfig: tol_eta must be positive");
    detail::require(eta_limit > 0.0 && eta_limit < pi / 2.0, "VPConfig: eta_limit must lie in (0, pi/2)");
    detail::require(std::abs(eta0) < eta_limit, "VPConfig: eta0 outside the search domain");
    fan.validate();
  }
};

namespace detail {

inline void require_tilt(double eta) {
  require(std::isfinite(eta) && std::abs(eta) < pi / 2.0, "tilt angle must lie in (-pi/2, pi/2)");
}

// Lambda_eta g(q_i, beta_j) = g(q_i cos eta, -q_i sin eta, beta_j) for one view.
inline std::vector<double> lambda_eta_view(const ProjectionStack& stack, double eta, std::size_t j) {
  const ConeGeometry& g = stack.geometry();
  const double c = std::cos(eta), s = std::sin(eta);
  const double beta = g.beta(j);
  std::vector<double> row(g.n_u);
  for (std::size_t i = 0; i < g.n_u; ++i) {
    const double q = g.u(i);
    row[i] = sample_detector(stack, q * c, -q * s, beta);
  }
  return row;
}

// Pi_{h,eta} g(q_i, beta_j) =
//   g((-q + 2h) cos eta, (q - 2h) sin eta, beta_j + pi + 2 atan((q - h) / r)).
inline std::vector<double> pi_h_eta_view(const ProjectionStack& stack, double h_px, double eta, std::size_t j) {
  const ConeGeometry& g = stack.geometry();
  const double c = std::cos(eta), s = std::sin(eta);
  const double h = g.pixels_to_length(h_px);
  const double beta = g.beta(j);
  std::vector<double> row(g.n_u);
  for (std::size_t i = 0; i < g.n_u; ++i) {
    const double q = g.u(i);
    const double m = -q + 2.0 * h;
    row[i] = sample_detector(stack, m * c, -m * s, mirrored_angle(q, h, g.source_radius, beta));
  }
  return row;
}

template <class ViewFn>
std::vector<double> stack_views(const ConeGeometry& g, ViewFn&& view) {
  std::vector<double> out;
  out.reserve(g.n_u * g.n_beta);
  for (std::size_t j = 0; j < g.n_beta; ++j) {
    const std::vector<double> row = view(j);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

}  // namespace detail

/// Tilted central fan: samples along the detector line through the centre
/// at angle -eta, for every view. Shape (n_beta, n_u), view-major. The
/// result does not depend on h in the q parameterisation.
inline std::vector<double> lambda_eta(const ProjectionStack& stack, double eta) {
  detail::require_tilt(eta);
  return detail::stack_views(stack.geometry(),
                             [&](std::size_t j) { return detail::lambda_eta_view(stack, eta, j); });
}

/// Symmetry-mirrored counterpart of lambda_eta about centre h (pixels).
inline std::vector<double> pi_h_eta(const ProjectionStack& stack, double h_px, double eta) {
  detail::require_tilt(eta);
  return detail::stack_views(stack.geometry(),
                             [&](std::size_t j) { return detail::pi_h_eta_view(stack, h_px, eta, j); });
}

/// The tilted fan as a sinogram on the detector's u axis.
inline Sinogram tilted_fan(const ProjectionStack& stack, double eta) {
  return Sinogram(stack.geometry().central_fan(), lambda_eta(stack, eta));
}

/// Joint least-squares symmetry loss L(h, eta) = ||Lambda_eta - Pi_{h,eta}||^2.
inline double loss_L(const ProjectionStack& stack, double h_px, double eta) {
  return detail::squared_distance(lambda_eta(stack, eta), pi_h_eta(stack, h_px, eta));
}

/// Inner solve h(eta) = argmin_h L(h, eta) via 2DR or FP_K on the tilted fan.
inline double inner_h(const ProjectionStack& stack, double eta, const VPConfig& cfg) {
  detail::require_tilt(eta);
  const ConeGeometry& g = stack.geometry();
  if (cfg.inner == Method::TwoDR) {
    return 0.5 * xcorr_shift_s_2d(lambda_eta(stack, eta), pi_h_eta(stack, 0.0, eta), g.n_beta, g.n_u,
                                  cfg.fan.upsample);
  }
  if (cfg.inner == Method::FPK) {
    const AlignmentResult r = detail::median_of_fixed_points(g.n_beta, cfg.fan, [&](std::size_t j) {
      const std::vector<double> lambda = detail::lambda_eta_view(stack, eta, j);
      return detail::fixed_point_iterate(
          lambda, [&](double h_px) { return detail::pi_h_eta_view(stack, h_px, eta, j); }, cfg.fan);
    });
    return r.h;
  }
  throw std::invalid_argument("inner_h: inner method must be 2dr or fpk");
}

namespace detail {

// L_bar(eta) = L(h(eta), eta) with memoised inner solves.
class ReducedLoss {
 public:
  struct Value {
    double h = 0.0;
    double loss = 0.0;
  };

  ReducedLoss(const ProjectionStack& stack, const VPConfig& cfg) : stack_(stack), cfg_(cfg) {}

  Value operator()(double eta) {
    if (auto it = cache_.find(eta); it != cache_.end()) return it->second;
    Value v;
    v.h = inner_h(stack_, eta, cfg_);
    v.loss = loss_L(stack_, v.h, eta);
    cache_.emplace(eta, v);
    return v;
  }

  // Second difference from the same three probes; NaN when unavailable.
  double curvature(double eta) {
    const double d = cfg_.delta_eta;
    if (!(eta + d < cfg_.eta_limit && eta - d > -cfg_.eta_limit)) return std::numeric_limits<double>::quiet_NaN();
    return ((*this)(eta + d).loss - 2.0 * (*this)(eta).loss + (*this)(eta - d).loss) / (d * d);
  }

  // Central difference, one-sided where a probe would leave the domain.
  double gradient(double eta) {
    const double d = cfg_.delta_eta;
    const bool up = eta + d < cfg_.eta_limit;
    const bool down = eta - d > -cfg_.eta_limit;
    if (up && down) return ((*this)(eta + d).loss - (*this)(eta - d).loss) / (2.0 * d);
    if (up) return ((*this)(eta + d).loss - (*this)(eta).loss) / d;
    return ((*this)(eta).loss - (*this)(eta - d).loss) / d;
  }

 private:
  const ProjectionStack& stack_;
  const VPConfig& cfg_;
  std::map<double, Value> cache_;
};

}  // namespace detail

/// Finite-difference derivative of the reduced loss, re-solving h at each
/// probe.
inline double reduced_gradient(const ProjectionStack& stack, double eta, const VPConfig& cfg) {
  cfg.validate();
  detail::ReducedLoss reduced(stack, cfg);
  return reduced.gradient(eta);
}

/// Joint (h, eta) estimate by gradient descent on the reduced loss with
/// Armijo backtracking (contraction 1/2).
inline AlignmentResult variable_projection(const ProjectionStack& stack, const VPConfig& cfg = {}) {
  cfg.validate();
  detail::ReducedLoss reduced(stack, cfg);
  auto clamp = [&](double eta) {
    const double edge = std::nextafter(cfg.eta_limit, 0.0);
    return std::clamp(eta, -edge, edge);
  };

  AlignmentResult result;
  result.method = cfg.inner == Method::TwoDR ? Method::VP_2DR : Method::VP_FPK;
  result.converged = false;

  double eta = cfg.eta0;
  double gamma_start = cfg.gamma0;
  int k = 0;
  for (; k < cfg.max_outer; ++k) {
    const auto current = reduced(eta);
    result.trace.push_back({k, current.h, eta, current.loss});
    const double grad = reduced.gradient(eta);
    if (grad == 0.0) {
      result.converged = true;
      break;
    }

    double gamma = gamma_start;
    if (cfg.curvature_step) {
      const double curv = reduced.curvature(eta);
      if (curv > 0.0) gamma = std::min(gamma, 1.0 / curv);
    }
    int halvings = 0;
    bool accepted = false;
    bool stalled = false;
    double candidate = eta;
    while (true) {
      if (std::abs(gamma * grad) < cfg.tol_eta) {
        // No admissible step above the angular tolerance: stationary.
        stalled = true;
        break;
      }
      candidate = clamp(eta - gamma * grad);
      if (reduced(candidate).loss <= current.loss - cfg.armijo_c * gamma * grad * grad) {
        accepted = true;
        break;
      }
      if (++halvings > cfg.max_backtracks) break;
      gamma *= VPConfig::contraction;
    }
    if (stalled) {
      result.converged = true;
      break;
    }
    if (!accepted) break;  // backtracking exhausted, keep best-so-far

    if (halvings > 10) gamma_start = 4.0 * gamma;
    const double moved = std::abs(candidate - eta);
    eta = candidate;
    result.iterations = k + 1;
    if (moved < cfg.tol_eta) {
      result.converged = true;
      break;
    }
  }

  const auto final_value = reduced(eta);
  if (result.trace.empty() || result.trace.back().eta != eta) {
    result.trace.push_back({result.iterations, final_value.h, eta, final_value.loss});
  }
  result.h = final_value.h;
  result.eta = eta;
  result.mse = symmetry_mse(tilted_fan(stack, eta), result.h);
  return result;
}

}  // namespace symalign
