#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace symalign {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / pi; }

/// Reduces an angle to [0, 2*pi).
inline double wrap_angle(double beta) {
  if (!std::isfinite(beta)) {
    throw std::invalid_argument("wrap_angle: non-finite angle");
  }
  double w = std::fmod(beta, two_pi);
  if (w < 0.0) w += two_pi;
  // -tiny + 2*pi rounds up to 2*pi
  if (w >= two_pi) w = 0.0;
  return w;
}

/// Half-width of the effective detector whose fan exactly covers the unit
/// disk when the source sits at distance `source_radius` from the origin.
inline double unit_disk_half_width(double source_radius) {
  if (!(source_radius > 1.0)) {
    throw std::invalid_argument("unit_disk_half_width: source radius must exceed 1");
  }
  return source_radius / std::sqrt(source_radius * source_radius - 1.0);
}

namespace detail {

// Endpoint-inclusive grid on [-half, half]. Written so that
// coordinate(i) == -coordinate(n-1-i) holds bit-exactly.
inline double symmetric_coordinate(std::size_t i, std::size_t n, double half) {
  const double num = 2.0 * static_cast<double>(i) - static_cast<double>(n - 1);
  return half * num / static_cast<double>(n - 1);
}

inline double symmetric_index(double x, std::size_t n, double half) {
  return 0.5 * (x / half * static_cast<double>(n - 1) + static_cast<double>(n - 1));
}

inline void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

inline void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument(what);
  }
}

}  // namespace detail

/// Equidistant-detector fan geometry with a circular source trajectory.
/// Detector samples live on the effective axis through the rotation centre;
/// views are uniform on [0, 2*pi) with the endpoint excluded.
struct FanGeometry {
  double source_radius = 2.0;
  std::size_t n_s = 0;
  double s_max = 1.0;
  std::size_t n_beta = 0;

  void validate() const {
    detail::require(std::isfinite(source_radius) && source_radius > 0.0,
                    "FanGeometry: source_radius must be positive");
    detail::require(n_s >= 2, "FanGeometry: n_s must be >= 2");
    detail::require(n_beta >= 2, "FanGeometry: n_beta must be >= 2");
    detail::require(std::isfinite(s_max) && s_max > 0.0,
                    "FanGeometry: s_max must be positive");
  }

  double ds() const { return 2.0 * s_max / static_cast<double>(n_s - 1); }
  double dbeta() const { return two_pi / static_cast<double>(n_beta); }
  double s(std::size_t i) const { return detail::symmetric_coordinate(i, n_s, s_max); }
  double beta(std::size_t j) const {
    return two_pi * static_cast<double>(j) / static_cast<double>(n_beta);
  }
  /// Fractional sample index of coordinate `s` (not clamped).
  double s_index(double s_coord) const { return detail::symmetric_index(s_coord, n_s, s_max); }

  double pixels_to_length(double px) const { return px * ds(); }
  double length_to_pixels(double len) const { return len / ds(); }
};

/// Sampled effective detector axis: n_s points spanning [-s_max, s_max].
inline std::vector<double> effective_detector_axis(const FanGeometry& geom) {
  geom.validate();
  std::vector<double> axis(geom.n_s);
  for (std::size_t i = 0; i < geom.n_s; ++i) axis[i] = geom.s(i);
  return axis;
}

/// Flat-panel cone geometry. u is the horizontal detector axis, v runs
/// parallel to the rotation axis.
struct ConeGeometry {
  double source_radius = 2.0;
  std::size_t n_u = 0;
  double u_max = 1.0;
  std::size_t n_v = 0;
  double v_max = 1.0;
  std::size_t n_beta = 0;

  void validate() const {
    detail::require(std::isfinite(source_radius) && source_radius > 0.0,
                    "ConeGeometry: source_radius must be positive");
    detail::require(n_u >= 2 && n_v >= 2, "ConeGeometry: n_u and n_v must be >= 2");
    detail::require(n_beta >= 2, "ConeGeometry: n_beta must be >= 2");
    detail::require(std::isfinite(u_max) && u_max > 0.0 && std::isfinite(v_max) && v_max > 0.0,
                    "ConeGeometry: detector extents must be positive");
  }

  double du() const { return 2.0 * u_max / static_cast<double>(n_u - 1); }
  double dv() const { return 2.0 * v_max / static_cast<double>(n_v - 1); }
  double dbeta() const { return two_pi / static_cast<double>(n_beta); }
  double u(std::size_t i) const { return detail::symmetric_coordinate(i, n_u, u_max); }
  double v(std::size_t k) const { return detail::symmetric_coordinate(k, n_v, v_max); }
  double beta(std::size_t j) const {
    return two_pi * static_cast<double>(j) / static_cast<double>(n_beta);
  }
  double u_index(double u_coord) const { return detail::symmetric_index(u_coord, n_u, u_max); }
  double v_index(double v_coord) const { return detail::symmetric_index(v_coord, n_v, v_max); }

  double pixels_to_length(double px) const { return px * du(); }

  /// The fan that lives on the v = 0 plane.
  FanGeometry central_fan() const { return FanGeometry{source_radius, n_u, u_max, n_beta}; }
};

/// Fan-beam sinogram, values stored view-major: values[j * n_s + i].
class Sinogram {
 public:
  Sinogram(FanGeometry geometry, std::vector<double> values)
      : geometry_(geometry), values_(std::move(values)) {
    geometry_.validate();
    detail::require(values_.size() == geometry_.n_s * geometry_.n_beta,
                    "Sinogram: values shape does not match geometry");
    detail::require_finite(values_, "Sinogram: non-finite value");
  }

  const FanGeometry& geometry() const { return geometry_; }
  std::size_t n_s() const { return geometry_.n_s; }
  std::size_t n_beta() const { return geometry_.n_beta; }

  double operator()(std::size_t view, std::size_t i) const { return values_[view * geometry_.n_s + i]; }
  std::span<const double> values() const { return values_; }
  std::span<const double> view(std::size_t j) const {
    return std::span<const double>(values_).subspan(j * geometry_.n_s, geometry_.n_s);
  }

 private:
  FanGeometry geometry_;
  std::vector<double> values_;
};

/// Cone-beam projections stored values[(j * n_v + k) * n_u + i] for
/// view j, detector row k and column i.
class ProjectionStack {
 public:
  ProjectionStack(ConeGeometry geometry, std::vector<double> values)
      : geometry_(geometry), values_(std::move(values)) {
    geometry_.validate();
    detail::require(values_.size() == geometry_.n_u * geometry_.n_v * geometry_.n_beta,
                    "ProjectionStack: values shape does not match geometry");
    detail::require_finite(values_, "ProjectionStack: non-finite value");
  }

  const ConeGeometry& geometry() const { return geometry_; }
  double operator()(std::size_t view, std::size_t row, std::size_t col) const {
    return values_[(view * geometry_.n_v + row) * geometry_.n_u + col];
  }
  std::span<const double> values() const { return values_; }
  std::span<const double> projection(std::size_t j) const {
    const std::size_t n = geometry_.n_u * geometry_.n_v;
    return std::span<const double>(values_).subspan(j * n, n);
  }

 private:
  ConeGeometry geometry_;
  std::vector<double> values_;
};

enum class Method { Yang, LY, TwoDR, FP, FPK, VP_2DR, VP_FPK };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::Yang: return "yang";
    case Method::LY: return "ly";
    case Method::TwoDR: return "2dr";
    case Method::FP: return "fp";
    case Method::FPK: return "fpk";
    case Method::VP_2DR: return "vp-2dr";
    case Method::VP_FPK: return "vp-fpk";
  }
  return "unknown";
}

inline Method parse_method(std::string_view name) {
  for (Method m : {Method::Yang, Method::LY, Method::TwoDR, Method::FP, Method::FPK,
                   Method::VP_2DR, Method::VP_FPK}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown method: " + std::string(name));
}

struct TraceEntry {
  int k = 0;
  double h = 0.0;
  double eta = 0.0;
  double loss = 0.0;
};

/// Output of every estimator. `h` is in effective detector pixels, `eta` in
/// radians.
struct AlignmentResult {
  Method method = Method::TwoDR;
  double h = 0.0;
  double eta = 0.0;
  double mse = 0.0;
  int iterations = 0;
  bool converged = true;
  std::vector<TraceEntry> trace;
};

}  // namespace symalign
