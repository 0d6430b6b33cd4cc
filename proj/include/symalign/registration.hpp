#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "symalign/core.hpp"

namespace symalign {

/// Raised when a correlation surface carries no information (e.g. one of
/// the inputs is identically zero).
class RegistrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int default_upsample = 20;

namespace detail {

using ComplexVector = std::vector<std::complex<double>>;

inline ComplexVector forward_fft(std::span<const double> x, Eigen::FFT<double>& fft) {
  std::vector<double> in(x.begin(), x.end());
  ComplexVector out;
  fft.fwd(out, in);
  return out;
}

// Inverse DFT of `spectrum` zero-padded to n * up bins (band-limited
// interpolation of the underlying periodic signal). Returns the real part.
inline std::vector<double> padded_inverse(const ComplexVector& spectrum, int up,
                                          Eigen::FFT<double>& fft) {
  const std::size_t n = spectrum.size();
  const std::size_t m = n * static_cast<std::size_t>(up);
  const std::size_t half = n / 2;
  ComplexVector padded(m, {0.0, 0.0});
  if (n % 2 == 0) {
    for (std::size_t k = 0; k < half; ++k) padded[k] = spectrum[k];
    for (std::size_t k = half + 1; k < n; ++k) padded[m - n + k] = spectrum[k];
    // Nyquist bin is split between the two padded mirror positions.
    padded[half] += 0.5 * spectrum[half];
    padded[m - half] += 0.5 * spectrum[half];
  } else {
    for (std::size_t k = 0; k <= half; ++k) padded[k] = spectrum[k];
    for (std::size_t k = half + 1; k < n; ++k) padded[m - n + k] = spectrum[k];
  }
  ComplexVector out;
  fft.inv(out, padded);
  std::vector<double> re(m);
  for (std::size_t i = 0; i < m; ++i) re[i] = out[i].real();
  return re;
}

// Maps a peak position on the upsampled circular grid to a signed
// displacement in (-n/2, n/2].
inline double unwrap_peak(std::size_t index, std::size_t n, int up) {
  // signed integer first so that mirrored peaks give exactly negated shifts
  auto k = static_cast<long long>(index);
  const auto len = static_cast<long long>(n) * up;
  if (2 * k > len) k -= len;
  return static_cast<double>(k) / static_cast<double>(up);
}

inline double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

inline void check_informative(std::span<const double> a, std::span<const double> b) {
  if (!(energy(a) > 0.0) || !(energy(b) > 0.0)) {
    throw RegistrationError("registration: correlation is identically zero (ambiguous shift)");
  }
}

inline void check_upsample(int upsample) {
  if (upsample < 1) throw std::invalid_argument("registration: upsample must be >= 1");
}

}  // namespace detail

/// Circular cross-correlation shift of two equal-length signals, refined to
/// 1/upsample of a sample by zero-padding the cross-power spectrum.
/// Convention: if a(i) ~ b(i - d) the result is +d, reported in (-N/2, N/2].
inline double xcorr_shift_1d(std::span<const double> a, std::span<const double> b,
                             int upsample = default_upsample) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("xcorr_shift_1d: inputs must have equal length >= 2");
  }
  detail::check_upsample(upsample);
  detail::check_informative(a, b);

  Eigen::FFT<double> fft;
  detail::ComplexVector cross = detail::forward_fft(a, fft);
  const detail::ComplexVector fb = detail::forward_fft(b, fft);
  for (std::size_t k = 0; k < cross.size(); ++k) cross[k] *= std::conj(fb[k]);

  const std::vector<double> corr = detail::padded_inverse(cross, upsample, fft);
  const auto peak = std::max_element(corr.begin(), corr.end());
  return detail::unwrap_peak(static_cast<std::size_t>(peak - corr.begin()), a.size(), upsample);
}

/// 2D circular cross-correlation of two row-major (rows x cols) arrays,
/// returning only the displacement along the column axis (s). The row
/// displacement is located at integer resolution and discarded.
inline double xcorr_shift_s_2d(std::span<const double> a, std::span<const double> b,
                               std::size_t rows, std::size_t cols,
                               int upsample = default_upsample) {
  if (rows < 1 || cols < 2 || a.size() != rows * cols || b.size() != rows * cols) {
    throw std::invalid_argument("xcorr_shift_s_2d: arrays must both have shape rows x cols");
  }
  detail::check_upsample(upsample);
  detail::check_informative(a, b);

  Eigen::FFT<double> fft;
  using detail::ComplexVector;

  // Row spectra of both inputs, then column transforms give the 2D
  // spectra. cross[r][l] ends up holding the cross-power spectrum
  // transformed back along the row axis: Y(row displacement, s frequency).
  std::vector<ComplexVector> cross(rows), fb(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    cross[r] = detail::forward_fft(a.subspan(r * cols, cols), fft);
    fb[r] = detail::forward_fft(b.subspan(r * cols, cols), fft);
  }
  ComplexVector col_a(rows), col_b(rows), spec_a, spec_b, back;
  for (std::size_t l = 0; l < cols; ++l) {
    for (std::size_t r = 0; r < rows; ++r) {
      col_a[r] = cross[r][l];
      col_b[r] = fb[r][l];
    }
    fft.fwd(spec_a, col_a);
    fft.fwd(spec_b, col_b);
    for (std::size_t k = 0; k < rows; ++k) spec_a[k] *= std::conj(spec_b[k]);
    fft.inv(back, spec_a);
    for (std::size_t r = 0; r < rows; ++r) cross[r][l] = back[r];
  }

  // Integer-resolution peak over the whole surface.
  std::size_t best_row = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  ComplexVector line;
  for (std::size_t r = 0; r < rows; ++r) {
    fft.inv(line, cross[r]);
    for (std::size_t l = 0; l < cols; ++l) {
      if (line[l].real() > best_value) {
        best_value = line[l].real();
        best_row = r;
      }
    }
  }

  // Sub-sample refinement along s on the peak row and its two neighbours.
  double shift = 0.0;
  double refined = -std::numeric_limits<double>::infinity();
  const std::size_t probes = std::min<std::size_t>(rows, 3);
  for (std::size_t p = 0; p < probes; ++p) {
    const std::size_t r = (best_row + rows + p - (probes == 3 ? 1 : 0)) % rows;
    const std::vector<double> corr = detail::padded_inverse(cross[r], upsample, fft);
    const auto peak = std::max_element(corr.begin(), corr.end());
    if (*peak > refined) {
      refined = *peak;
      shift = detail::unwrap_peak(static_cast<std::size_t>(peak - corr.begin()), cols, upsample);
    }
  }
  return shift;
}

namespace detail {

struct AxisWeight {
  std::size_t i0 = 0;
  std::size_t i1 = 0;
  double t = 0.0;
  bool inside = false;
};

// Fractional indices within 1e-9 of an integer are treated as grid hits so
// that grid lookups reproduce stored values exactly.
inline double snap_to_grid(double x) {
  const double r = std::nearbyint(x);
  return std::abs(x - r) < 1e-9 ? r : x;
}

inline AxisWeight bounded_weight(double x, std::size_t n) {
  x = snap_to_grid(x);
  const double last = static_cast<double>(n - 1);
  if (!(x >= 0.0) || x > last) return {};
  const auto i0 = static_cast<std::size_t>(x);
  if (i0 >= n - 1) return {n - 1, n - 1, 0.0, true};
  return {i0, i0 + 1, x - static_cast<double>(i0), true};
}

inline AxisWeight periodic_weight(double beta, std::size_t n) {
  const double nn = static_cast<double>(n);
  double y = snap_to_grid(wrap_angle(beta) * nn / two_pi);
  if (y >= nn) y -= nn;
  auto i0 = static_cast<std::size_t>(y);
  if (i0 >= n) i0 = n - 1;
  return {i0, (i0 + 1) % n, y - static_cast<double>(i0), true};
}

inline double lerp(double a, double b, double t) { return (1.0 - t) * a + t * b; }

inline void require_finite_coords(std::initializer_list<double> coords) {
  for (double c : coords) {
    if (!std::isfinite(c)) throw std::invalid_argument("sampling: non-finite coordinate");
  }
}

}  // namespace detail

/// Bilinear lookup: linear in s with zero outside [-s_max, s_max], linear
/// and 2*pi-periodic in beta.
inline double sample_periodic(const Sinogram& sino, double s, double beta) {
  detail::require_finite_coords({s, beta});
  const FanGeometry& g = sino.geometry();
  const detail::AxisWeight ws = detail::bounded_weight(g.s_index(s), g.n_s);
  if (!ws.inside) return 0.0;
  const detail::AxisWeight wb = detail::periodic_weight(beta, g.n_beta);
  const double v0 = detail::lerp(sino(wb.i0, ws.i0), sino(wb.i0, ws.i1), ws.t);
  const double v1 = detail::lerp(sino(wb.i1, ws.i0), sino(wb.i1, ws.i1), ws.t);
  return detail::lerp(v0, v1, wb.t);
}

/// Trilinear lookup on a projection stack: zero-filled in u and v, periodic
/// in beta.
inline double sample_detector(const ProjectionStack& stack, double u, double v, double beta) {
  detail::require_finite_coords({u, v, beta});
  const ConeGeometry& g = stack.geometry();
  const detail::AxisWeight wu = detail::bounded_weight(g.u_index(u), g.n_u);
  if (!wu.inside) return 0.0;
  const detail::AxisWeight wv = detail::bounded_weight(g.v_index(v), g.n_v);
  if (!wv.inside) return 0.0;
  const detail::AxisWeight wb = detail::periodic_weight(beta, g.n_beta);
  auto plane = [&](std::size_t j) {
    const double r0 = detail::lerp(stack(j, wv.i0, wu.i0), stack(j, wv.i0, wu.i1), wu.t);
    const double r1 = detail::lerp(stack(j, wv.i1, wu.i0), stack(j, wv.i1, wu.i1), wu.t);
    return detail::lerp(r0, r1, wv.t);
  };
  return detail::lerp(plane(wb.i0), plane(wb.i1), wb.t);
}

}  // namespace symalign
