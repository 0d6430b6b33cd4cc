#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "symalign/core.hpp"
#include "symalign/registration.hpp"

namespace symalign {

struct Disk {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  double density = 0.0;
};

/// Sum of uniform disks supported in the unit disk. Holes are disks with
/// negative density on top of an enclosing disk.
struct Phantom2D {
  std::vector<Disk> disks;

  void validate() const {
    for (const Disk& d : disks) {
      detail::require(d.radius > 0.0 && std::isfinite(d.radius), "Phantom2D: radius must be positive");
      detail::require(std::isfinite(d.density) && std::isfinite(d.cx) && std::isfinite(d.cy),
                      "Phantom2D: non-finite disk parameter");
      detail::require(std::hypot(d.cx, d.cy) + d.radius <= 1.0 + 1e-12,
                      "Phantom2D: disk leaves the unit disk");
    }
  }
};

struct Sphere {
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  double radius = 0.0;
  double density = 0.0;
};

/// Finite cylinder whose axis is the rotation (y) axis.
struct Cylinder {
  double radius = 1.0;
  double half_height = 1.0;
  double density = 0.0;
};

struct Phantom3D {
  std::optional<Cylinder> cylinder;
  std::vector<Sphere> spheres;

  void validate() const {
    if (cylinder) {
      detail::require(cylinder->radius > 0.0 && cylinder->radius <= 1.0 && cylinder->half_height > 0.0,
                      "Phantom3D: cylinder must fit in the unit cylinder");
    }
    for (const Sphere& s : spheres) {
      detail::require(s.radius > 0.0 && std::isfinite(s.radius), "Phantom3D: radius must be positive");
      detail::require(std::hypot(s.cx, s.cz) + s.radius <= 1.0 + 1e-12,
                      "Phantom3D: sphere leaves the unit cylinder");
    }
  }
};

/// Smooth additive drift b(s, beta) = alpha (sin(pi s / (2 s_max)) + cos(beta / 2) + 2).
struct InstabilityModel {
  double alpha = 0.0;

  void validate() const {
    detail::require(std::isfinite(alpha) && alpha >= 0.0, "InstabilityModel: alpha must be >= 0");
  }
  double operator()(double s, double beta, double s_max) const {
    if (alpha == 0.0) return 0.0;
    return alpha * (std::sin(pi * s / (2.0 * s_max)) + std::cos(beta / 2.0) + 2.0);
  }
};

struct RadiusRange {
  double lo = 0.02;
  double hi = 0.15;
};

/// Seeded random foam: an enclosing disk of density `density` centred at the
/// origin with `n_disks` non-overlapping holes carved into it.
inline Phantom2D make_disk_phantom(std::uint64_t seed, std::size_t n_disks, RadiusRange radii,
                                   double density, double enclosing_radius = 1.0) {
  detail::require(radii.lo > 0.0 && radii.lo <= radii.hi && radii.hi < 1.0,
                  "make_disk_phantom: radius range must lie in (0, 1)");
  detail::require(enclosing_radius > 0.0 && enclosing_radius <= 1.0,
                  "make_disk_phantom: enclosing radius must be in (0, 1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> radius(radii.lo, radii.hi);

  Phantom2D phantom;
  phantom.disks.push_back({0.0, 0.0, enclosing_radius, density});
  constexpr int max_attempts = 10000;
  for (std::size_t n = 0; n < n_disks; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
      const double r = radius(rng);
      const double reach = enclosing_radius - r;
      if (reach <= 0.0) continue;
      const double x = reach * unit(rng);
      const double y = reach * unit(rng);
      if (std::hypot(x, y) > reach) continue;
      bool clear = true;
      for (std::size_t k = 1; k < phantom.disks.size() && clear; ++k) {
        const Disk& o = phantom.disks[k];
        clear = std::hypot(x - o.cx, y - o.cy) > r + o.radius;
      }
      if (!clear) continue;
      phantom.disks.push_back({x, y, r, -density});
      placed = true;
    }
    if (!placed) throw std::runtime_error("make_disk_phantom: could not place non-overlapping disks");
  }
  return phantom;
}

/// Seeded random foam in 3D: a y-axis cylinder with non-overlapping
/// spherical voids.
inline Phantom3D make_sphere_phantom(std::uint64_t seed, std::size_t n_spheres, RadiusRange radii,
                                     double density, double cylinder_radius = 1.0,
                                     double half_height = 0.5) {
  detail::require(radii.lo > 0.0 && radii.lo <= radii.hi && radii.hi < 1.0,
                  "make_sphere_phantom: radius range must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> radius(radii.lo, radii.hi);

  Phantom3D phantom;
  phantom.cylinder = Cylinder{cylinder_radius, half_height, density};
  constexpr int max_attempts = 10000;
  for (std::size_t n = 0; n < n_spheres; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
      const double r = radius(rng);
      const double reach = cylinder_radius - r;
      const double rise = half_height - r;
      if (reach <= 0.0 || rise <= 0.0) continue;
      const double x = reach * unit(rng);
      const double z = reach * unit(rng);
      const double y = rise * unit(rng);
      if (std::hypot(x, z) > reach) continue;
      bool clear = true;
      for (const Sphere& o : phantom.spheres) {
        if (std::sqrt((x - o.cx) * (x - o.cx) + (y - o.cy) * (y - o.cy) + (z - o.cz) * (z - o.cz)) <=
            r + o.radius) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      phantom.spheres.push_back({x, y, z, r, -density});
      placed = true;
    }
    if (!placed) throw std::runtime_error("make_sphere_phantom: could not place non-overlapping spheres");
  }
  return phantom;
}

namespace detail {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

inline double chord(double radius_sq, double dist_sq) {
  return dist_sq < radius_sq ? 2.0 * std::sqrt(radius_sq - dist_sq) : 0.0;
}

}  // namespace detail

/// Exact line integral of `phantom` along the fan ray from the source at
/// angle `beta` through effective detector coordinate `s`. The source sits
/// at r (cos beta, sin beta) and the detector axis points along
/// (sin beta, -cos beta), the orientation for which
/// g(s, beta) = g(-s, beta + pi + 2 atan(s / r)).
inline double fan_ray_integral(const Phantom2D& phantom, double source_radius, double s, double beta) {
  const double cb = std::cos(beta), sb = std::sin(beta);
  const double sx = source_radius * cb, sy = source_radius * sb;
  double dx = s * sb - sx, dy = -s * cb - sy;
  const double norm = std::hypot(dx, dy);
  dx /= norm;
  dy /= norm;
  double total = 0.0;
  for (const Disk& d : phantom.disks) {
    const double cross = (d.cx - sx) * dy - (d.cy - sy) * dx;
    total += d.density * detail::chord(d.radius * d.radius, cross * cross);
  }
  return total;
}

/// Exact line integral of `phantom` along the ray from the source at angle
/// `beta` to the effective detector point (u, v). Same orientation as
/// fan_ray_integral in the (x, z) plane; v runs along the rotation axis y.
inline double cone_ray_integral(const Phantom3D& phantom, double source_radius, double u, double v,
                                double beta) {
  const double cb = std::cos(beta), sb = std::sin(beta);
  const detail::Vec3 src{source_radius * cb, 0.0, source_radius * sb};
  detail::Vec3 d{u * sb - src.x, v, -u * cb - src.z};
  const double norm = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
  d = {d.x / norm, d.y / norm, d.z / norm};

  double total = 0.0;
  if (phantom.cylinder) {
    const Cylinder& c = *phantom.cylinder;
    const double a = d.x * d.x + d.z * d.z;
    const double b = 2.0 * (src.x * d.x + src.z * d.z);
    const double q = src.x * src.x + src.z * src.z - c.radius * c.radius;
    const double disc = b * b - 4.0 * a * q;
    if (a > 0.0 && disc > 0.0) {
      const double root = std::sqrt(disc);
      double t0 = (-b - root) / (2.0 * a);
      double t1 = (-b + root) / (2.0 * a);
      if (d.y != 0.0) {
        const double reach = c.half_height / std::abs(d.y);
        t0 = std::max(t0, -reach);
        t1 = std::min(t1, reach);
      }
      if (t1 > t0) total += c.density * (t1 - t0);
    }
  }
  for (const Sphere& s : phantom.spheres) {
    const detail::Vec3 w{s.cx - src.x, s.cy - src.y, s.cz - src.z};
    const double along = w.x * d.x + w.y * d.y + w.z * d.z;
    const double dist_sq = w.x * w.x + w.y * w.y + w.z * w.z - along * along;
    total += s.density * detail::chord(s.radius * s.radius, dist_sq);
  }
  return total;
}

/// Fan-beam projection with the detector shifted by `h_px` effective pixels:
/// the recorded sample s_i sees the ray through true coordinate s_i - h.
inline Sinogram fan_project(const Phantom2D& phantom, const FanGeometry& geom, double h_px = 0.0,
                            InstabilityModel instability = {}) {
  geom.validate();
  phantom.validate();
  instability.validate();
  const double shift = geom.pixels_to_length(h_px);
  std::vector<double> values(geom.n_s * geom.n_beta);
  for (std::size_t j = 0; j < geom.n_beta; ++j) {
    const double beta = geom.beta(j);
    for (std::size_t i = 0; i < geom.n_s; ++i) {
      const double s = geom.s(i);
      values[j * geom.n_s + i] = fan_ray_integral(phantom, geom.source_radius, s - shift, beta) +
                                 instability(s, beta, geom.s_max);
    }
  }
  return Sinogram(geom, std::move(values));
}

/// Detector coordinates actually hit by recorded pixel (u, v) on a detector
/// rotated in-plane by `eta` and shifted by `shift` along u:
/// (u', v') = R(eta) (u, v) - (shift, 0).
inline std::pair<double, double> misaligned_detector_point(double u, double v, double shift, double eta) {
  const double c = std::cos(eta), s = std::sin(eta);
  return {u * c - v * s - shift, u * s + v * c};
}

/// Cone-beam projection with detector misalignment (h, eta) applied exactly
/// in the ray geometry. With aperture > 1 each pixel is the mean of
/// aperture x aperture exact line integrals spread over the pixel area;
/// aperture = 1 is point sampling at the pixel centre.
inline ProjectionStack cone_project(const Phantom3D& phantom, const ConeGeometry& geom, double h_px = 0.0,
                                    double eta = 0.0, InstabilityModel instability = {},
                                    std::size_t aperture = 1) {
  geom.validate();
  phantom.validate();
  instability.validate();
  detail::require(std::abs(eta) < pi / 2.0, "cone_project: eta must lie in (-pi/2, pi/2)");
  detail::require(aperture >= 1, "cone_project: aperture must be >= 1");
  const double shift = geom.pixels_to_length(h_px);
  std::vector<double> offsets(aperture);
  for (std::size_t a = 0; a < aperture; ++a) {
    offsets[a] = (static_cast<double>(a) + 0.5) / static_cast<double>(aperture) - 0.5;
  }
  const double weight = 1.0 / static_cast<double>(aperture * aperture);
  std::vector<double> values(geom.n_u * geom.n_v * geom.n_beta);
  std::size_t at = 0;
  for (std::size_t j = 0; j < geom.n_beta; ++j) {
    const double beta = geom.beta(j);
    for (std::size_t k = 0; k < geom.n_v; ++k) {
      const double v = geom.v(k);
      for (std::size_t i = 0; i < geom.n_u; ++i) {
        const double u = geom.u(i);
        double acc = 0.0;
        for (double ov : offsets) {
          for (double ou : offsets) {
            const auto [ut, vt] = misaligned_detector_point(u + ou * geom.du(), v + ov * geom.dv(), shift, eta);
            acc += cone_ray_integral(phantom, geom.source_radius, ut, vt, beta);
          }
        }
        values[at++] = acc * weight + instability(u, beta, geom.u_max);
      }
    }
  }
  return ProjectionStack(geom, std::move(values));
}

namespace detail {

template <class Map>
ProjectionStack resample_views(const ProjectionStack& stack, Map&& map) {
  const ConeGeometry& g = stack.geometry();
  std::vector<double> values(g.n_u * g.n_v * g.n_beta);
  std::size_t at = 0;
  for (std::size_t j = 0; j < g.n_beta; ++j) {
    const double beta = g.beta(j);
    for (std::size_t k = 0; k < g.n_v; ++k) {
      for (std::size_t i = 0; i < g.n_u; ++i) {
        const auto [u, v] = map(g.u(i), g.v(k));
        values[at++] = sample_detector(stack, u, v, beta);
      }
    }
  }
  return ProjectionStack(g, std::move(values));
}

}  // namespace detail

/// Resampling counterpart of the geometric misalignment in cone_project:
/// out(u, v) = in(R(eta) (u, v) - (h, 0)), bilinear, zero outside.
inline ProjectionStack resample_shift_rotate(const ProjectionStack& stack, double h_px, double eta) {
  const double shift = stack.geometry().pixels_to_length(h_px);
  return detail::resample_views(stack, [&](double u, double v) {
    return misaligned_detector_point(u, v, shift, eta);
  });
}

/// Exact inverse map of resample_shift_rotate (up to interpolation):
/// out(u, v) = in(R(-eta) ((u, v) + (h, 0))).
inline ProjectionStack resample_shift_rotate_inverse(const ProjectionStack& stack, double h_px, double eta) {
  const double shift = stack.geometry().pixels_to_length(h_px);
  const double c = std::cos(eta), s = std::sin(eta);
  return detail::resample_views(stack, [&](double u, double v) {
    const double a = u + shift;
    return std::pair<double, double>{a * c + v * s, -a * s + v * c};
  });
}

/// Fan-beam simulation protocol: effective detector spanning the unit disk,
/// seeded disk foam, shift applied in the geometry.
struct FanProtocol {
  std::size_t n_s = 256;
  std::size_t n_beta = 256;
  double source_radius = 2.0;
  std::size_t n_disks = 30;
  RadiusRange radii{};
  // Kept below 1 so a 10 px shift does not push the object off the detector.
  double enclosing_radius = 0.8;
  double density = 1.0;
  double h_px = 10.0;
  double alpha = 0.0;
  std::uint64_t seed = 1;

  FanGeometry geometry() const {
    return FanGeometry{source_radius, n_s, unit_disk_half_width(source_radius), n_beta};
  }
  Phantom2D phantom() const { return make_disk_phantom(seed, n_disks, radii, density, enclosing_radius); }
  Sinogram simulate() const { return fan_project(phantom(), geometry(), h_px, InstabilityModel{alpha}); }
};

/// Cone-beam counterpart: square detector with the fan protocol's
/// horizontal extent, cylinder foam of spherical voids.
struct ConeProtocol {
  std::size_t n = 128;  // n_u = n_v = n_beta
  double source_radius = 2.0;
  std::size_t n_spheres = 30;
  RadiusRange radii{};
  double cylinder_radius = 0.8;
  double half_height = 0.5;
  double density = 1.0;
  double h_px = 10.0;
  double eta = 0.0;  // radians
  double alpha = 0.0;
  std::size_t aperture = 1;
  std::uint64_t seed = 1;

  ConeGeometry geometry() const {
    const double half = unit_disk_half_width(source_radius);
    return ConeGeometry{source_radius, n, half, n, half, n};
  }
  Phantom3D phantom() const {
    return make_sphere_phantom(seed, n_spheres, radii, density, cylinder_radius, half_height);
  }
  ProjectionStack simulate() const {
    return cone_project(phantom(), geometry(), h_px, eta, InstabilityModel{alpha}, aperture);
  }
};

}  // namespace symalign
