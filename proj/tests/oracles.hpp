#pragma once

// Brute-force reference implementations shared by the tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "sunroof/raster.hpp"
#include "sunroof/scene.hpp"
#include "sunroof/solar.hpp"

namespace oracle {

using sunroof::HeightGrid;

inline double bilinear(const HeightGrid& g, double r, double c) {
  const int r0 = static_cast<int>(std::floor(r)), c0 = static_cast<int>(std::floor(c));
  const int r1 = std::min(r0 + 1, g.height() - 1), c1 = std::min(c0 + 1, g.width() - 1);
  const double tr = r - r0, tc = c - c0;
  return (1 - tr) * ((1 - tc) * g(r0, c0) + tc * g(r0, c1)) + tr * ((1 - tc) * g(r1, c0) + tc * g(r1, c1));
}

/// Maximum elevation angle (degrees, >= 0) seen from the center of (r, c)
/// along `azimuth_deg`, marching the bilinear surface in `step` cell units
/// until the ray leaves the grid. `stop_above` ends the march once an angle
/// above it is found. `zmax` is the grid maximum; computed when omitted.
inline double ray_march(const HeightGrid& g, int r, int c, double azimuth_deg, double step = 0.02,
                        double stop_above = 90.0, double zmax = -1e300) {
  const double dc = std::sin(sunroof::deg2rad(azimuth_deg)), dr = -std::cos(sunroof::deg2rad(azimuth_deg));
  const double z0 = g(r, c);
  if (zmax == -1e300) {
    for (const double v : g.values()) zmax = std::max(zmax, v);
  }
  const bool stops = stop_above < 90.0;
  const double tan_stop = std::tan(sunroof::deg2rad(std::min(stop_above, 89.9)));
  double best = 0.0;  // tangent of the best angle so far
  for (double t = step;; t += step) {
    double rr = r + t * dr, cc = c + t * dc;
    constexpr double e = 1e-9;
    if (rr < -e || cc < -e || rr > g.height() - 1 + e || cc > g.width() - 1 + e) break;
    const double dist = t * g.cell_size();
    // nothing further can exceed stop_above, or beat the current best
    const double bound = stops ? tan_stop : best;
    if (bound > 0.0 && z0 + dist * bound > zmax) break;
    rr = std::clamp(rr, 0.0, g.height() - 1.0);
    cc = std::clamp(cc, 0.0, g.width() - 1.0);
    best = std::max(best, (bilinear(g, rr, cc) - z0) / dist);
    if (stops && best > tan_stop) break;
  }
  return sunroof::rad2deg(std::atan(best));
}

/// Smooth random surface: a tilted plane plus broad Gaussian bumps.
inline HeightGrid smooth_random_dsm(int n, std::uint64_t seed, double cell_size = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  HeightGrid g(sunroof::GridGeometry{n, n, cell_size, 0.0, 0.0});
  const double gx = U(rng) * 0.6 - 0.3, gy = U(rng) * 0.6 - 0.3;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) g(r, c) = gx * c * cell_size + gy * r * cell_size;
  }
  for (int b = 0; b < 8; ++b) {
    const double cr = U(rng) * n, cc = U(rng) * n, s = 3 + 5 * U(rng), h = (U(rng) * 2 - 1) * 3;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        g(r, c) += h * std::exp(-((r - cr) * (r - cr) + (c - cc) * (c - cc)) / (2 * s * s));
      }
    }
  }
  return g;
}

/// Annual irradiation per cell with visibility and sky view factor taken
/// from direct ray marches instead of the horizon field.
inline HeightGrid flux(const HeightGrid& dsm, const sunroof::NormalField& normals,
                       const std::vector<sunroof::SunSample>& samples, int svf_azimuths = 64,
                       double step = 0.1) {
  HeightGrid out(dsm.geometry(), 0.0);
  double zmax = -1e300;
  for (const double v : dsm.values()) zmax = std::max(zmax, v);
  for (int r = 0; r < dsm.height(); ++r) {
    for (int c = 0; c < dsm.width(); ++c) {
      const std::size_t i = dsm.geometry().index(r, c);
      if (normals.is_nodata(i)) {
        out.set_nodata(i);
        continue;
      }
      double svf = 0.0;
      for (int a = 0; a < svf_azimuths; ++a) {
        const double h = sunroof::deg2rad(ray_march(dsm, r, c, 360.0 * a / svf_azimuths, step, 90.0, zmax));
        svf += std::cos(h) * std::cos(h);
      }
      svf /= svf_azimuths;
      const sunroof::Vec3& n = normals.normals[i];
      double wh = 0.0;
      for (const auto& s : samples) {
        if (s.elevation_deg > 0.0 && s.dni > 0.0) {
          const double cos_inc = n.dot(sunroof::sun_direction(s.azimuth_deg, s.elevation_deg));
          if (cos_inc > 0.0 && ray_march(dsm, r, c, s.azimuth_deg, step, s.elevation_deg, zmax) <= s.elevation_deg) {
            wh += s.dni * cos_inc * s.efficiency * s.hours;
          }
        }
        wh += s.dhi * svf * s.efficiency * s.hours;
      }
      out[i] = wh / 1000.0;
    }
  }
  return out;
}

/// Minimum of `energy` over every labeling of n variables with k labels.
inline double exhaustive_min(int n, int k, const std::function<double(const std::vector<int>&)>& energy) {
  std::vector<int> x(static_cast<std::size_t>(n), 0);
  double best = energy(x);
  while (true) {
    int i = 0;
    while (i < n && x[static_cast<std::size_t>(i)] == k - 1) x[static_cast<std::size_t>(i++)] = 0;
    if (i == n) break;
    ++x[static_cast<std::size_t>(i)];
    best = std::min(best, energy(x));
  }
  return best;
}

}  // namespace oracle
