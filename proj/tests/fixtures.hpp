#pragma once

// Test inputs and analytic references shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "sunroof/graph_cut.hpp"
#include "sunroof/roof_segment.hpp"
#include "sunroof/solar.hpp"

namespace fixture {

using namespace sunroof;

inline std::vector<std::size_t> all_cells(const HeightGrid& g) {
  std::vector<std::size_t> v(g.size());
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// w x h grid whose left half lies on plane a and right half on plane b,
// with optional noise.
inline HeightGrid two_planes(int w, int h, const Plane& a, const Plane& b, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, noise);
  HeightGrid g(GridGeometry{w, h, 0.5});
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Plane& p = c < w / 2 ? a : b;
      const double x = g.geometry().cell_x(c), y = g.geometry().cell_y(r);
      g(r, c) = (p.offset - p.normal.x() * x - p.normal.y() * y) / p.normal.z() + (noise > 0 ? N(rng) : 0.0);
    }
  }
  return g;
}

inline double angle_deg(const Vec3& a, const Vec3& b) { return rad2deg(std::acos(std::clamp(a.dot(b), -1.0, 1.0))); }

inline double pair_energy(const SegmentationState& s, const std::vector<int>& labels) {
  SegmentationState t = s;
  t.labels = labels;
  return segmentation_energy(t);
}

inline SegmentationState random_state(std::uint64_t seed, int w, int h, int planes) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  HeightGrid g(GridGeometry{w, h, 0.5});
  for (auto& v : g.values()) v = 3.0 + 0.3 * U(rng);
  auto graph = std::make_shared<const RoofGraph>(make_roof_graph(g, all_cells(g)));
  std::vector<Plane> ps;
  for (int k = 0; k < planes; ++k) ps.push_back(Plane::from(Vec3(0.4 * U(rng), 0.4 * U(rng), 1.0), 3.0 + 0.2 * U(rng)));
  SegmentConfig cfg;
  cfg.smoothness_weight = 0.02 + 0.2 * (U(rng) + 1.0);
  cfg.ransac_inlier_threshold = 0.02 + 0.05 * (U(rng) + 1.0);
  SegmentationState s = initial_state(graph, ps, cfg);
  std::uniform_int_distribution<int> L(-1, planes - 1);
  for (auto& l : s.labels) l = L(rng);
  return s;
}

// 3x3 crop of a surface made of noisy half-planes (two or three facets
// split by random lines), labels shuffled at random.
inline SegmentationState half_plane_crop(std::uint64_t seed, double outlier_factor = 3.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const int planes = 2 + static_cast<int>(seed % 2);
  std::vector<Plane> ps;
  for (int k = 0; k < planes; ++k) ps.push_back(Plane::from(Vec3(0.6 * U(rng), 0.6 * U(rng), 1.0), 3.0 + 0.3 * U(rng)));
  std::normal_distribution<double> N(0.0, 0.01 + 0.01 * (U(rng) + 1.0));
  const double t1 = 3.14159 * U(rng), t2 = 3.14159 * U(rng), o1 = 0.5 * U(rng), o2 = 0.5 * U(rng);
  HeightGrid g(GridGeometry{3, 3, 0.5});
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      const double x = g.geometry().cell_x(c) - 0.75, y = g.geometry().cell_y(r) - 0.75;
      int k = std::cos(t1) * x + std::sin(t1) * y > o1 ? 1 : 0;
      if (planes == 3 && std::cos(t2) * x + std::sin(t2) * y > o2) k = 2;
      const Plane& p = ps[static_cast<std::size_t>(k)];
      g(r, c) = (p.offset - p.normal.x() * g.geometry().cell_x(c) - p.normal.y() * g.geometry().cell_y(r)) /
                    p.normal.z() + N(rng);
    }
  }
  auto graph = std::make_shared<const RoofGraph>(make_roof_graph(g, all_cells(g)));
  SegmentConfig cfg;
  cfg.outlier_penalty_factor = outlier_factor;
  SegmentationState s = initial_state(graph, ps, cfg);
  std::uniform_int_distribution<int> L(outlier_factor > 100.0 ? 0 : -1, planes - 1);
  for (auto& l : s.labels) l = L(rng);
  return s;
}

// Random w x h grid problem with 4-neighbor Potts edges.
inline BinaryCutProblem random_problem(int w, int h, std::uint64_t seed, double pair_scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  BinaryCutProblem p;
  p.unary.resize(static_cast<std::size_t>(w * h));
  for (auto& u : p.unary) u = {U(rng) * 2.0, U(rng) * 2.0};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto i = static_cast<std::size_t>(r * w + c);
      if (c + 1 < w) p.edges.push_back({i, i + 1, U(rng) * pair_scale});
      if (r + 1 < h) p.edges.push_back({i, i + static_cast<std::size_t>(w), U(rng) * pair_scale});
    }
  }
  return p;
}

inline double brute_force(const BinaryCutProblem& p) {
  const int n = static_cast<int>(p.unary.size());
  return oracle::exhaustive_min(n, 2, [&](const std::vector<int>& x) {
    std::vector<std::uint8_t> l(x.begin(), x.end());
    return p.energy(l);
  });
}

inline NormalField constant_normals(const GridGeometry& g, const Vec3& n) {
  NormalField f;
  f.geometry = g;
  f.normals.assign(g.cell_count(), n.normalized());
  f.nodata.assign(g.cell_count(), 0);
  return f;
}

inline HorizonField flat_horizons(const GridGeometry& g, int count) {
  HorizonField h;
  h.geometry = g;
  h.azimuth_count = count;
  h.angles.assign(g.cell_count() * static_cast<std::size_t>(count), 0.0f);
  return h;
}

// Integral of max(0, a + b cos w + c sin w) restricted to sun-up hour angles
// where s0 + s1 cos w > 0, for w in [-pi, pi].
inline double clipped_integral(double a, double b, double c, double s0, double s1) {
  const double pi = std::numbers::pi;
  std::vector<double> cuts{-pi, pi};
  const auto roots = [&](double p, double q, double r) {  // p + q cos w + r sin w = 0
    const double R = std::hypot(q, r);
    if (R == 0.0 || std::abs(p) > R) return;
    const double phi = std::atan2(r, q), d = std::acos(-p / R);
    for (double w : {phi + d, phi - d}) {
      while (w > pi) w -= 2 * pi;
      while (w < -pi) w += 2 * pi;
      cuts.push_back(w);
    }
  };
  roots(a, b, c);
  roots(s0, s1, 0.0);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double w0 = cuts[i], w1 = cuts[i + 1], m = 0.5 * (w0 + w1);
    if (w1 - w0 <= 0.0) continue;
    if (a + b * std::cos(m) + c * std::sin(m) <= 0.0 || s0 + s1 * std::cos(m) <= 0.0) continue;
    total += a * (w1 - w0) + b * (std::sin(w1) - std::sin(w0)) - c * (std::cos(w1) - std::cos(w0));
  }
  return total;
}

// Annual DNI-only irradiation (Wh/m^2) of a plane with normal (e, n, u)
// integrated continuously over each day's hour angle.
inline double analytic_annual(double lat_deg, const Vec3& normal, double dni, int year) {
  const double phi = deg2rad(lat_deg);
  const int days = std::chrono::year{year}.is_leap() ? 366 : 365;
  double wh = 0.0;
  for (int d = 0; d < days; ++d) {
    const double g = 2 * std::numbers::pi * (d + 0.5) / days;
    const double decl = 0.006918 - 0.399912 * std::cos(g) + 0.070257 * std::sin(g) - 0.006758 * std::cos(2 * g) +
                        0.000907 * std::sin(2 * g) - 0.002697 * std::cos(3 * g) + 0.00148 * std::sin(3 * g);
    // sun vector (east, north, up) as a function of hour angle w
    const double ne = normal.x(), nn = normal.y(), nu = normal.z();
    const double a = nu * std::sin(phi) * std::sin(decl) + nn * std::cos(phi) * std::sin(decl);
    const double b = nu * std::cos(phi) * std::cos(decl) - nn * std::sin(phi) * std::cos(decl);
    const double c = -ne * std::cos(decl);
    const double s0 = std::sin(phi) * std::sin(decl), s1 = std::cos(phi) * std::cos(decl);
    wh += dni * 24.0 / (2 * std::numbers::pi) * clipped_integral(a, b, c, s0, s1);
  }
  return wh;
}

inline WeatherSeries constant_year(int year, double dni, double dhi) {
  WeatherSeries w;
  for (auto t = make_time(year, 1, 1); t < make_time(year + 1, 1, 1); t += std::chrono::hours{1}) {
    w.records.push_back({t, dni, dhi, 25.0, 1.0});
  }
  return w;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace fixture
