#include "sunroof/panel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Geometry>

namespace sunroof {

void PanelSpec::validate() const {
  if (!(width > 0.0) || !(height > 0.0)) throw ContractError("panel dimensions must be positive");
  if (!(rated_power > 0.0)) throw ContractError("panel rated power must be positive");
  if (!(spacing >= 0.0)) throw ContractError("panel spacing must be non-negative");
  if (!(system_efficiency > 0.0 && system_efficiency <= 1.0)) {
    throw ContractError("system efficiency must be in (0, 1]");
  }
}

void LayoutConfig::validate() const {
  if (phase_steps < 1) throw ContractError("phase_steps must be at least 1");
  if (!(max_pitch > 0.0 && max_pitch < 90.0)) throw ContractError("max_pitch must be in (0, 90)");
}

std::pair<Vec3, Vec3> eaves_upslope(const Vec3& normal) {
  if (!std::isfinite(normal.squaredNorm()) || std::abs(normal.norm() - 1.0) > 1e-6) {
    throw ContractError("roof normal must be unit length");
  }
  if (!(normal.z() > 0.0)) throw ContractError("roof normal must point up");
  const double h = std::hypot(normal.x(), normal.y());
  if (h < 1e-9) return {Vec3::UnitX(), Vec3::UnitY()};
  const Vec3 e(normal.y() / h, -normal.x() / h, 0.0);
  return {e, e.cross(normal)};
}

namespace {

struct Rect2 {
  double cx, cy;       // center
  double ex, ey;       // unit eaves direction
  double ux, uy;       // unit up-slope direction projected to the ground
  double half_w, half_h;  // half extents along e and u
};

Rect2 ground_rect(const Vec3& center, const Vec3& eaves, const Vec3& upslope, double width, double height) {
  const double el = std::hypot(eaves.x(), eaves.y());
  const double ul = std::hypot(upslope.x(), upslope.y());
  if (el < 1e-9 || ul < 1e-9) throw ContractError("panel basis has no ground extent");
  return {center.x(), center.y(), eaves.x() / el, eaves.y() / el, upslope.x() / ul, upslope.y() / ul,
          0.5 * width * el, 0.5 * height * ul};
}

// Separating axis test between the rectangle and an axis-aligned square.
bool overlaps(const Rect2& r, double sx, double sy, double half) {
  constexpr double kEps = 1e-9;
  auto separated = [&](double ax, double ay) {
    const double rc = r.cx * ax + r.cy * ay;
    const double rr = r.half_w * std::abs(r.ex * ax + r.ey * ay) + r.half_h * std::abs(r.ux * ax + r.uy * ay);
    const double sc = sx * ax + sy * ay;
    const double sr = half * (std::abs(ax) + std::abs(ay));
    return std::abs(rc - sc) >= rr + sr - kEps;
  };
  return !(separated(1, 0) || separated(0, 1) || separated(r.ex, r.ey) || separated(r.ux, r.uy));
}

}  // namespace

std::vector<std::size_t> panel_cells(const GridGeometry& g, const Vec3& center, const Vec3& eaves,
                                     const Vec3& upslope, double width, double height) {
  const Rect2 r = ground_rect(center, eaves, upslope, width, height);
  const double rx = r.half_w * std::abs(r.ex) + r.half_h * std::abs(r.ux);
  const double ry = r.half_w * std::abs(r.ey) + r.half_h * std::abs(r.uy);
  const double cs = g.cell_size;
  const int c0 = std::max(0, static_cast<int>(std::floor((r.cx - rx - g.x_ll) / cs)));
  const int c1 = std::min(g.width - 1, static_cast<int>(std::floor((r.cx + rx - g.x_ll) / cs)));
  const double y_top = g.y_ll + g.height * cs;
  const int r0 = std::max(0, static_cast<int>(std::floor((y_top - (r.cy + ry)) / cs)));
  const int r1 = std::min(g.height - 1, static_cast<int>(std::floor((y_top - (r.cy - ry)) / cs)));
  std::vector<std::size_t> out;
  for (int row = r0; row <= r1; ++row) {
    for (int col = c0; col <= c1; ++col) {
      if (overlaps(r, g.cell_x(col), g.cell_y(row), 0.5 * cs)) out.push_back(g.index(row, col));
    }
  }
  return out;
}

std::vector<PanelPlacement> layout_panels(const RoofSegment& segment, std::int32_t segment_id,
                                          const PanelSpec& spec, const HeightGrid& flux,
                                          const LayoutConfig& cfg, std::span<const std::uint8_t> blocked) {
  spec.validate();
  cfg.validate();
  const GridGeometry& g = flux.geometry();
  if (!blocked.empty() && blocked.size() != g.cell_count()) {
    throw ContractError("blocked mask does not match the flux grid");
  }
  if (segment.cells.empty() || segment.pitch_deg() > cfg.max_pitch) return {};
  for (const std::size_t c : segment.cells) {
    if (c >= g.cell_count()) throw ContractError("segment cell outside the flux grid");
  }
  if (!std::is_sorted(segment.cells.begin(), segment.cells.end())) {
    throw ContractError("segment cells must be ascending");
  }

  const Plane& plane = segment.plane;
  const auto [e, u] = eaves_upslope(plane.normal);
  auto on_plane = [&](double x, double y) {
    // z on the plane above ground point (x, y).
    const Vec3& n = plane.normal;
    return Vec3(x, y, (plane.offset - n.x() * x - n.y() * y) / n.z());
  };

  // Plane-coordinate extent of the segment's cell corners.
  double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
  const double half = 0.5 * g.cell_size;
  for (const std::size_t c : segment.cells) {
    const int row = static_cast<int>(c / static_cast<std::size_t>(g.width));
    const int col = static_cast<int>(c % static_cast<std::size_t>(g.width));
    for (const double dx : {-half, half}) {
      for (const double dy : {-half, half}) {
        const Vec3 p = on_plane(g.cell_x(col) + dx, g.cell_y(row) + dy);
        amin = std::min(amin, e.dot(p));
        amax = std::max(amax, e.dot(p));
        bmin = std::min(bmin, u.dot(p));
        bmax = std::max(bmax, u.dot(p));
      }
    }
  }

  auto usable = [&](std::size_t c) {
    if (!blocked.empty() && blocked[c]) return false;
    if (flux.is_nodata(c)) return false;
    return std::binary_search(segment.cells.begin(), segment.cells.end(), c);
  };

  const double pw = spec.width + spec.spacing, ph = spec.height + spec.spacing;
  const double panel_energy_scale = spec.area() * spec.system_efficiency;
  std::vector<PanelPlacement> best;
  double best_energy = -1.0, best_area = std::numeric_limits<double>::infinity();

  for (int pb = 0; pb < cfg.phase_steps; ++pb) {
    for (int pa = 0; pa < cfg.phase_steps; ++pa) {
      const double fa = pw * pa / cfg.phase_steps, fb = ph * pb / cfg.phase_steps;
      const long i0 = static_cast<long>(std::floor((amin - fa) / pw));
      const long i1 = static_cast<long>(std::ceil((amax - fa) / pw));
      const long j0 = static_cast<long>(std::floor((bmin - fb) / ph));
      const long j1 = static_cast<long>(std::ceil((bmax - fb) / ph));
      std::vector<PanelPlacement> panels;
      double energy = 0.0;
      double lo_a = 1e300, hi_a = -1e300, lo_b = 1e300, hi_b = -1e300;
      for (long j = j0; j <= j1; ++j) {
        for (long i = i0; i <= i1; ++i) {
          const double a0 = fa + static_cast<double>(i) * pw, b0 = fb + static_cast<double>(j) * ph;
          if (a0 < amin - 1e-9 || a0 + spec.width > amax + 1e-9) continue;
          if (b0 < bmin - 1e-9 || b0 + spec.height > bmax + 1e-9) continue;
          const Vec3 center =
              (a0 + 0.5 * spec.width) * e + (b0 + 0.5 * spec.height) * u + plane.offset * plane.normal;
          auto cells = panel_cells(g, center, e, u, spec.width, spec.height);
          if (cells.empty() || !std::all_of(cells.begin(), cells.end(), usable)) continue;
          double sum = 0.0;
          for (const std::size_t c : cells) sum += flux[c];
          PanelPlacement p;
          p.id = static_cast<std::int32_t>(panels.size());
          p.segment_id = segment_id;
          p.center = center;
          p.eaves = e;
          p.upslope = u;
          p.annual_energy = sum / static_cast<double>(cells.size()) * panel_energy_scale;
          p.cells = std::move(cells);
          energy += p.annual_energy;
          lo_a = std::min(lo_a, a0);
          hi_a = std::max(hi_a, a0 + spec.width);
          lo_b = std::min(lo_b, b0);
          hi_b = std::max(hi_b, b0 + spec.height);
          panels.push_back(std::move(p));
        }
      }
      const double area = panels.empty() ? 0.0 : (hi_a - lo_a) * (hi_b - lo_b);
      const double tol = 1e-9 * std::max(1.0, std::abs(best_energy));
      if (energy > best_energy + tol || (energy >= best_energy - tol && area < best_area - 1e-12)) {
        best = std::move(panels);
        best_energy = energy;
        best_area = area;
      }
    }
  }
  return best;
}

int panels_for_capacity(double target_kw, double rated_power) {
  if (!(target_kw >= 0.0) || !std::isfinite(target_kw)) throw ContractError("target capacity must be non-negative");
  if (!(rated_power > 0.0)) throw ContractError("rated power must be positive");
  return static_cast<int>(std::floor(target_kw * 1000.0 / rated_power + 1e-9));
}

std::vector<PanelPlacement> select_subarray(std::span<const PanelPlacement> panels, double target_kw,
                                            double rated_power, std::vector<std::string>* warnings) {
  const int k = panels_for_capacity(target_kw, rated_power);
  if (k == 0) {
    if (warnings) {
      warnings->push_back("target " + std::to_string(target_kw) + " kW is below one panel; sub-array is empty");
    }
    return {};
  }
  std::vector<std::size_t> order(panels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (panels[a].annual_energy != panels[b].annual_energy) return panels[a].annual_energy > panels[b].annual_energy;
    return panels[a].id < panels[b].id;
  });
  if (static_cast<std::size_t>(k) > order.size() && warnings) {
    warnings->push_back("target " + std::to_string(target_kw) + " kW needs " + std::to_string(k) +
                        " panels; only " + std::to_string(order.size()) + " fit");
  }
  order.resize(std::min(order.size(), static_cast<std::size_t>(k)));
  std::vector<PanelPlacement> out;
  out.reserve(order.size());
  for (const std::size_t i : order) out.push_back(panels[i]);
  return out;
}

double total_energy(std::span<const PanelPlacement> panels) {
  double sum = 0.0;
  for (const auto& p : panels) sum += p.annual_energy;
  return sum;
}

}  // namespace sunroof
