#include "sunroof/raster.hpp"

#include <algorithm>
#include <cmath>

namespace sunroof {

void GridGeometry::validate() const {
  if (width <= 0 || height <= 0) {
    throw ContractError("grid dimensions must be positive, got " + std::to_string(width) + "x" +
                        std::to_string(height));
  }
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
    throw ContractError("grid cell_size must be positive and finite");
  }
  if (!std::isfinite(x_ll) || !std::isfinite(y_ll)) {
    throw ContractError("grid origin must be finite");
  }
}

HeightGrid::HeightGrid(const GridGeometry& geometry, double fill)
    : values_(geometry, fill), nodata_(geometry.cell_count(), 0) {}

std::size_t HeightGrid::valid_count() const {
  return static_cast<std::size_t>(std::count(nodata_.begin(), nodata_.end(), std::uint8_t{0}));
}

void HeightGrid::validate() const {
  geometry().validate();
  for (std::size_t i = 0; i < size(); ++i) {
    if (!is_nodata(i) && !std::isfinite(values_[i])) {
      const auto w = static_cast<std::size_t>(width());
      throw Error("non-finite elevation at row " + std::to_string(i / w) + ", col " +
                  std::to_string(i % w));
    }
  }
}

ProbabilityGrid::ProbabilityGrid(const GridGeometry& geometry, double fill)
    : values_(geometry, std::clamp(fill, 0.0, 1.0)) {}

void ProbabilityGrid::set(std::size_t i, double p) {
  values_[i] = std::isfinite(p) ? std::clamp(p, 0.0, 1.0) : 0.0;
}

ProbabilityGrid ProbabilityGrid::from_heights(const HeightGrid& grid) {
  ProbabilityGrid out(grid.geometry());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.set(i, grid.is_nodata(i) ? 0.0 : grid[i]);
  }
  return out;
}

HeightGrid ProbabilityGrid::to_heights() const {
  HeightGrid out(geometry());
  for (std::size_t i = 0; i < size(); ++i) out[i] = values_[i];
  return out;
}

namespace {

// One pass of a truncated box mean along rows (horizontal) or columns.
HeightGrid box_pass(const HeightGrid& in, int radius, bool horizontal) {
  const int w = in.width();
  const int h = in.height();
  HeightGrid out(in.geometry());
  const int lines = horizontal ? h : w;
  const int len = horizontal ? w : h;
  std::vector<int> bad(static_cast<std::size_t>(len) + 1);
  for (int line = 0; line < lines; ++line) {
    auto at = [&](int k) {
      return horizontal ? in.geometry().index(line, k) : in.geometry().index(k, line);
    };
    bad[0] = 0;
    for (int k = 0; k < len; ++k) {
      const std::size_t i = at(k);
      bad[k + 1] = bad[k] + (in.is_nodata(i) ? 1 : 0);
    }
    for (int k = 0; k < len; ++k) {
      const int lo = std::max(0, k - radius);
      const int hi = std::min(len - 1, k + radius);
      const std::size_t i = at(k);
      if (bad[hi + 1] - bad[lo] > 0) {
        out.set_nodata(i);
        out[i] = 0.0;
        continue;
      }
      if (radius == 0) {
        out[i] = in[i];
      } else {
        // Direct sum keeps the result exactly linear in the input.
        double s = 0.0;
        for (int t = lo; t <= hi; ++t) s += in[at(t)];
        out[i] = s / static_cast<double>(hi - lo + 1);
      }
    }
  }
  return out;
}

}  // namespace

HeightGrid box_smooth(const HeightGrid& grid, int radius) {
  if (radius < 0) throw ContractError("smoothing_radius must be >= 0");
  if (radius == 0) return grid;
  return box_pass(box_pass(grid, radius, true), radius, false);
}

Gradients compute_gradients(const HeightGrid& grid, int smoothing_radius, YAxis y_axis) {
  if (smoothing_radius < 0) throw ContractError("smoothing_radius must be >= 0");
  const int w = grid.width();
  const int h = grid.height();
  if (w < 2 || h < 2) throw Error("gradients need at least a 2x2 grid");
  if (grid.valid_count() < 4) throw Error("gradients need at least 4 valid cells (grid is degenerate)");

  const HeightGrid s = box_smooth(grid, smoothing_radius);
  const double cs = grid.cell_size();
  Gradients g{HeightGrid(grid.geometry()), HeightGrid(grid.geometry())};

  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = grid.geometry().index(r, c);
      const int c0 = std::max(0, c - 1), c1 = std::min(w - 1, c + 1);
      const int r0 = std::max(0, r - 1), r1 = std::min(h - 1, r + 1);
      const bool x_bad = s.is_nodata(r, c0) || s.is_nodata(r, c1);
      const bool y_bad = s.is_nodata(r0, c) || s.is_nodata(r1, c);
      if (x_bad || y_bad || s.is_nodata(i)) {
        g.dx.set_nodata(i);
        g.dy.set_nodata(i);
        continue;
      }
      g.dx[i] = (s(r, c1) - s(r, c0)) / ((c1 - c0) * cs);
      // Row order runs south, so the northward slope is the negated row slope.
      const double row_slope = (s(r1, c) - s(r0, c)) / ((r1 - r0) * cs);
      g.dy[i] = y_axis == YAxis::kNorth ? -row_slope : row_slope;
    }
  }
  return g;
}

NormalField compute_normals(const HeightGrid& grid, int smoothing_radius,
                            NormalConvention convention) {
  const YAxis axis =
      convention == NormalConvention::kNorthUp ? YAxis::kNorth : YAxis::kRowOrder;
  const Gradients g = compute_gradients(grid, smoothing_radius, axis);
  NormalField field;
  field.geometry = grid.geometry();
  field.normals.assign(grid.size(), Vec3::Zero());
  field.nodata.assign(grid.size(), 0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (g.dx.is_nodata(i)) {
      field.nodata[i] = 1;
      continue;
    }
    const double ny = convention == NormalConvention::kNorthUp ? -g.dy[i] : g.dy[i];
    field.normals[i] = Vec3(-g.dx[i], ny, 1.0).normalized();
  }
  return field;
}

Vec3 sun_direction(double azimuth_deg, double elevation_deg) {
  const double az = deg2rad(azimuth_deg);
  const double el = deg2rad(elevation_deg);
  return {std::cos(el) * std::sin(az), std::cos(el) * std::cos(az), std::sin(el)};
}

GrayImage hillshade(const HeightGrid& grid, double sun_azimuth_deg, double sun_elevation_deg,
                    int smoothing_radius) {
  if (!(sun_elevation_deg > 0.0 && sun_elevation_deg <= 90.0)) {
    throw ContractError("hillshade sun elevation must lie in (0, 90]");
  }
  const NormalField normals = compute_normals(grid, smoothing_radius);
  const Vec3 s = sun_direction(sun_azimuth_deg, sun_elevation_deg);
  GrayImage out(grid.geometry(), 0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (normals.is_nodata(i)) continue;
    const double lambert = std::max(0.0, normals.normals[i].dot(s));
    // The epsilon absorbs rounding in sin/cos so exact halves round up.
    out[i] = static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * lambert + 1e-9), 0L, 255L));
  }
  return out;
}

}  // namespace sunroof
