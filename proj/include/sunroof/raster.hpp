#pragma once

// Raster data model shared by every pipeline stage.
//
// Axis convention (used repo-wide):
//   - row index increases southward; row 0 is the northern edge
//   - column index increases eastward
//   - world frame: x east, y north, z up, meters
//   - (x_ll, y_ll) is the lower-left (south-west) corner of the raster
//
// Cell (row, col) has its center at
//   x = x_ll + (col + 0.5) * cell_size
//   y = y_ll + (height - row - 0.5) * cell_size

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sunroof {

using Vec3 = Eigen::Vector3d;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a documented precondition is violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

struct GridGeometry {
  int width = 0;
  int height = 0;
  double cell_size = 1.0;
  double x_ll = 0.0;
  double y_ll = 0.0;

  std::size_t cell_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(col);
  }
  bool contains(int row, int col) const {
    return row >= 0 && col >= 0 && row < height && col < width;
  }
  double cell_x(int col) const { return x_ll + (col + 0.5) * cell_size; }
  double cell_y(int row) const { return y_ll + (height - row - 0.5) * cell_size; }

  void validate() const;
  bool operator==(const GridGeometry&) const = default;
};

/// Dense row-major raster of T over a GridGeometry.
template <class T>
class Raster {
 public:
  Raster() = default;
  explicit Raster(const GridGeometry& geometry, T fill = T{})
      : geometry_(geometry), values_(geometry.cell_count(), fill) {
    geometry_.validate();
  }

  const GridGeometry& geometry() const { return geometry_; }
  int width() const { return geometry_.width; }
  int height() const { return geometry_.height; }
  double cell_size() const { return geometry_.cell_size; }
  std::size_t size() const { return values_.size(); }

  T& operator()(int row, int col) { return values_[geometry_.index(row, col)]; }
  const T& operator()(int row, int col) const { return values_[geometry_.index(row, col)]; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  bool operator==(const Raster&) const = default;

 private:
  GridGeometry geometry_;
  std::vector<T> values_;
};

/// Elevations (or any scalar field) in meters with a per-cell nodata mask.
class HeightGrid {
 public:
  HeightGrid() = default;
  explicit HeightGrid(const GridGeometry& geometry, double fill = 0.0);

  const GridGeometry& geometry() const { return values_.geometry(); }
  int width() const { return values_.width(); }
  int height() const { return values_.height(); }
  double cell_size() const { return values_.cell_size(); }
  std::size_t size() const { return values_.size(); }

  double& operator()(int row, int col) { return values_(row, col); }
  double operator()(int row, int col) const { return values_(row, col); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool is_nodata(std::size_t i) const { return nodata_[i] != 0; }
  bool is_nodata(int row, int col) const { return nodata_[geometry().index(row, col)] != 0; }
  void set_nodata(std::size_t i, bool nodata = true) { nodata_[i] = nodata ? 1 : 0; }
  void set_nodata(int row, int col, bool nodata = true) {
    set_nodata(geometry().index(row, col), nodata);
  }
  std::size_t valid_count() const;

  std::span<double> values() { return values_.values(); }
  std::span<const double> values() const { return values_.values(); }

  /// Throws unless every non-nodata value is finite.
  void validate() const;

  bool operator==(const HeightGrid&) const = default;

 private:
  Raster<double> values_;
  std::vector<std::uint8_t> nodata_;
};

/// Per-cell probability clamped to [0, 1].
class ProbabilityGrid {
 public:
  ProbabilityGrid() = default;
  explicit ProbabilityGrid(const GridGeometry& geometry, double fill = 0.0);

  const GridGeometry& geometry() const { return values_.geometry(); }
  int width() const { return values_.width(); }
  int height() const { return values_.height(); }
  std::size_t size() const { return values_.size(); }

  double operator()(int row, int col) const { return values_(row, col); }
  double operator[](std::size_t i) const { return values_[i]; }
  void set(std::size_t i, double p);
  void set(int row, int col, double p) { set(geometry().index(row, col), p); }
  std::span<const double> values() const { return values_.values(); }

  /// Clamps a height grid (nodata -> 0) into a probability grid.
  static ProbabilityGrid from_heights(const HeightGrid& grid);
  HeightGrid to_heights() const;

  bool operator==(const ProbabilityGrid&) const = default;

 private:
  Raster<double> values_;
};

/// Integer labels; 0 means background.
using LabelGrid = Raster<std::int32_t>;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};
using GrayImage = Raster<std::uint8_t>;
using RgbImage = Raster<Rgb>;

/// Per-cell unit normals; nodata cells carry (0, 0, 0) and are flagged.
struct NormalField {
  GridGeometry geometry;
  std::vector<Vec3> normals;
  std::vector<std::uint8_t> nodata;

  const Vec3& operator()(int row, int col) const { return normals[geometry.index(row, col)]; }
  bool is_nodata(std::size_t i) const { return nodata[i] != 0; }
};

struct Gradients {
  HeightGrid dx;  ///< dz/dx, x east, meters per meter
  HeightGrid dy;  ///< dz/dy in the orientation selected by YAxis
};

/// Orientation of the returned y gradient.
enum class YAxis {
  kNorth,     ///< dz/dy with y pointing north (default)
  kRowOrder,  ///< dz/d(row) / cell_size, i.e. positive southward
};

/// How a normal is assembled from the gradients.
enum class NormalConvention {
  /// n = normalize(-gx, -gy, 1) with gy taken northward.
  kNorthUp,
  /// n = normalize(-gx, +gy, 1) with gy taken in row order (southward).
  /// Same vector as kNorthUp under this repo's axes; kept so both forms
  /// are exercised.
  kRowOrderLiteral,
};

/// Box-smoothed central differences (one-sided at borders), normalized by
/// cell size. Any stencil touching nodata yields nodata.
Gradients compute_gradients(const HeightGrid& grid, int smoothing_radius,
                            YAxis y_axis = YAxis::kNorth);

NormalField compute_normals(const HeightGrid& grid, int smoothing_radius,
                            NormalConvention convention = NormalConvention::kNorthUp);

/// Separable box mean of the given radius; windows are truncated at the
/// raster border and any window touching nodata yields nodata.
HeightGrid box_smooth(const HeightGrid& grid, int radius);

/// Lambert shading max(0, n . s) scaled to [0, 255]. Nodata cells render 0.
GrayImage hillshade(const HeightGrid& grid, double sun_azimuth_deg, double sun_elevation_deg,
                    int smoothing_radius = 0);

/// Unit vector pointing from the ground toward the sun (x east, y north, z up).
/// Azimuth is measured clockwise from north.
Vec3 sun_direction(double azimuth_deg, double elevation_deg);

/// 3D point at the center of a cell using the cell's own elevation.
inline Vec3 cell_point(const HeightGrid& grid, int row, int col) {
  const auto& g = grid.geometry();
  return {g.cell_x(col), g.cell_y(row), grid(row, col)};
}

constexpr double kPi = 3.14159265358979323846;
inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

}  // namespace sunroof
