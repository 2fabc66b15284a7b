#pragma once

// Panel tiling of roof segments and fixed-capacity sub-array selection.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sunroof/raster.hpp"
#include "sunroof/roof_segment.hpp"

namespace sunroof {

struct PanelSpec {
  double width = 1.65;        ///< meters along the eaves
  double height = 0.99;       ///< meters up the slope
  double rated_power = 330.0; ///< watts
  double spacing = 0.02;      ///< meters between neighbors
  double system_efficiency = 0.85;

  double area() const { return width * height; }
  void validate() const;
};

/// In-plane basis of a roof with unit normal n (n.z > 0): e is horizontal,
/// u = e x n points up the slope. Horizontal roofs get e = x, u = y.
/// Throws ContractError for a non-unit or downward normal.
std::pair<Vec3, Vec3> eaves_upslope(const Vec3& normal);

struct PanelPlacement {
  std::int32_t id = 0;          ///< unique within a report, assigned in layout order
  std::int32_t segment_id = 0;
  Vec3 center = Vec3::Zero();   ///< on the roof plane, world meters
  Vec3 eaves = Vec3::UnitX();
  Vec3 upslope = Vec3::UnitY();
  double annual_energy = 0.0;   ///< kWh/yr
  std::vector<std::size_t> cells;  ///< grid cells under the panel, ascending
};

struct LayoutConfig {
  int phase_steps = 5;  ///< lattice offsets tried per axis
  double max_pitch = 60.0;
  void validate() const;
};

/// Regular lattice of panels over the segment, in eaves/up-slope plane
/// coordinates anchored at the world origin. Every phase on a
/// phase_steps x phase_steps grid is tried; the layout with the most
/// energy wins, then the one with the smaller bounding rectangle. A panel
/// is kept only if every cell its ground projection overlaps belongs to the
/// segment and is not blocked.
std::vector<PanelPlacement> layout_panels(const RoofSegment& segment, std::int32_t segment_id,
                                          const PanelSpec& spec, const HeightGrid& flux,
                                          const LayoutConfig& cfg = {},
                                          std::span<const std::uint8_t> blocked = {});

/// Cells whose squares overlap the ground projection of a panel with the
/// given center and basis (strict overlap).
std::vector<std::size_t> panel_cells(const GridGeometry& geometry, const Vec3& center, const Vec3& eaves,
                                     const Vec3& upslope, double width, double height);

/// Number of panels for a target capacity: floor(kW * 1000 / rated power).
int panels_for_capacity(double target_kw, double rated_power);

/// The k most productive panels (ties by id), k from panels_for_capacity.
/// k = 0 yields an empty set and a warning.
std::vector<PanelPlacement> select_subarray(std::span<const PanelPlacement> panels, double target_kw,
                                            double rated_power, std::vector<std::string>* warnings = nullptr);

double total_energy(std::span<const PanelPlacement> panels);

}  // namespace sunroof
