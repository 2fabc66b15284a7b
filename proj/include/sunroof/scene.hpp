#pragma once

// Deterministic procedural scenes with ground truth, and a degradation model
// producing paired lower quality inputs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sunroof/footprint.hpp"
#include "sunroof/raster.hpp"
#include "sunroof/roof_segment.hpp"

namespace sunroof {

enum class RoofStyle { kFlat, kGabled, kHipped, kShed };

std::string to_string(RoofStyle style);
RoofStyle roof_style_from_string(const std::string& name);

struct SceneSpec {
  std::uint64_t rng_seed = 1;
  int extent = 128;         ///< cells per side
  double cell_size = 0.5;   ///< meters
  int building_count = 3;
  std::vector<RoofStyle> roof_styles{RoofStyle::kFlat, RoofStyle::kGabled, RoofStyle::kHipped,
                                     RoofStyle::kShed};
  int tree_count = 4;
  double obstacle_density = 1.0;   ///< mean obstacles per roof
  double terrain_amplitude = 1.0;  ///< meters
  /// Chance that a tree is planted straddling a roof edge.
  double tree_overhang_probability = 0.0;

  void validate() const;
};

struct Tree {
  double x = 0, y = 0;   ///< canopy center, world meters
  double radius = 2.0;   ///< canopy radius, meters
  double top = 6.0;      ///< canopy top above local ground, meters
};

struct Obstacle {
  std::int32_t building_id = 0;
  double x = 0, y = 0;   ///< center, world meters
  double side = 0.7;     ///< square side, meters
  double height = 0.5;   ///< above the roof
};

struct TruthPlane {
  std::int32_t plane_id = 0;     ///< 1-based, unique within the scene
  std::int32_t building_id = 0;
  Plane plane;
  std::vector<std::size_t> cells;  ///< visible, obstacle-free cells, ascending
};

struct Building {
  std::int32_t id = 0;
  RoofStyle style = RoofStyle::kFlat;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  ///< world rectangle
  double base = 0;         ///< ground elevation of the slab
  double eave_height = 4;  ///< above base
  double pitch_deg = 0;
};

struct Scene {
  SceneSpec spec;
  HeightGrid dsm_hq;
  HeightGrid dtm;
  HeightGrid structures;        ///< terrain plus buildings and obstacles, no trees
  LabelGrid footprints_truth;   ///< visible roof cells per building id
  LabelGrid footprints_rough;   ///< full rectangles dilated by one cell
  LabelGrid obstacles;          ///< building id on obstacle cells
  ProbabilityGrid probabilities_hq;
  std::vector<TruthPlane> roof_planes_truth;
  std::vector<Building> buildings;
  std::vector<Tree> trees;
  std::vector<Obstacle> obstacle_list;
  RgbImage pseudo_rgb;
};

Scene generate_scene(const SceneSpec& spec);

/// Hillshade luminance modulated by per-material color.
RgbImage render_pseudo_rgb(const Scene& scene);

/// Canopy surface of one tree on top of `ground` (max-composited into `surface`).
void add_canopy(const Tree& tree, const HeightGrid& ground, HeightGrid& surface);

struct DegradeParams {
  int downsample_factor = 1;
  double gaussian_blur_sigma = 0.0;  ///< cells
  double noise_sigma = 0.0;          ///< meters
  double registration_jitter = 0.0;  ///< cells
  double foliage_change_probability = 0.0;
  double probability_softening = 0.2;  ///< pulls probabilities toward 0.5

  void validate() const;
};

struct DegradedInputs {
  HeightGrid dsm_lq;
  ProbabilityGrid probabilities_lq;
};

/// foliage edits -> sub-cell shift -> blur -> downsample -> upsample -> noise.
DegradedInputs degrade(const Scene& scene, const DegradeParams& params, std::uint64_t seed);

/// Gaussian blur with half-sample symmetric borders (preserves the mean).
HeightGrid gaussian_blur(const HeightGrid& grid, double sigma);
/// Block mean to a coarser grid and bilinear interpolation back.
HeightGrid resample_through(const HeightGrid& grid, int factor);

inline constexpr int kSceneSchemaVersion = 1;

/// Writes scene.json plus one grid file per layer into `dir`.
void write_scene(const Scene& scene, const std::filesystem::path& dir);
Scene read_scene(const std::filesystem::path& dir);

}  // namespace sunroof
