#pragma once

// Roof plane segmentation: sequential RANSAC proposals refined by
// alpha-expansion graph cuts and least-squares refits.
//
// Energy of a labeling (summed over roof cells p):
//   D(p) + m * sum_{q in N4(p)} c(l_p, l_q)
// with D(p) = |n . x_p - offset| for a plane label and a fixed penalty for
// OUTLIER, and c(a, b) = 0 when a == b or either label is OUTLIER, otherwise
// 1 + max(0, n_a . n_b). Every unordered neighbor pair is counted from both
// sides, so a boundary edge costs 2 m c(a, b).

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sunroof/raster.hpp"

namespace sunroof {

struct Plane {
  Vec3 normal = Vec3::UnitZ();  ///< unit length, normal.z() > 0
  double offset = 0.0;          ///< plane is {x : normal . x = offset}

  /// Normalizes and orients upward. Throws for (near-)vertical normals.
  static Plane from(const Vec3& normal, double offset);
  static Plane through(const Vec3& normal, const Vec3& point) {
    const Vec3 n = normal.normalized();
    return from(n, n.dot(point));
  }

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
  double distance(const Vec3& p) const;
  double pitch_deg() const;
  /// Compass direction the plane faces (downslope), clockwise from north.
  double azimuth_deg() const;
};

/// Total least squares fit. Empty for fewer than 3 points, collinear
/// points, or a vertical best-fit plane.
std::optional<Plane> fit_plane(std::span<const Vec3> points);

inline constexpr int kOutlier = -1;

struct SegmentConfig {
  double ransac_inlier_threshold = 0.05;  ///< meters
  int ransac_iterations = 200;
  int min_inlier_count = 8;
  int max_planes = 8;
  double smoothness_weight = 0.5;  ///< m
  int refit_rounds = 3;
  double min_segment_area = 1.0;  ///< m^2 of sloped surface
  double max_pitch = 60.0;        ///< degrees
  double outlier_penalty_factor = 3.0;  ///< outlier cost = factor * inlier threshold
  int max_sweeps = 10;  ///< expansion sweeps per refit round (stops early when stable)
  std::uint64_t seed = 1;

  double outlier_penalty() const { return outlier_penalty_factor * ransac_inlier_threshold; }
  void validate() const;
};

/// Roof cells as 3D points with their 4-neighborhood.
struct RoofGraph {
  std::vector<Vec3> points;
  std::vector<std::size_t> cells;  ///< grid index per point
  std::vector<std::pair<std::size_t, std::size_t>> edges;  ///< unordered, a < b
};

RoofGraph make_roof_graph(const HeightGrid& dsm, std::span<const std::size_t> cells);

struct SegmentationState {
  std::shared_ptr<const RoofGraph> graph;
  std::vector<int> labels;  ///< plane index or kOutlier, one per point
  std::vector<Plane> planes;
  double smoothness_weight = 0.5;
  double outlier_penalty = 0.15;

  double data_cost(std::size_t point, int label) const;
  double label_cost(int a, int b) const;
};

double segmentation_energy(const SegmentationState& state);
double data_term(const SegmentationState& state);

/// Labeling with minimal data cost per point (ties keep the lower index).
SegmentationState initial_state(std::shared_ptr<const RoofGraph> graph, std::vector<Plane> planes,
                                const SegmentConfig& cfg);

/// One expansion move toward plane `alpha`. Energy never increases.
SegmentationState alpha_expansion(const SegmentationState& state, int alpha);

/// Expansion toward OUTLIER. Exact when the neighbor graph is bipartite (the
/// 4-connected grid always is); otherwise pairs of differing plane labels
/// are replaced by a modular upper bound that is tight at the current
/// labeling. Energy never increases.
SegmentationState outlier_expansion(const SegmentationState& state);

/// Expansions over every plane, the outlier move, then joint relabeling of
/// 2x2 blocks. Returns true when any label changed.
bool expansion_sweep(SegmentationState& state);

/// Refits every plane to its cells; labels with fewer than 3 cells are
/// removed and their cells become OUTLIER. Never increases the data term.
SegmentationState refit_planes(const SegmentationState& state);

std::vector<Plane> ransac_planes(std::span<const Vec3> points, const SegmentConfig& cfg);

struct RoofSegment {
  Plane plane;
  std::vector<std::size_t> cells;  ///< grid indices, ascending
  double area = 0.0;               ///< sloped area, m^2
  double pitch_deg() const { return plane.pitch_deg(); }
  double azimuth_deg() const { return plane.azimuth_deg(); }
};

std::vector<RoofSegment> segment_roof(const HeightGrid& dsm,
                                      std::span<const std::size_t> footprint_cells,
                                      const SegmentConfig& cfg,
                                      std::vector<std::string>* diagnostics = nullptr);

}  // namespace sunroof
