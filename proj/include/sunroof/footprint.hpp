#pragma once

// Footprint refinement by per-building binary graph cuts that fuse building
// probabilities with DSM height discontinuities.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sunroof/raster.hpp"

namespace sunroof {

struct BoundingBox {
  int row0 = 0, col0 = 0, row1 = -1, col1 = -1;  ///< inclusive
  bool operator==(const BoundingBox&) const = default;
};

/// Building id per cell (0 = background) plus per-id bounding boxes.
struct FootprintSet {
  LabelGrid labels;
  std::map<std::int32_t, BoundingBox> boxes;

  static FootprintSet from_labels(LabelGrid labels);
  std::vector<std::int32_t> ids() const;
  std::vector<std::size_t> cells(std::int32_t id) const;
};

struct RefineConfig {
  double unary_weight = 1.0;
  double pairwise_weight = 1.0;
  double height_discontinuity_scale = 0.5;  ///< meters
  double probability_floor = 1e-3;
  int dilation_radius = 20;  ///< cells

  void validate() const;
};

/// Binary labeling problem with Potts pairwise terms.
struct BinaryCutProblem {
  struct Edge {
    std::size_t a = 0, b = 0;
    double weight = 0.0;  ///< paid when labels of a and b differ
  };
  std::vector<std::array<double, 2>> unary;  ///< cost of label 0 / label 1
  std::vector<Edge> edges;

  double energy(std::span<const std::uint8_t> labels) const;
};

/// Globally optimal labeling. Throws ContractError on negative or
/// non-finite costs.
std::vector<std::uint8_t> binary_min_cut(const BinaryCutProblem& problem);

struct RefineResult {
  FootprintSet footprints;
  std::vector<std::string> warnings;
};

RefineResult refine_footprints(const HeightGrid& dsm, const FootprintSet& footprints,
                               const ProbabilityGrid& probs, const RefineConfig& cfg,
                               int jobs = 1);

/// Intersection over union between the cells labeled `id_a` in `a` and
/// `id_b` in `b`; id 0 in both means "any nonzero label".
double footprint_iou(const LabelGrid& a, std::int32_t id_a, const LabelGrid& b, std::int32_t id_b);

}  // namespace sunroof
