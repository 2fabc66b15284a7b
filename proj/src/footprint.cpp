#include "sunroof/footprint.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "sunroof/graph_cut.hpp"
#include "sunroof/parallel.hpp"

namespace sunroof {

FootprintSet FootprintSet::from_labels(LabelGrid labels) {
  FootprintSet set;
  for (int r = 0; r < labels.height(); ++r) {
    for (int c = 0; c < labels.width(); ++c) {
      const std::int32_t id = labels(r, c);
      if (id == 0) continue;
      if (id < 0) throw ContractError("footprint labels must be non-negative");
      auto [it, inserted] = set.boxes.try_emplace(id, BoundingBox{r, c, r, c});
      if (!inserted) {
        BoundingBox& b = it->second;
        b.row0 = std::min(b.row0, r);
        b.col0 = std::min(b.col0, c);
        b.row1 = std::max(b.row1, r);
        b.col1 = std::max(b.col1, c);
      }
    }
  }
  set.labels = std::move(labels);
  return set;
}

std::vector<std::int32_t> FootprintSet::ids() const {
  std::vector<std::int32_t> out;
  out.reserve(boxes.size());
  for (const auto& [id, box] : boxes) out.push_back(id);
  return out;
}

std::vector<std::size_t> FootprintSet::cells(std::int32_t id) const {
  std::vector<std::size_t> out;
  const auto it = boxes.find(id);
  if (it == boxes.end()) return out;
  const BoundingBox& b = it->second;
  for (int r = b.row0; r <= b.row1; ++r) {
    for (int c = b.col0; c <= b.col1; ++c) {
      if (labels(r, c) == id) out.push_back(labels.geometry().index(r, c));
    }
  }
  return out;
}

void RefineConfig::validate() const {
  if (unary_weight < 0 || pairwise_weight < 0) throw ContractError("refine weights must be >= 0");
  if (!(height_discontinuity_scale > 0)) {
    throw ContractError("height_discontinuity_scale must be > 0");
  }
  if (!(probability_floor > 0 && probability_floor < 0.5)) {
    throw ContractError("probability_floor must lie in (0, 0.5)");
  }
  if (dilation_radius < 0) throw ContractError("dilation_radius must be >= 0");
}

double BinaryCutProblem::energy(std::span<const std::uint8_t> labels) const {
  double e = 0.0;
  for (std::size_t i = 0; i < unary.size(); ++i) e += unary[i][labels[i] ? 1 : 0];
  for (const Edge& edge : edges) {
    if (labels[edge.a] != labels[edge.b]) e += edge.weight;
  }
  return e;
}

std::vector<std::uint8_t> binary_min_cut(const BinaryCutProblem& problem) {
  BinaryEnergy energy(problem.unary.size());
  for (std::size_t i = 0; i < problem.unary.size(); ++i) {
    const auto& u = problem.unary[i];
    if (!(u[0] >= 0) || !(u[1] >= 0) || !std::isfinite(u[0]) || !std::isfinite(u[1])) {
      throw ContractError("unary cost at node " + std::to_string(i) +
                          " must be finite and non-negative");
    }
    energy.add_unary(i, u[0], u[1]);
  }
  for (const auto& e : problem.edges) {
    if (!(e.weight >= 0) || !std::isfinite(e.weight)) {
      throw ContractError("pairwise cost must be finite and non-negative");
    }
    if (e.a >= problem.unary.size() || e.b >= problem.unary.size()) {
      throw ContractError("pairwise edge references a missing node");
    }
    energy.add_pairwise(e.a, e.b, 0.0, e.weight, e.weight, 0.0);
  }
  return energy.minimize();
}

namespace {

constexpr std::array<std::array<int, 2>, 4> kNeighbors4{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

// Multi-source BFS: every cell is owned by the id of the nearest input
// footprint (4-connected steps); ties go to whichever id reached it first,
// seeded in ascending id order.
LabelGrid owner_map(const FootprintSet& fp) {
  const GridGeometry& g = fp.labels.geometry();
  LabelGrid owner(g, 0);
  std::deque<std::size_t> queue;
  for (const std::int32_t id : fp.ids()) {
    for (const std::size_t i : fp.cells(id)) {
      owner[i] = id;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const int r = static_cast<int>(i / static_cast<std::size_t>(g.width));
    const int c = static_cast<int>(i % static_cast<std::size_t>(g.width));
    for (const auto& d : kNeighbors4) {
      const int rr = r + d[0], cc = c + d[1];
      if (!g.contains(rr, cc)) continue;
      const std::size_t j = g.index(rr, cc);
      if (owner[j] != 0) continue;
      owner[j] = owner[i];
      queue.push_back(j);
    }
  }
  return owner;
}

struct LocalCut {
  std::int32_t id = 0;
  std::vector<std::size_t> cells;  // refined cells, ascending
};

LocalCut refine_one(const HeightGrid& dsm, const FootprintSet& fp, const ProbabilityGrid& probs,
                    const LabelGrid& owner, const RefineConfig& cfg, std::int32_t id) {
  const GridGeometry& g = dsm.geometry();
  const BoundingBox& box = fp.boxes.at(id);
  const int rad = cfg.dilation_radius;
  const int r0 = std::max(0, box.row0 - rad), r1 = std::min(g.height - 1, box.row1 + rad);
  const int c0 = std::max(0, box.col0 - rad), c1 = std::min(g.width - 1, box.col1 + rad);
  const int cw = c1 - c0 + 1, ch = r1 - r0 + 1;

  // Square dilation of the input footprint, restricted to owned cells.
  std::vector<std::uint8_t> seed(static_cast<std::size_t>(cw * ch), 0);
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      seed[static_cast<std::size_t>((r - r0) * cw + (c - c0))] = fp.labels(r, c) == id ? 1 : 0;
    }
  }
  std::vector<std::uint8_t> horiz(seed.size(), 0), allowed(seed.size(), 0);
  for (int r = 0; r < ch; ++r) {
    int last = -1000000;
    for (int c = 0; c < cw; ++c) {
      if (seed[static_cast<std::size_t>(r * cw + c)]) last = c;
      if (c - last <= rad) horiz[static_cast<std::size_t>(r * cw + c)] = 1;
    }
    last = 1000000;
    for (int c = cw - 1; c >= 0; --c) {
      if (seed[static_cast<std::size_t>(r * cw + c)]) last = c;
      if (last - c <= rad) horiz[static_cast<std::size_t>(r * cw + c)] = 1;
    }
  }
  for (int c = 0; c < cw; ++c) {
    int last = -1000000;
    for (int r = 0; r < ch; ++r) {
      if (horiz[static_cast<std::size_t>(r * cw + c)]) last = r;
      if (r - last <= rad) allowed[static_cast<std::size_t>(r * cw + c)] = 1;
    }
    last = 1000000;
    for (int r = ch - 1; r >= 0; --r) {
      if (horiz[static_cast<std::size_t>(r * cw + c)]) last = r;
      if (last - r <= rad) allowed[static_cast<std::size_t>(r * cw + c)] = 1;
    }
  }

  std::vector<std::int64_t> node_of(seed.size(), -1);
  std::vector<std::size_t> grid_of;
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const std::size_t local = static_cast<std::size_t>((r - r0) * cw + (c - c0));
      if (!allowed[local] || owner(r, c) != id) continue;
      node_of[local] = static_cast<std::int64_t>(grid_of.size());
      grid_of.push_back(g.index(r, c));
    }
  }

  const double floor_p = cfg.probability_floor;
  auto edge_weight = [&](std::size_t a, std::size_t b) {
    if (dsm.is_nodata(a) || dsm.is_nodata(b)) return cfg.pairwise_weight;
    return cfg.pairwise_weight *
           std::exp(-std::abs(dsm[a] - dsm[b]) / cfg.height_discontinuity_scale);
  };

  BinaryCutProblem problem;
  problem.unary.resize(grid_of.size());
  for (std::size_t n = 0; n < grid_of.size(); ++n) {
    const double p = std::clamp(probs[grid_of[n]], floor_p, 1.0 - floor_p);
    // label 0 = background, label 1 = building
    problem.unary[n] = {cfg.unary_weight * -std::log(1.0 - p), cfg.unary_weight * -std::log(p)};
  }
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const std::int64_t n = node_of[static_cast<std::size_t>((r - r0) * cw + (c - c0))];
      if (n < 0) continue;
      const std::size_t gi = g.index(r, c);
      for (const auto& d : kNeighbors4) {
        const int rr = r + d[0], cc = c + d[1];
        if (!g.contains(rr, cc)) continue;
        const std::size_t gj = g.index(rr, cc);
        const bool inside = rr >= r0 && rr <= r1 && cc >= c0 && cc <= c1;
        const std::int64_t m =
            inside ? node_of[static_cast<std::size_t>((rr - r0) * cw + (cc - c0))] : -1;
        if (m < 0) {
          // Neighbor is fixed background: labeling this cell building cuts the edge.
          problem.unary[static_cast<std::size_t>(n)][1] += edge_weight(gi, gj);
        } else if (m > n) {
          problem.edges.push_back(
              {static_cast<std::size_t>(n), static_cast<std::size_t>(m), edge_weight(gi, gj)});
        }
      }
    }
  }

  const std::vector<std::uint8_t> labels = binary_min_cut(problem);

  // Keep the largest 4-connected component so each id stays one region.
  std::vector<std::int64_t> comp(grid_of.size(), -1);
  std::int64_t best = -1;
  std::size_t best_size = 0;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t start = 0; start < grid_of.size(); ++start) {
    if (!labels[start] || comp[start] >= 0) continue;
    const auto cid = static_cast<std::int64_t>(members.size());
    members.emplace_back();
    std::deque<std::size_t> queue{start};
    comp[start] = cid;
    while (!queue.empty()) {
      const std::size_t n = queue.front();
      queue.pop_front();
      members.back().push_back(grid_of[n]);
      const int r = static_cast<int>(grid_of[n] / static_cast<std::size_t>(g.width));
      const int c = static_cast<int>(grid_of[n] % static_cast<std::size_t>(g.width));
      for (const auto& d : kNeighbors4) {
        const int rr = r + d[0], cc = c + d[1];
        if (rr < r0 || rr > r1 || cc < c0 || cc > c1) continue;
        const std::int64_t m = node_of[static_cast<std::size_t>((rr - r0) * cw + (cc - c0))];
        if (m < 0 || !labels[static_cast<std::size_t>(m)] || comp[static_cast<std::size_t>(m)] >= 0) {
          continue;
        }
        comp[static_cast<std::size_t>(m)] = cid;
        queue.push_back(static_cast<std::size_t>(m));
      }
    }
    if (members.back().size() > best_size) {
      best_size = members.back().size();
      best = cid;
    }
  }
  LocalCut out;
  out.id = id;
  if (best >= 0) {
    out.cells = std::move(members[static_cast<std::size_t>(best)]);
    std::sort(out.cells.begin(), out.cells.end());
  }
  return out;
}

}  // namespace

RefineResult refine_footprints(const HeightGrid& dsm, const FootprintSet& footprints,
                               const ProbabilityGrid& probs, const RefineConfig& cfg, int jobs) {
  cfg.validate();
  if (dsm.geometry() != footprints.labels.geometry() || dsm.geometry() != probs.geometry()) {
    throw Error("refine_footprints: DSM, footprint and probability grids differ in geometry");
  }
  const LabelGrid owner = owner_map(footprints);
  const std::vector<std::int32_t> ids = footprints.ids();
  std::vector<LocalCut> cuts(ids.size());
  parallel_for(ids.size(), jobs, [&](std::size_t k) {
    cuts[k] = refine_one(dsm, footprints, probs, owner, cfg, ids[k]);
  });

  RefineResult result;
  LabelGrid labels(dsm.geometry(), 0);
  for (const LocalCut& cut : cuts) {
    if (cut.cells.empty()) {
      result.warnings.push_back("footprint " + std::to_string(cut.id) +
                                " is empty after refinement; dropped");
      continue;
    }
    for (const std::size_t i : cut.cells) labels[i] = cut.id;
  }
  result.footprints = FootprintSet::from_labels(std::move(labels));
  return result;
}

double footprint_iou(const LabelGrid& a, std::int32_t id_a, const LabelGrid& b, std::int32_t id_b) {
  if (a.geometry() != b.geometry()) throw Error("footprint_iou: geometry mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool in_a = id_a == 0 ? a[i] != 0 : a[i] == id_a;
    const bool in_b = id_b == 0 ? b[i] != 0 : b[i] == id_b;
    inter += (in_a && in_b) ? 1 : 0;
    uni += (in_a || in_b) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace sunroof
