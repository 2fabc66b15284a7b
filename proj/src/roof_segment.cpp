#include "sunroof/roof_segment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "sunroof/graph_cut.hpp"

namespace sunroof {

Plane Plane::from(const Vec3& normal, double offset) {
  const double len = normal.norm();
  if (!(len > 0) || !std::isfinite(len)) throw ContractError("plane normal must be non-zero");
  Vec3 n = normal / len;
  double d = offset / len;
  if (std::abs(n.z()) < 1e-9) throw ContractError("plane normal is horizontal (vertical plane)");
  if (n.z() < 0) {
    n = -n;
    d = -d;
  }
  return {n, d};
}

double Plane::distance(const Vec3& p) const { return std::abs(signed_distance(p)); }

double Plane::pitch_deg() const { return rad2deg(std::acos(std::clamp(normal.z(), -1.0, 1.0))); }

double Plane::azimuth_deg() const {
  if (std::hypot(normal.x(), normal.y()) < 1e-12) return 0.0;
  double az = rad2deg(std::atan2(normal.x(), normal.y()));
  if (az < 0) az += 360.0;
  return az;
}

namespace {

std::optional<Plane> weighted_fit(std::span<const Vec3> points, std::span<const double> weights) {
  if (points.size() < 3) return std::nullopt;
  double wsum = 0.0;
  Vec3 centroid = Vec3::Zero();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    centroid += w * points[i];
    wsum += w;
  }
  if (!(wsum > 0)) return std::nullopt;
  centroid /= wsum;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const Vec3 d = points[i] - centroid;
    cov += w * d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d values = eig.eigenvalues();  // ascending
  if (!(values(2) > 0) || values(1) <= 1e-12 * values(2)) return std::nullopt;
  const Vec3 n = eig.eigenvectors().col(0);
  if (std::abs(n.z()) < 1e-6) return std::nullopt;
  return Plane::through(n, centroid);
}

double sum_abs_distance(const Plane& plane, std::span<const Vec3> points) {
  double s = 0.0;
  for (const Vec3& p : points) s += plane.distance(p);
  return s;
}

}  // namespace

std::optional<Plane> fit_plane(std::span<const Vec3> points) { return weighted_fit(points, {}); }

void SegmentConfig::validate() const {
  if (!(ransac_inlier_threshold > 0) || ransac_iterations <= 0 || min_inlier_count <= 0 ||
      max_planes <= 0 || !(smoothness_weight >= 0) || refit_rounds < 0 ||
      !(min_segment_area >= 0) || !(outlier_penalty_factor > 0) || max_sweeps <= 0) {
    throw ContractError("segment config values must be positive");
  }
  if (!(max_pitch > 0 && max_pitch < 90)) throw ContractError("max_pitch must lie in (0, 90)");
}

RoofGraph make_roof_graph(const HeightGrid& dsm, std::span<const std::size_t> cells) {
  const GridGeometry& g = dsm.geometry();
  RoofGraph graph;
  std::vector<std::size_t> sorted(cells.begin(), cells.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::unordered_map<std::size_t, std::size_t> point_of;
  for (const std::size_t i : sorted) {
    if (i >= dsm.size()) throw ContractError("roof cell index outside the grid");
    if (dsm.is_nodata(i)) continue;
    const int r = static_cast<int>(i / static_cast<std::size_t>(g.width));
    const int c = static_cast<int>(i % static_cast<std::size_t>(g.width));
    point_of.emplace(i, graph.points.size());
    graph.points.push_back(cell_point(dsm, r, c));
    graph.cells.push_back(i);
  }
  for (std::size_t p = 0; p < graph.cells.size(); ++p) {
    const std::size_t i = graph.cells[p];
    const int c = static_cast<int>(i % static_cast<std::size_t>(g.width));
    if (c + 1 < g.width) {
      if (auto it = point_of.find(i + 1); it != point_of.end()) graph.edges.emplace_back(p, it->second);
    }
    if (auto it = point_of.find(i + static_cast<std::size_t>(g.width)); it != point_of.end()) {
      graph.edges.emplace_back(p, it->second);
    }
  }
  return graph;
}

double SegmentationState::data_cost(std::size_t point, int label) const {
  if (label == kOutlier) return outlier_penalty;
  return planes[static_cast<std::size_t>(label)].distance(graph->points[point]);
}

double SegmentationState::label_cost(int a, int b) const {
  if (a == b || a == kOutlier || b == kOutlier) return 0.0;
  const double dot = planes[static_cast<std::size_t>(a)].normal.dot(planes[static_cast<std::size_t>(b)].normal);
  return 1.0 + std::max(0.0, dot);
}

double data_term(const SegmentationState& state) {
  double e = 0.0;
  for (std::size_t p = 0; p < state.labels.size(); ++p) e += state.data_cost(p, state.labels[p]);
  return e;
}

double segmentation_energy(const SegmentationState& state) {
  double e = data_term(state);
  for (const auto& [a, b] : state.graph->edges) {
    e += 2.0 * state.smoothness_weight * state.label_cost(state.labels[a], state.labels[b]);
  }
  return e;
}

SegmentationState initial_state(std::shared_ptr<const RoofGraph> graph, std::vector<Plane> planes,
                                const SegmentConfig& cfg) {
  SegmentationState s;
  s.graph = std::move(graph);
  s.planes = std::move(planes);
  s.smoothness_weight = cfg.smoothness_weight;
  s.outlier_penalty = cfg.outlier_penalty();
  s.labels.assign(s.graph->points.size(), kOutlier);
  for (std::size_t p = 0; p < s.labels.size(); ++p) {
    double best = s.outlier_penalty;
    for (std::size_t k = 0; k < s.planes.size(); ++k) {
      const double d = s.data_cost(p, static_cast<int>(k));
      // Planes win ties against OUTLIER; earlier planes win ties among planes.
      if (d < best || (d == best && s.labels[p] == kOutlier)) {
        best = d;
        s.labels[p] = static_cast<int>(k);
      }
    }
  }
  return s;
}

namespace {

// Switches the points with x = 1 to `target`.
SegmentationState apply_labels(const SegmentationState& state, int target, const std::vector<std::uint8_t>& x) {
  SegmentationState next = state;
  bool changed = false;
  for (std::size_t p = 0; p < x.size(); ++p) {
    if (x[p] && next.labels[p] != target) {
      next.labels[p] = target;
      changed = true;
    }
  }
  if (!changed) return state;
  // Guard against floating point noise in the cut: a move is only taken when
  // it does not raise the energy.
  if (segmentation_energy(next) > segmentation_energy(state)) return state;
  return next;
}

// Runs one binary move; label 1 switches a point to `target`.
SegmentationState apply_move(const SegmentationState& state, int target, const BinaryEnergy& energy) {
  return apply_labels(state, target, energy.minimize());
}

// Two-coloring of the neighbor graph, or empty when it has an odd cycle.
std::vector<std::uint8_t> two_coloring(const RoofGraph& g) {
  const std::size_t n = g.points.size();
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (const auto& [a, b] : g.edges) {
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
  }
  std::vector<std::uint8_t> color(n, 2);
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (color[s] != 2) continue;
    color[s] = 0;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      for (const std::size_t q : nbrs[p]) {
        if (color[q] == 2) {
          color[q] = static_cast<std::uint8_t>(1 - color[p]);
          stack.push_back(q);
        } else if (color[q] == color[p]) {
          return {};
        }
      }
    }
  }
  return color;
}

}  // namespace

SegmentationState alpha_expansion(const SegmentationState& state, int alpha) {
  if (alpha < 0 || static_cast<std::size_t>(alpha) >= state.planes.size()) {
    throw ContractError("alpha_expansion: plane index out of range");
  }
  const std::size_t n = state.labels.size();
  const double w = 2.0 * state.smoothness_weight;
  BinaryEnergy energy(n);
  for (std::size_t p = 0; p < n; ++p) {
    energy.add_unary(p, state.data_cost(p, state.labels[p]), state.data_cost(p, alpha));
  }
  for (const auto& [a, b] : state.graph->edges) {
    const int la = state.labels[a];
    const int lb = state.labels[b];
    const double e00 = w * state.label_cost(la, lb);
    const double e01 = w * state.label_cost(la, alpha);
    const double e10 = w * state.label_cost(alpha, lb);
    if (e00 == 0.0 && e01 == 0.0 && e10 == 0.0) continue;
    energy.add_pairwise(a, b, e00, e01, e10, 0.0);
  }
  return apply_move(state, alpha, energy);
}

SegmentationState outlier_expansion(const SegmentationState& state) {
  const std::size_t n = state.labels.size();
  const double w = 2.0 * state.smoothness_weight;
  const std::vector<std::uint8_t> color = two_coloring(*state.graph);
  BinaryEnergy energy(n);
  if (color.empty()) {
    for (std::size_t p = 0; p < n; ++p) {
      energy.add_unary(p, state.data_cost(p, state.labels[p]), state.outlier_penalty);
    }
    for (const auto& [a, b] : state.graph->edges) {
      const double v = w * state.label_cost(state.labels[a], state.labels[b]);
      if (v == 0.0) continue;
      // True term is v * (1 - x_a)(1 - x_b); bound it by v/2 (1 - x_a) + v/2 (1 - x_b).
      energy.add_unary(a, 0.5 * v, 0.0);
      energy.add_unary(b, 0.5 * v, 0.0);
    }
    return apply_move(state, kOutlier, energy);
  }
  // v (1 - x_a)(1 - x_b) is supermodular, but on a bipartite graph flipping
  // the variables of one color (z = 1 - x) makes every term submodular, so
  // the move is solved exactly.
  for (std::size_t p = 0; p < n; ++p) {
    const double keep = state.data_cost(p, state.labels[p]), out = state.outlier_penalty;
    if (color[p]) {
      energy.add_unary(p, out, keep);
    } else {
      energy.add_unary(p, keep, out);
    }
  }
  for (const auto& [a, b] : state.graph->edges) {
    const double v = w * state.label_cost(state.labels[a], state.labels[b]);
    if (v == 0.0) continue;
    // in z: even endpoint kept (z = 0) and odd endpoint kept (z = 1)
    if (color[a] == 0) {
      energy.add_pairwise(a, b, 0.0, v, 0.0, 0.0);
    } else {
      energy.add_pairwise(a, b, 0.0, 0.0, v, 0.0);
    }
  }
  std::vector<std::uint8_t> x = energy.minimize();
  for (std::size_t p = 0; p < n; ++p) {
    if (color[p]) x[p] = static_cast<std::uint8_t>(1 - x[p]);
  }
  return apply_labels(state, kOutlier, x);
}

namespace {

// Exhaustive joint relabeling of 2x2 blocks of neighboring points over the
// labels already present around the block plus OUTLIER. Catches
// combinations of outlier and plane switches the bounded outlier move
// misses. Only strict improvements are taken.
void block_moves(SegmentationState& state) {
  const RoofGraph& g = *state.graph;
  const std::size_t n = state.labels.size();
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (const auto& [a, b] : g.edges) {
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
  }
  // 4-cycles a-b-d-c with a < b, a < c: the 2x2 blocks.
  std::vector<std::array<std::size_t, 4>> blocks;
  for (std::size_t a = 0; a < n; ++a) {
    for (const std::size_t b : nbrs[a]) {
      for (const std::size_t c : nbrs[a]) {
        if (b >= c || b < a || c < a) continue;
        for (const std::size_t d : nbrs[b]) {
          if (d == a) continue;
          if (std::find(nbrs[c].begin(), nbrs[c].end(), d) != nbrs[c].end()) blocks.push_back({a, b, c, d});
        }
      }
    }
  }
  const double w = 2.0 * state.smoothness_weight;
  std::vector<int> cand;
  std::array<int, 4> trial{}, best{};
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& blk : blocks) {
      cand.assign(1, kOutlier);
      for (const std::size_t p : blk) {
        cand.push_back(state.labels[p]);
        for (const std::size_t q : nbrs[p]) cand.push_back(state.labels[q]);
      }
      std::sort(cand.begin(), cand.end());
      cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
      const auto in_block = [&](std::size_t q) { return std::find(blk.begin(), blk.end(), q) != blk.end(); };
      const auto cost = [&](const std::array<int, 4>& l) {
        double e = 0.0;
        for (int i = 0; i < 4; ++i) {
          e += state.data_cost(blk[i], l[i]);
          for (const std::size_t q : nbrs[blk[i]]) {
            const auto it = std::find(blk.begin(), blk.end(), q);
            if (it == blk.end()) {
              e += w * state.label_cost(l[i], state.labels[q]);
            } else if (q > blk[i]) {
              e += w * state.label_cost(l[i], l[it - blk.begin()]);
            }
          }
        }
        return e;
      };
      (void)in_block;
      for (int i = 0; i < 4; ++i) best[i] = state.labels[blk[i]];
      double best_e = cost(best);
      const std::size_t m = cand.size();
      for (std::size_t code = 0; code < m * m * m * m; ++code) {
        std::size_t c = code;
        for (int i = 0; i < 4; ++i, c /= m) trial[i] = cand[c % m];
        const double e = cost(trial);
        if (e < best_e - 1e-12) {
          best_e = e;
          best = trial;
        }
      }
      for (int i = 0; i < 4; ++i) {
        if (state.labels[blk[i]] != best[i]) {
          state.labels[blk[i]] = best[i];
          changed = true;
        }
      }
    }
  }
}

}  // namespace

bool expansion_sweep(SegmentationState& state) {
  const std::vector<int> before = state.labels;
  for (std::size_t alpha = 0; alpha < state.planes.size(); ++alpha) {
    state = alpha_expansion(state, static_cast<int>(alpha));
  }
  state = outlier_expansion(state);
  block_moves(state);
  return state.labels != before;
}

SegmentationState refit_planes(const SegmentationState& state) {
  const std::size_t k = state.planes.size();
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t p = 0; p < state.labels.size(); ++p) {
    if (state.labels[p] != kOutlier) members[static_cast<std::size_t>(state.labels[p])].push_back(p);
  }
  SegmentationState next = state;
  next.planes.clear();
  std::vector<int> remap(k, kOutlier);
  for (std::size_t label = 0; label < k; ++label) {
    if (members[label].size() < 3) continue;
    std::vector<Vec3> pts;
    pts.reserve(members[label].size());
    for (const std::size_t p : members[label]) pts.push_back(state.graph->points[p]);

    // Candidates: current plane, total least squares, and an L1 reweighted
    // fit; the one with the smallest summed distance wins.
    Plane best = state.planes[label];
    double best_cost = sum_abs_distance(best, pts);
    std::optional<Plane> candidate = fit_plane(pts);
    std::vector<double> weights(pts.size());
    for (int iter = 0; candidate && iter < 12; ++iter) {
      const double cost = sum_abs_distance(*candidate, pts);
      if (cost < best_cost) {
        best = *candidate;
        best_cost = cost;
      }
      for (std::size_t i = 0; i < pts.size(); ++i) {
        weights[i] = 1.0 / std::max(candidate->distance(pts[i]), 1e-7);
      }
      candidate = weighted_fit(pts, weights);
    }
    remap[label] = static_cast<int>(next.planes.size());
    next.planes.push_back(best);
  }
  for (int& l : next.labels) {
    if (l != kOutlier) l = remap[static_cast<std::size_t>(l)];
  }
  return next;
}

std::vector<Plane> ransac_planes(std::span<const Vec3> points, const SegmentConfig& cfg) {
  cfg.validate();
  if (points.size() < 3) throw ContractError("ransac_planes needs at least 3 points");
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> remaining(points.size());
  std::iota(remaining.begin(), remaining.end(), 0);
  std::vector<Plane> planes;
  const double thr = cfg.ransac_inlier_threshold;

  while (static_cast<int>(planes.size()) < cfg.max_planes && remaining.size() >= 3 &&
         static_cast<int>(remaining.size()) >= cfg.min_inlier_count) {
    std::uniform_int_distribution<std::size_t> pick(0, remaining.size() - 1);
    std::optional<Plane> best;
    std::size_t best_count = 0;
    for (int it = 0; it < cfg.ransac_iterations; ++it) {
      const std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
      if (a == b || b == c || a == c) continue;
      const Vec3& pa = points[remaining[a]];
      const Vec3 n = (points[remaining[b]] - pa).cross(points[remaining[c]] - pa);
      const double len = n.norm();
      if (!(len > 1e-12) || std::abs(n.z()) < 1e-6 * len) continue;
      const Plane plane = Plane::through(n, pa);
      std::size_t count = 0;
      for (const std::size_t i : remaining) count += plane.distance(points[i]) <= thr ? 1 : 0;
      if (count > best_count) {
        best_count = count;
        best = plane;
      }
    }
    if (!best || static_cast<int>(best_count) < cfg.min_inlier_count) break;

    std::vector<Vec3> inliers;
    std::vector<std::size_t> rest;
    for (const std::size_t i : remaining) {
      if (best->distance(points[i]) <= thr) {
        inliers.push_back(points[i]);
      } else {
        rest.push_back(i);
      }
    }
    remaining = std::move(rest);
    if (const auto refit = fit_plane(inliers)) planes.push_back(*refit);
  }
  return planes;
}

std::vector<RoofSegment> segment_roof(const HeightGrid& dsm,
                                      std::span<const std::size_t> footprint_cells,
                                      const SegmentConfig& cfg,
                                      std::vector<std::string>* diagnostics) {
  cfg.validate();
  if (footprint_cells.empty()) throw ContractError("segment_roof: footprint is empty");
  auto note = [&](std::string msg) {
    if (diagnostics) diagnostics->push_back(std::move(msg));
  };
  auto graph = std::make_shared<const RoofGraph>(make_roof_graph(dsm, footprint_cells));
  if (graph->points.size() < 3) {
    note("fewer than 3 valid roof cells; building skipped");
    return {};
  }
  std::vector<Plane> planes = ransac_planes(graph->points, cfg);
  if (planes.empty()) {
    note("RANSAC found no plane with enough inliers; building skipped");
    return {};
  }

  SegmentationState state = initial_state(graph, std::move(planes), cfg);
  for (int round = 0; round < cfg.refit_rounds; ++round) {
    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
      if (!expansion_sweep(state)) break;
    }
    state = refit_planes(state);
  }

  const double cell_area = dsm.cell_size() * dsm.cell_size();
  std::vector<RoofSegment> segments;
  for (std::size_t k = 0; k < state.planes.size(); ++k) {
    RoofSegment seg;
    seg.plane = state.planes[k];
    for (std::size_t p = 0; p < state.labels.size(); ++p) {
      if (state.labels[p] == static_cast<int>(k)) seg.cells.push_back(graph->cells[p]);
    }
    if (seg.cells.empty()) continue;
    seg.area = static_cast<double>(seg.cells.size()) * cell_area / seg.plane.normal.z();
    if (seg.area < cfg.min_segment_area) {
      note("segment " + std::to_string(k) + " dropped: area " + std::to_string(seg.area) + " m^2");
      continue;
    }
    if (seg.pitch_deg() > cfg.max_pitch) {
      note("segment " + std::to_string(k) + " dropped: pitch " + std::to_string(seg.pitch_deg()));
      continue;
    }
    segments.push_back(std::move(seg));
  }
  return segments;
}

}  // namespace sunroof
