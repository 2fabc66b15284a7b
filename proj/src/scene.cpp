#include "sunroof/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "sunroof/grid_io.hpp"

namespace sunroof {

using nlohmann::json;

std::string to_string(RoofStyle style) {
  switch (style) {
    case RoofStyle::kFlat: return "flat";
    case RoofStyle::kGabled: return "gabled";
    case RoofStyle::kHipped: return "hipped";
    case RoofStyle::kShed: return "shed";
  }
  return "flat";
}

RoofStyle roof_style_from_string(const std::string& name) {
  if (name == "flat") return RoofStyle::kFlat;
  if (name == "gabled") return RoofStyle::kGabled;
  if (name == "hipped") return RoofStyle::kHipped;
  if (name == "shed") return RoofStyle::kShed;
  throw Error("unknown roof style '" + name + "'");
}

void SceneSpec::validate() const {
  if (extent < 8) throw ContractError("scene extent must be at least 8 cells");
  if (!(cell_size > 0)) throw ContractError("scene cell_size must be positive");
  if (building_count < 0 || tree_count < 0) throw ContractError("scene counts must be >= 0");
  if (!(obstacle_density >= 0) || !(terrain_amplitude >= 0)) {
    throw ContractError("obstacle_density and terrain_amplitude must be >= 0");
  }
  if (!(tree_overhang_probability >= 0 && tree_overhang_probability <= 1)) {
    throw ContractError("tree_overhang_probability must lie in [0, 1]");
  }
  if (building_count > 0 && roof_styles.empty()) throw ContractError("no roof styles allowed");
}

void DegradeParams::validate() const {
  if (downsample_factor < 1) throw ContractError("downsample_factor must be >= 1");
  if (!(gaussian_blur_sigma >= 0) || !(noise_sigma >= 0) || !(registration_jitter >= 0)) {
    throw ContractError("degradation sigmas and jitter must be >= 0");
  }
  if (!(foliage_change_probability >= 0 && foliage_change_probability <= 1)) {
    throw ContractError("foliage_change_probability must lie in [0, 1]");
  }
  if (!(probability_softening >= 0 && probability_softening <= 1)) {
    throw ContractError("probability_softening must lie in [0, 1]");
  }
}

namespace {

// A roof facet z = a + bx * x + by * y.
struct Facet {
  double a = 0, bx = 0, by = 0;
  double z(double x, double y) const { return a + bx * x + by * y; }
  Plane plane() const { return Plane::from(Vec3(-bx, -by, 1.0), a); }
};

std::vector<Facet> facets_of(const Building& b) {
  const double top = b.base + b.eave_height;
  const double t = std::tan(deg2rad(b.pitch_deg));
  switch (b.style) {
    case RoofStyle::kFlat:
      return {{top, 0, 0}};
    case RoofStyle::kShed:
      // pitch_deg sign-free; the shed rises northward from the southern eave
      return {{top - t * b.y0, 0, t}};
    case RoofStyle::kGabled: {
      if (b.x1 - b.x0 >= b.y1 - b.y0) {
        const double mid = 0.5 * (b.y0 + b.y1), half = 0.5 * (b.y1 - b.y0);
        return {{top + t * (half - mid), 0, t}, {top + t * (half + mid), 0, -t}};
      }
      const double mid = 0.5 * (b.x0 + b.x1), half = 0.5 * (b.x1 - b.x0);
      return {{top + t * (half - mid), t, 0}, {top + t * (half + mid), -t, 0}};
    }
    case RoofStyle::kHipped:
      return {{top - t * b.x0, t, 0},
              {top + t * b.x1, -t, 0},
              {top - t * b.y0, 0, t},
              {top + t * b.y1, 0, -t}};
  }
  return {};
}

// Facet index that forms the roof surface at (x, y).
std::size_t facet_at(const Building& b, double x, double y) {
  switch (b.style) {
    case RoofStyle::kFlat:
    case RoofStyle::kShed:
      return 0;
    case RoofStyle::kGabled:
      if (b.x1 - b.x0 >= b.y1 - b.y0) return y < 0.5 * (b.y0 + b.y1) ? 0 : 1;
      return x < 0.5 * (b.x0 + b.x1) ? 0 : 1;
    case RoofStyle::kHipped: {
      const std::array<double, 4> d{x - b.x0, b.x1 - x, y - b.y0, b.y1 - y};
      return static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin());
    }
  }
  return 0;
}

double rect_distance(const Building& b, double x, double y) {
  const double dx = std::max({b.x0 - x, 0.0, x - b.x1});
  const double dy = std::max({b.y0 - y, 0.0, y - b.y1});
  return std::hypot(dx, dy);
}

}  // namespace

void add_canopy(const Tree& tree, const HeightGrid& ground, HeightGrid& surface) {
  const GridGeometry& g = ground.geometry();
  const double cs = g.cell_size;
  const int cc = static_cast<int>(std::floor((tree.x - g.x_ll) / cs));
  const int rc = g.height - 1 - static_cast<int>(std::floor((tree.y - g.y_ll) / cs));
  const double base = ground(std::clamp(rc, 0, g.height - 1), std::clamp(cc, 0, g.width - 1));
  const double rv = std::min(tree.radius, 0.5 * tree.top);
  const int reach = static_cast<int>(std::ceil(tree.radius / cs)) + 1;
  for (int r = rc - reach; r <= rc + reach; ++r) {
    for (int c = cc - reach; c <= cc + reach; ++c) {
      if (!g.contains(r, c)) continue;
      const double d = std::hypot(g.cell_x(c) - tree.x, g.cell_y(r) - tree.y);
      if (d >= tree.radius) continue;
      const double z = base + tree.top - rv + rv * std::sqrt(1.0 - (d / tree.radius) * (d / tree.radius));
      surface(r, c) = std::max(surface(r, c), z);
    }
  }
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.rng_seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  const int n = spec.extent;
  const double cs = spec.cell_size;
  const GridGeometry geom{n, n, cs, 0.0, 0.0};
  const double side = n * cs;

  Scene scene;
  scene.spec = spec;

  // Smooth terrain from a few random plane waves.
  scene.dtm = HeightGrid(geom);
  std::array<std::array<double, 4>, 3> waves{};
  for (auto& w : waves) {
    w = {uniform(0.3, 1.5), uniform(-1.0, 1.0), uniform(-1.0, 1.0), uniform(0.0, 2 * kPi)};
  }
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double x = geom.cell_x(c) / side, y = geom.cell_y(r) / side;
      double z = 0.0;
      for (const auto& w : waves) z += std::sin(2 * kPi * w[0] * (w[1] * x + w[2] * y) + w[3]);
      scene.dtm(r, c) = spec.terrain_amplitude * z / 3.0;
    }
  }

  // Buildings: axis-aligned rectangles with at least 2 m clearance.
  constexpr int kAttempts = 400;
  const int clearance = static_cast<int>(std::ceil(2.0 / cs));
  const int border = std::max(2, static_cast<int>(std::ceil(1.0 / cs)));
  struct CellRect { int r0, c0, r1, c1; };  // inclusive
  std::vector<CellRect> rects;
  for (int k = 0; k < spec.building_count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      double wm = uniform(8.0, 14.0), hm = uniform(7.0, 11.0);
      if (uniform(0.0, 1.0) < 0.5) std::swap(wm, hm);
      const int wc = std::max(4, static_cast<int>(std::lround(wm / cs)));
      const int hc = std::max(4, static_cast<int>(std::lround(hm / cs)));
      if (wc + 2 * border > n || hc + 2 * border > n) continue;
      const int c0 = uniform_int(border, n - border - wc);
      const int r0 = uniform_int(border, n - border - hc);
      const CellRect cand{r0, c0, r0 + hc - 1, c0 + wc - 1};
      const bool clash = std::any_of(rects.begin(), rects.end(), [&](const CellRect& o) {
        return cand.r0 <= o.r1 + clearance && o.r0 <= cand.r1 + clearance &&
               cand.c0 <= o.c1 + clearance && o.c0 <= cand.c1 + clearance;
      });
      if (clash) continue;
      rects.push_back(cand);
      placed = true;
    }
    if (!placed) {
      throw Error("generate_scene: could not place building " + std::to_string(k + 1) + " after " +
                  std::to_string(kAttempts) + " attempts (extent too small?)");
    }
  }

  scene.structures = scene.dtm;
  scene.footprints_truth = LabelGrid(geom, 0);
  scene.footprints_rough = LabelGrid(geom, 0);
  scene.obstacles = LabelGrid(geom, 0);
  LabelGrid building_cells(geom, 0);
  std::vector<std::vector<Facet>> facets;
  std::vector<int> facet_of_cell(geom.cell_count(), -1);

  for (std::size_t k = 0; k < rects.size(); ++k) {
    const CellRect& cr = rects[k];
    Building b;
    b.id = static_cast<std::int32_t>(k + 1);
    b.style = spec.roof_styles[static_cast<std::size_t>(
        uniform_int(0, static_cast<int>(spec.roof_styles.size()) - 1))];
    b.x0 = cr.c0 * cs;
    b.x1 = (cr.c1 + 1) * cs;
    b.y1 = (n - cr.r0) * cs;
    b.y0 = (n - cr.r1 - 1) * cs;
    double base = -1e300;
    for (int r = cr.r0; r <= cr.r1; ++r) {
      for (int c = cr.c0; c <= cr.c1; ++c) base = std::max(base, scene.dtm(r, c));
    }
    b.base = base;
    b.eave_height = uniform(3.0, 6.0);
    switch (b.style) {
      case RoofStyle::kFlat: b.pitch_deg = 0.0; break;
      case RoofStyle::kShed: b.pitch_deg = uniform(10.0, 30.0); break;
      default: b.pitch_deg = uniform(15.0, 45.0); break;
    }
    facets.push_back(facets_of(b));
    for (int r = cr.r0; r <= cr.r1; ++r) {
      for (int c = cr.c0; c <= cr.c1; ++c) {
        const double x = geom.cell_x(c), y = geom.cell_y(r);
        const std::size_t f = facet_at(b, x, y);
        scene.structures(r, c) = facets.back()[f].z(x, y);
        building_cells(r, c) = b.id;
        facet_of_cell[geom.index(r, c)] = static_cast<int>(f);
      }
    }
    scene.buildings.push_back(b);
  }

  // Roof obstacles: small boxes fully inside one facet.
  for (std::size_t k = 0; k < scene.buildings.size(); ++k) {
    const Building& b = scene.buildings[k];
    const int count = std::poisson_distribution<int>(spec.obstacle_density)(rng);
    for (int o = 0; o < count; ++o) {
      for (int attempt = 0; attempt < 40; ++attempt) {
        Obstacle ob;
        ob.building_id = b.id;
        ob.side = uniform(0.5, 0.9);
        ob.height = uniform(0.3, 1.5);
        ob.x = uniform(b.x0 + 1.0, b.x1 - 1.0);
        ob.y = uniform(b.y0 + 1.0, b.y1 - 1.0);
        std::vector<std::size_t> covered;
        for (int r = 0; r < n; ++r) {
          const double y = geom.cell_y(r);
          if (std::abs(y - ob.y) > 0.5 * ob.side) continue;
          for (int c = 0; c < n; ++c) {
            if (std::abs(geom.cell_x(c) - ob.x) <= 0.5 * ob.side) covered.push_back(geom.index(r, c));
          }
        }
        if (covered.empty()) continue;
        // Covered cells and their 8-neighbors must lie on a single facet of
        // this building and away from other obstacles.
        const int facet = facet_of_cell[covered.front()];
        bool ok = true;
        for (const std::size_t i : covered) {
          const int r = static_cast<int>(i / static_cast<std::size_t>(n));
          const int c = static_cast<int>(i % static_cast<std::size_t>(n));
          for (int dr = -1; dr <= 1 && ok; ++dr) {
            for (int dc = -1; dc <= 1 && ok; ++dc) {
              if (!geom.contains(r + dr, c + dc)) {
                ok = false;
                continue;
              }
              const std::size_t j = geom.index(r + dr, c + dc);
              ok = building_cells[j] == b.id && facet_of_cell[j] == facet && scene.obstacles[j] == 0;
            }
          }
        }
        if (!ok) continue;
        double roof_top = -1e300;
        for (const std::size_t i : covered) roof_top = std::max(roof_top, scene.structures[i]);
        for (const std::size_t i : covered) {
          scene.structures[i] = roof_top + ob.height;
          scene.obstacles[i] = b.id;
        }
        scene.obstacle_list.push_back(ob);
        break;
      }
    }
  }

  // Trees: free-standing, or straddling a roof edge when requested.
  scene.dsm_hq = scene.structures;
  for (int k = 0; k < spec.tree_count; ++k) {
    bool placed = false;
    const bool overhang = !scene.buildings.empty() && uniform(0.0, 1.0) < spec.tree_overhang_probability;
    for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      Tree t;
      t.radius = uniform(1.5, 3.5);
      t.top = uniform(5.0, 10.0);
      std::size_t host = scene.buildings.size();
      if (overhang) {
        host = static_cast<std::size_t>(uniform_int(0, static_cast<int>(scene.buildings.size()) - 1));
        const Building& b = scene.buildings[host];
        const double out = t.radius * uniform(0.3, 0.7);
        switch (uniform_int(0, 3)) {
          case 0: t.x = b.x0 - out; t.y = uniform(b.y0, b.y1); break;
          case 1: t.x = b.x1 + out; t.y = uniform(b.y0, b.y1); break;
          case 2: t.y = b.y0 - out; t.x = uniform(b.x0, b.x1); break;
          default: t.y = b.y1 + out; t.x = uniform(b.x0, b.x1); break;
        }
        double roof_max = -1e300;
        for (std::size_t i = 0; i < geom.cell_count(); ++i) {
          if (building_cells[i] == b.id) roof_max = std::max(roof_max, scene.structures[i]);
        }
        t.top = roof_max - b.base + uniform(1.5, 3.0);
      } else {
        t.x = uniform(0.0, side);
        t.y = uniform(0.0, side);
      }
      if (t.x < 0 || t.y < 0 || t.x >= side || t.y >= side) continue;
      bool clash = false;
      for (std::size_t j = 0; j < scene.buildings.size(); ++j) {
        if (j == host) continue;
        clash = clash || rect_distance(scene.buildings[j], t.x, t.y) < t.radius + 0.5;
      }
      if (clash) continue;
      scene.trees.push_back(t);
      placed = true;
    }
    if (!placed) {
      throw Error("generate_scene: could not place tree " + std::to_string(k + 1) + " after " +
                  std::to_string(kAttempts) + " attempts");
    }
  }
  for (const Tree& t : scene.trees) add_canopy(t, scene.dtm, scene.dsm_hq);

  // Visible footprint and truth planes.
  for (std::size_t i = 0; i < geom.cell_count(); ++i) {
    if (building_cells[i] != 0 && scene.dsm_hq[i] <= scene.structures[i]) {
      scene.footprints_truth[i] = building_cells[i];
    }
  }
  std::int32_t plane_id = 0;
  for (std::size_t k = 0; k < scene.buildings.size(); ++k) {
    const Building& b = scene.buildings[k];
    for (std::size_t f = 0; f < facets[k].size(); ++f) {
      TruthPlane tp;
      tp.plane_id = ++plane_id;
      tp.building_id = b.id;
      tp.plane = facets[k][f].plane();
      for (std::size_t i = 0; i < geom.cell_count(); ++i) {
        if (scene.footprints_truth[i] == b.id && scene.obstacles[i] == 0 &&
            facet_of_cell[i] == static_cast<int>(f)) {
          tp.cells.push_back(i);
        }
      }
      scene.roof_planes_truth.push_back(std::move(tp));
    }
  }

  // Rough input footprints: full rectangles grown by one cell.
  for (std::size_t k = 0; k < rects.size(); ++k) {
    const CellRect& cr = rects[k];
    for (int r = std::max(0, cr.r0 - 1); r <= std::min(n - 1, cr.r1 + 1); ++r) {
      for (int c = std::max(0, cr.c0 - 1); c <= std::min(n - 1, cr.c1 + 1); ++c) {
        scene.footprints_rough(r, c) = scene.buildings[k].id;
      }
    }
  }

  // Probabilities: 1 on visible roofs, decaying with distance elsewhere.
  scene.probabilities_hq = ProbabilityGrid(geom, 0.0);
  const int reach = static_cast<int>(std::ceil(5.0 / cs));
  std::vector<double> dist(geom.cell_count(), reach * cs);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (scene.footprints_truth(r, c) == 0) continue;
      for (int rr = std::max(0, r - reach); rr <= std::min(n - 1, r + reach); ++rr) {
        for (int cc = std::max(0, c - reach); cc <= std::min(n - 1, c + reach); ++cc) {
          const std::size_t j = geom.index(rr, cc);
          dist[j] = std::min(dist[j], cs * std::hypot(rr - r, cc - c));
        }
      }
    }
  }
  for (std::size_t i = 0; i < geom.cell_count(); ++i) {
    scene.probabilities_hq.set(i, scene.footprints_truth[i] != 0 ? 1.0 : 0.5 * std::exp(-dist[i] / 1.0));
  }

  scene.pseudo_rgb = render_pseudo_rgb(scene);
  return scene;
}

RgbImage render_pseudo_rgb(const Scene& scene) {
  const GrayImage shade = hillshade(scene.dsm_hq, 315.0, 45.0);
  RgbImage rgb(scene.dsm_hq.geometry());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    Rgb base{96, 160, 72};  // grass
    if (scene.obstacles[i] != 0) {
      base = {140, 140, 140};
    } else if (scene.footprints_truth[i] != 0) {
      base = {178, 84, 62};
    } else if (scene.dsm_hq[i] > scene.structures[i] + 1e-9) {
      base = {34, 110, 42};
    }
    const double lum = 0.35 + 0.65 * shade[i] / 255.0;
    rgb[i] = {static_cast<std::uint8_t>(std::lround(base.r * lum)),
              static_cast<std::uint8_t>(std::lround(base.g * lum)),
              static_cast<std::uint8_t>(std::lround(base.b * lum))};
  }
  return rgb;
}

namespace {

HeightGrid blur_pass(const HeightGrid& in, const std::vector<double>& kernel, bool horizontal) {
  const int w = in.width(), h = in.height();
  const int len = horizontal ? w : h;
  const int rad = static_cast<int>(kernel.size() / 2);
  HeightGrid out = in;
  auto reflect = [len](int i) {
    // Half-sample symmetric extension with period 2 * len.
    const int period = 2 * len;
    i %= period;
    if (i < 0) i += period;
    return i < len ? i : period - 1 - i;
  };
  for (int line = 0; line < (horizontal ? h : w); ++line) {
    for (int k = 0; k < len; ++k) {
      double s = 0.0;
      for (int t = -rad; t <= rad; ++t) {
        const int j = reflect(k + t);
        s += kernel[static_cast<std::size_t>(t + rad)] * (horizontal ? in(line, j) : in(j, line));
      }
      (horizontal ? out(line, k) : out(k, line)) = s;
    }
  }
  return out;
}

double bilinear_clamped(const HeightGrid& g, double row, double col) {
  row = std::clamp(row, 0.0, static_cast<double>(g.height() - 1));
  col = std::clamp(col, 0.0, static_cast<double>(g.width() - 1));
  const int r0 = static_cast<int>(std::floor(row)), c0 = static_cast<int>(std::floor(col));
  const int r1 = std::min(r0 + 1, g.height() - 1), c1 = std::min(c0 + 1, g.width() - 1);
  const double tr = row - r0, tc = col - c0;
  return (1 - tr) * ((1 - tc) * g(r0, c0) + tc * g(r0, c1)) + tr * ((1 - tc) * g(r1, c0) + tc * g(r1, c1));
}

}  // namespace

HeightGrid gaussian_blur(const HeightGrid& grid, double sigma) {
  if (!(sigma > 0)) return grid;
  const int rad = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * rad + 1));
  double sum = 0.0;
  for (int t = -rad; t <= rad; ++t) {
    sum += kernel[static_cast<std::size_t>(t + rad)] = std::exp(-0.5 * t * t / (sigma * sigma));
  }
  for (double& k : kernel) k /= sum;
  return blur_pass(blur_pass(grid, kernel, true), kernel, false);
}

HeightGrid resample_through(const HeightGrid& grid, int factor) {
  if (factor <= 1) return grid;
  const int w = grid.width(), h = grid.height();
  const int cw = (w + factor - 1) / factor, ch = (h + factor - 1) / factor;
  GridGeometry cg = grid.geometry();
  cg.width = cw;
  cg.height = ch;
  HeightGrid coarse(cg);
  for (int R = 0; R < ch; ++R) {
    for (int C = 0; C < cw; ++C) {
      double s = 0.0;
      int count = 0;
      for (int r = R * factor; r < std::min(h, (R + 1) * factor); ++r) {
        for (int c = C * factor; c < std::min(w, (C + 1) * factor); ++c) {
          s += grid(r, c);
          ++count;
        }
      }
      coarse(R, C) = s / count;
    }
  }
  HeightGrid out = grid;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      out(r, c) = bilinear_clamped(coarse, (r + 0.5) / factor - 0.5, (c + 0.5) / factor - 0.5);
    }
  }
  return out;
}

DegradedInputs degrade(const Scene& scene, const DegradeParams& params, std::uint64_t seed) {
  params.validate();
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  HeightGrid dsm = scene.dsm_hq;
  if (params.foliage_change_probability > 0.0) {
    // Temporal skew: some trees vanish, some new ones appear.
    dsm = scene.structures;
    std::vector<Tree> trees;
    for (const Tree& t : scene.trees) {
      if (uniform(0.0, 1.0) >= params.foliage_change_probability) trees.push_back(t);
    }
    const double side = scene.dsm_hq.width() * scene.dsm_hq.cell_size();
    for (std::size_t k = 0; k < scene.trees.size(); ++k) {
      if (uniform(0.0, 1.0) < params.foliage_change_probability) {
        trees.push_back({uniform(0.0, side), uniform(0.0, side), uniform(1.5, 3.5), uniform(5.0, 10.0)});
      }
    }
    for (const Tree& t : trees) add_canopy(t, scene.dtm, dsm);
  }

  if (params.registration_jitter > 0.0) {
    const double dr = uniform(-params.registration_jitter, params.registration_jitter);
    const double dc = uniform(-params.registration_jitter, params.registration_jitter);
    const HeightGrid src = dsm;
    for (int r = 0; r < dsm.height(); ++r) {
      for (int c = 0; c < dsm.width(); ++c) dsm(r, c) = bilinear_clamped(src, r + dr, c + dc);
    }
  }
  dsm = gaussian_blur(dsm, params.gaussian_blur_sigma);
  dsm = resample_through(dsm, params.downsample_factor);
  if (params.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, params.noise_sigma);
    for (double& v : dsm.values()) v += noise(rng);
  }
  for (std::size_t i = 0; i < dsm.size(); ++i) {
    dsm.set_nodata(i, scene.dsm_hq.is_nodata(i));
  }

  HeightGrid p = scene.probabilities_hq.to_heights();
  p = gaussian_blur(p, params.gaussian_blur_sigma);
  p = resample_through(p, params.downsample_factor);
  ProbabilityGrid probs(p.geometry());
  const double keep = 1.0 - params.probability_softening;
  for (std::size_t i = 0; i < p.size(); ++i) probs.set(i, keep * p[i] + params.probability_softening * 0.5);
  return {std::move(dsm), std::move(probs)};
}

namespace {

json plane_json(const Plane& p) {
  return {{"normal", {p.normal.x(), p.normal.y(), p.normal.z()}}, {"offset", p.offset}};
}

json spec_json(const SceneSpec& s) {
  json styles = json::array();
  for (RoofStyle st : s.roof_styles) styles.push_back(to_string(st));
  return {{"rng_seed", s.rng_seed},
          {"extent", s.extent},
          {"cell_size", s.cell_size},
          {"building_count", s.building_count},
          {"roof_styles", styles},
          {"tree_count", s.tree_count},
          {"obstacle_density", s.obstacle_density},
          {"terrain_amplitude", s.terrain_amplitude},
          {"tree_overhang_probability", s.tree_overhang_probability}};
}

}  // namespace

void write_scene(const Scene& scene, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_grid(scene.dsm_hq, dir / "dsm_hq.asc");
  write_grid(scene.dtm, dir / "dtm.asc");
  write_grid(scene.structures, dir / "structures.asc");
  write_labels(scene.footprints_truth, dir / "footprints_truth.asc");
  write_labels(scene.footprints_rough, dir / "footprints_rough.asc");
  write_labels(scene.obstacles, dir / "obstacles.asc");
  write_probabilities(scene.probabilities_hq, dir / "probabilities_hq.asc");
  LabelGrid planes(scene.dsm_hq.geometry(), 0);
  for (const TruthPlane& tp : scene.roof_planes_truth) {
    for (const std::size_t i : tp.cells) planes[i] = tp.plane_id;
  }
  write_labels(planes, dir / "roof_planes.asc");
  write_png(scene.pseudo_rgb, dir / "pseudo_rgb.png");

  json m;
  m["schema_version"] = kSceneSchemaVersion;
  m["spec"] = spec_json(scene.spec);
  m["layers"] = {{"dsm_hq", "dsm_hq.asc"},
                 {"dtm", "dtm.asc"},
                 {"structures", "structures.asc"},
                 {"footprints_truth", "footprints_truth.asc"},
                 {"footprints_rough", "footprints_rough.asc"},
                 {"obstacles", "obstacles.asc"},
                 {"probabilities_hq", "probabilities_hq.asc"},
                 {"roof_planes", "roof_planes.asc"},
                 {"pseudo_rgb", "pseudo_rgb.png"}};
  m["buildings"] = json::array();
  for (const Building& b : scene.buildings) {
    m["buildings"].push_back({{"id", b.id},
                              {"style", to_string(b.style)},
                              {"rect", {b.x0, b.y0, b.x1, b.y1}},
                              {"base", b.base},
                              {"eave_height", b.eave_height},
                              {"pitch_deg", b.pitch_deg}});
  }
  m["roof_planes"] = json::array();
  for (const TruthPlane& tp : scene.roof_planes_truth) {
    json j = plane_json(tp.plane);
    j["plane_id"] = tp.plane_id;
    j["building_id"] = tp.building_id;
    j["cell_count"] = tp.cells.size();
    m["roof_planes"].push_back(j);
  }
  m["trees"] = json::array();
  for (const Tree& t : scene.trees) {
    m["trees"].push_back({{"x", t.x}, {"y", t.y}, {"radius", t.radius}, {"top", t.top}});
  }
  m["obstacles"] = json::array();
  for (const Obstacle& o : scene.obstacle_list) {
    m["obstacles"].push_back({{"building_id", o.building_id},
                              {"x", o.x},
                              {"y", o.y},
                              {"side", o.side},
                              {"height", o.height}});
  }
  std::ofstream out(dir / "scene.json");
  if (!out) throw Error("cannot write '" + (dir / "scene.json").string() + "'");
  out << m.dump(2) << '\n';
}

Scene read_scene(const std::filesystem::path& dir) {
  std::ifstream in(dir / "scene.json");
  if (!in) throw Error("cannot open scene manifest '" + (dir / "scene.json").string() + "'");
  const json m = json::parse(in);
  if (m.value("schema_version", 0) != kSceneSchemaVersion) {
    throw Error("unsupported scene schema version in '" + (dir / "scene.json").string() + "'");
  }
  Scene scene;
  const json& s = m.at("spec");
  scene.spec.rng_seed = s.at("rng_seed").get<std::uint64_t>();
  scene.spec.extent = s.at("extent").get<int>();
  scene.spec.cell_size = s.at("cell_size").get<double>();
  scene.spec.building_count = s.at("building_count").get<int>();
  scene.spec.roof_styles.clear();
  for (const auto& st : s.at("roof_styles")) scene.spec.roof_styles.push_back(roof_style_from_string(st));
  scene.spec.tree_count = s.at("tree_count").get<int>();
  scene.spec.obstacle_density = s.at("obstacle_density").get<double>();
  scene.spec.terrain_amplitude = s.at("terrain_amplitude").get<double>();
  scene.spec.tree_overhang_probability = s.value("tree_overhang_probability", 0.0);

  const json& layers = m.at("layers");
  auto layer = [&](const char* key) { return dir / layers.at(key).get<std::string>(); };
  scene.dsm_hq = read_grid(layer("dsm_hq"));
  scene.dtm = read_grid(layer("dtm"));
  scene.structures = read_grid(layer("structures"));
  scene.footprints_truth = read_labels(layer("footprints_truth"));
  scene.footprints_rough = read_labels(layer("footprints_rough"));
  scene.obstacles = read_labels(layer("obstacles"));
  scene.probabilities_hq = read_probabilities(layer("probabilities_hq"));
  const LabelGrid planes = read_labels(layer("roof_planes"));

  for (const auto& b : m.at("buildings")) {
    Building bd;
    bd.id = b.at("id").get<std::int32_t>();
    bd.style = roof_style_from_string(b.at("style").get<std::string>());
    const auto rect = b.at("rect").get<std::vector<double>>();
    bd.x0 = rect.at(0);
    bd.y0 = rect.at(1);
    bd.x1 = rect.at(2);
    bd.y1 = rect.at(3);
    bd.base = b.at("base").get<double>();
    bd.eave_height = b.at("eave_height").get<double>();
    bd.pitch_deg = b.at("pitch_deg").get<double>();
    scene.buildings.push_back(bd);
  }
  for (const auto& p : m.at("roof_planes")) {
    TruthPlane tp;
    tp.plane_id = p.at("plane_id").get<std::int32_t>();
    tp.building_id = p.at("building_id").get<std::int32_t>();
    const auto n = p.at("normal").get<std::vector<double>>();
    tp.plane = Plane{Vec3(n.at(0), n.at(1), n.at(2)), p.at("offset").get<double>()};
    for (std::size_t i = 0; i < planes.size(); ++i) {
      if (planes[i] == tp.plane_id) tp.cells.push_back(i);
    }
    scene.roof_planes_truth.push_back(std::move(tp));
  }
  for (const auto& t : m.at("trees")) {
    scene.trees.push_back({t.at("x").get<double>(), t.at("y").get<double>(),
                           t.at("radius").get<double>(), t.at("top").get<double>()});
  }
  for (const auto& o : m.at("obstacles")) {
    scene.obstacle_list.push_back({o.at("building_id").get<std::int32_t>(), o.at("x").get<double>(),
                                   o.at("y").get<double>(), o.at("side").get<double>(),
                                   o.at("height").get<double>()});
  }
  scene.pseudo_rgb = render_pseudo_rgb(scene);
  return scene;
}

}  // namespace sunroof
