#include <doctest.h>

#include <filesystem>
#include <numeric>
#include <set>

#include "sunroof/scene.hpp"

using namespace sunroof;
namespace fs = std::filesystem;

namespace {

double mean_of(const HeightGrid& g) {
  double s = 0;
  for (const auto v : g.values()) s += v;
  return s / static_cast<double>(g.size());
}

}  // namespace

TEST_CASE("scenes are deterministic per seed") {
  SceneSpec spec;
  spec.extent = 64;
  spec.rng_seed = 9;
  const Scene a = generate_scene(spec), b = generate_scene(spec);
  CHECK(a.dsm_hq == b.dsm_hq);
  CHECK(a.footprints_truth == b.footprints_truth);
  CHECK(a.pseudo_rgb == b.pseudo_rgb);
  spec.rng_seed = 10;
  CHECK(generate_scene(spec).dsm_hq != a.dsm_hq);
}

TEST_CASE("zero buildings leaves terrain and trees") {
  SceneSpec spec;
  spec.extent = 48;
  spec.building_count = 0;
  const Scene s = generate_scene(spec);
  CHECK(s.buildings.empty());
  CHECK(s.roof_planes_truth.empty());
  CHECK(s.structures == s.dtm);
  HeightGrid expect = s.dtm;
  for (const auto& t : s.trees) add_canopy(t, s.dtm, expect);
  CHECK(expect == s.dsm_hq);
  for (std::size_t i = 0; i < s.footprints_truth.size(); ++i) CHECK(s.footprints_truth[i] == 0);
}

TEST_CASE("three buildings with distinct labels") {
  SceneSpec spec;
  spec.extent = 128;
  spec.building_count = 3;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    spec.rng_seed = seed;
    const Scene s = generate_scene(spec);
    REQUIRE(s.buildings.size() == 3);
    std::set<std::int32_t> ids;
    for (std::size_t i = 0; i < s.footprints_truth.size(); ++i) {
      if (s.footprints_truth[i] != 0) ids.insert(s.footprints_truth[i]);
    }
    CHECK(ids == std::set<std::int32_t>{1, 2, 3});
  }
}

TEST_CASE("ground truth invariants") {
  SceneSpec spec;
  spec.extent = 96;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    spec.rng_seed = seed;
    spec.tree_overhang_probability = seed % 2 ? 0.5 : 0.0;
    const Scene s = generate_scene(spec);
    for (std::size_t i = 0; i < s.dsm_hq.size(); ++i) {
      CHECK(s.dsm_hq[i] >= s.dtm[i]);
      CHECK(s.dsm_hq[i] >= s.structures[i]);
      if (s.obstacles[i] != 0) CHECK(s.footprints_truth[i] == s.obstacles[i]);
      if (s.footprints_truth[i] != 0) CHECK(s.footprints_rough[i] == s.footprints_truth[i]);
    }
    for (const auto& tp : s.roof_planes_truth) {
      CHECK(std::is_sorted(tp.cells.begin(), tp.cells.end()));
      std::vector<Vec3> pts;
      const auto& g = s.dsm_hq.geometry();
      for (const auto i : tp.cells) {
        CHECK(s.footprints_truth[i] == tp.building_id);
        CHECK(s.obstacles[i] == 0);
        const int r = static_cast<int>(i) / g.width, c = static_cast<int>(i) % g.width;
        const Vec3 p(g.cell_x(c), g.cell_y(r), s.dsm_hq[i]);
        CHECK(tp.plane.distance(p) <= 0.01);
        pts.push_back(p);
      }
      if (pts.size() >= 3) {
        const auto fit = fit_plane(pts);
        REQUIRE(fit);
        CHECK(std::acos(std::min(1.0, fit->normal.dot(tp.plane.normal))) < 1e-6);
      }
    }
  }
}

TEST_CASE("invalid specs are rejected") {
  SceneSpec spec;
  spec.extent = 4;
  CHECK_THROWS_AS(generate_scene(spec), ContractError);
  spec = {};
  spec.building_count = -1;
  CHECK_THROWS_AS(generate_scene(spec), ContractError);
  spec = {};
  spec.roof_styles.clear();
  CHECK_THROWS_AS(generate_scene(spec), ContractError);
  CHECK_THROWS_AS(roof_style_from_string("dome"), Error);
  CHECK(roof_style_from_string(to_string(RoofStyle::kHipped)) == RoofStyle::kHipped);
}

TEST_CASE("degradation") {
  SceneSpec spec;
  spec.extent = 96;
  spec.rng_seed = 4;
  const Scene s = generate_scene(spec);

  SUBCASE("identity parameters") {
    DegradeParams p;
    p.probability_softening = 0.0;
    const auto d = degrade(s, p, 1);
    CHECK(d.dsm_lq == s.dsm_hq);
    for (std::size_t i = 0; i < s.dsm_hq.size(); ++i) CHECK(d.probabilities_lq[i] == s.probabilities_hq[i]);
  }
  SUBCASE("noise level") {
    DegradeParams p;
    p.noise_sigma = 0.3;
    const auto d = degrade(s, p, 2);
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < s.dsm_hq.size(); ++i) {
      const double e = d.dsm_lq[i] - s.dsm_hq[i];
      sum += e;
      sq += e * e;
    }
    const double n = static_cast<double>(s.dsm_hq.size());
    const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
    CHECK(sd >= 0.27);
    CHECK(sd <= 0.33);
  }
  SUBCASE("downsampling spreads a step over at least the factor") {
    HeightGrid step(GridGeometry{64, 8, 0.5});
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 64; ++c) step(r, c) = c < 30 ? 0.0 : 10.0;
    }
    const HeightGrid out = resample_through(step, 4);
    CHECK(out.geometry() == step.geometry());
    int ramp = 0;
    for (int c = 0; c < 64; ++c) ramp += out(4, c) > 0.5 && out(4, c) < 9.5 ? 1 : 0;
    CHECK(ramp >= 4);
    CHECK(mean_of(out) == doctest::Approx(mean_of(step)).epsilon(0.02));
  }
  SUBCASE("geometry and mean are preserved") {
    DegradeParams p;
    p.downsample_factor = 4;
    p.gaussian_blur_sigma = 1.5;
    p.registration_jitter = 0.5;
    p.foliage_change_probability = 0.3;
    const auto d = degrade(s, p, 3);
    CHECK(d.dsm_lq.geometry() == s.dsm_hq.geometry());
    CHECK(d.probabilities_lq.geometry() == s.dsm_hq.geometry());
    const HeightGrid blurred = gaussian_blur(s.dsm_hq, 2.0);
    CHECK(mean_of(blurred) == doctest::Approx(mean_of(s.dsm_hq)).epsilon(1e-9));
    CHECK(degrade(s, p, 3).dsm_lq == d.dsm_lq);
  }
  SUBCASE("bad parameters") {
    DegradeParams p;
    p.downsample_factor = 0;
    CHECK_THROWS_AS(degrade(s, p, 1), ContractError);
    p = {};
    p.noise_sigma = -1;
    CHECK_THROWS_AS(degrade(s, p, 1), ContractError);
  }
}

TEST_CASE("scene manifest round trip") {
  SceneSpec spec;
  spec.extent = 48;
  spec.building_count = 1;
  spec.rng_seed = 12;
  const Scene s = generate_scene(spec);
  const fs::path dir = fs::temp_directory_path() / "sunroof_test_scene";
  fs::remove_all(dir);
  write_scene(s, dir);
  CHECK(fs::exists(dir / "scene.json"));
  const Scene back = read_scene(dir);
  CHECK(back.dsm_hq == s.dsm_hq);
  CHECK(back.dtm == s.dtm);
  CHECK(back.footprints_truth == s.footprints_truth);
  CHECK(back.footprints_rough == s.footprints_rough);
  CHECK(back.obstacles == s.obstacles);
  REQUIRE(back.roof_planes_truth.size() == s.roof_planes_truth.size());
  for (std::size_t i = 0; i < s.roof_planes_truth.size(); ++i) {
    CHECK(back.roof_planes_truth[i].cells == s.roof_planes_truth[i].cells);
    CHECK((back.roof_planes_truth[i].plane.normal - s.roof_planes_truth[i].plane.normal).norm() < 1e-12);
  }
  CHECK(back.buildings.size() == s.buildings.size());
  CHECK(back.spec.rng_seed == 12);
  CHECK_THROWS_AS(read_scene(dir / "nope"), Error);
}
