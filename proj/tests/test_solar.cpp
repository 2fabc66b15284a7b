#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <numbers>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sunroof/solar.hpp"

using namespace sunroof;
using namespace fixture;
namespace fs = std::filesystem;

TEST_CASE("time parsing") {
  const auto t = make_time(2023, 6, 1, 13, 5, 9);
  CHECK(format_time(t) == "2023-06-01T13:05:09Z");
  CHECK(parse_time("2023-06-01T13:05:09Z") == t);
  CHECK(parse_time("2023-06-01 13:05") == make_time(2023, 6, 1, 13, 5));
  CHECK_THROWS_AS(make_time(2023, 2, 29), Error);
  CHECK_THROWS_AS(parse_time("2023-06-01T13:05:09+02"), Error);
  CHECK_THROWS_AS(parse_time("yesterday"), Error);
}

TEST_CASE("sun position") {
  // NREL SPA reference: 2003-10-17 12:30:30 MST at Golden, Colorado.
  const auto spa = sun_position(39.742476, -105.1786, make_time(2003, 10, 17, 19, 30, 30));
  CHECK(std::abs(spa.azimuth_deg - 194.34024) < 0.5);
  CHECK(std::abs(spa.elevation_deg - (90.0 - 50.11162)) < 0.5);

  double best = -90;
  for (int m = 0; m < 60; ++m) {
    best = std::max(best, sun_position(0.0, 0.0, make_time(2023, 3, 20, 12, m)).elevation_deg);
  }
  CHECK(best > 89.0);

  for (int h = 0; h < 24; ++h) CHECK(sun_position(80.0, 10.0, make_time(2023, 12, 21, h)).elevation_deg < 0.0);
  for (int h = 0; h < 24; ++h) CHECK(sun_position(80.0, 10.0, make_time(2023, 6, 21, h)).elevation_deg > 0.0);

  // afternoon sun in the northern hemisphere is west of south
  const auto pm = sun_position(37.4, -122.1, make_time(2023, 6, 1, 23));
  CHECK(pm.azimuth_deg > 180.0);
  CHECK(pm.azimuth_deg < 300.0);
}

TEST_CASE("weather series") {
  const WeatherSeries w = synthetic_weather(37.4, -122.1, 2023, 3);
  CHECK(w.records.size() == 8760);
  CHECK_NOTHROW(w.validate());
  CHECK(synthetic_weather(37.4, -122.1, 2024, 3).records.size() == 8784);
  CHECK(synthetic_weather(37.4, -122.1, 2023, 3).records[4000].dni == w.records[4000].dni);

  WeatherSeries gap = w;
  gap.records.erase(gap.records.begin() + 100);
  try {
    gap.validate();
    FAIL("expected a gap error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(format_time(w.records[100].time)) != std::string::npos);
  }
  WeatherSeries neg = w;
  neg.records[5].dni = -1;
  CHECK_THROWS_AS(neg.validate(), Error);

  const fs::path p = fs::temp_directory_path() / "sunroof_weather.csv";
  write_weather(w, p);
  const WeatherSeries back = read_weather(p);
  REQUIRE(back.records.size() == w.records.size());
  for (std::size_t i = 0; i < w.records.size(); i += 97) {
    CHECK(back.records[i].time == w.records[i].time);
    CHECK(back.records[i].dni == w.records[i].dni);
    CHECK(back.records[i].dhi == w.records[i].dhi);
    CHECK(back.records[i].air_temp == w.records[i].air_temp);
    CHECK(back.records[i].wind_speed == w.records[i].wind_speed);
  }
  CHECK_THROWS_AS(parse_weather("timestamp,dni,dhi,temp,wind\n2023-01-01T00:00:00Z,abc,0,20,1\n"), Error);
  CHECK_THROWS_AS(read_weather(fs::temp_directory_path() / "no_such_weather.csv"), Error);
}

TEST_CASE("temperature correction") {
  TemperatureModel m;
  CHECK(temperature_factor(25.0, m) == doctest::Approx(1.0));
  CHECK(temperature_factor(45.0, m) == doctest::Approx(0.91));
  CHECK(temperature_factor(500.0, m) == m.min_factor);
  CHECK(temperature_factor(-500.0, m) == m.max_factor);
  double prev = 0.0;
  for (double wind = 0.0; wind <= 10.0; wind += 0.5) {
    const double f = temperature_correction(30.0, wind, m);
    CHECK(f >= prev);
    prev = f;
  }
}

TEST_CASE("sky view factor") {
  const std::vector<double> zero(16, 0.0), ninety(16, 90.0), half(16, 45.0);
  CHECK(sky_view_factor(zero) == 1.0);
  CHECK(sky_view_factor(ninety) == doctest::Approx(0.0));
  CHECK(sky_view_factor(half) == doctest::Approx(0.5));
}

TEST_CASE("horizons on simple surfaces") {
  const HeightGrid flat(GridGeometry{20, 20, 0.5}, 3.0);
  const HorizonField hf = compute_horizons(flat, 32);
  for (const float a : hf.angles) CHECK(std::abs(a) < 1e-9f);

  HeightGrid tower(GridGeometry{40, 21, 0.5}, 0.0);
  for (int r = 0; r < 21; ++r) {
    for (int c = 25; c < 30; ++c) tower(r, c) = 10 * 0.5;  // 10 cells east of column 15
  }
  const HorizonField ht = compute_horizons(tower, 32);
  CHECK(std::abs(ht.interpolate(tower.geometry().index(10, 15), 90.0) - 45.0) < 1.5);
  CHECK(ht.interpolate(tower.geometry().index(10, 15), 270.0) == doctest::Approx(0.0));
  CHECK_THROWS_AS(compute_horizons(flat, 4), ContractError);
}

TEST_CASE("horizons agree with ray marching on smooth random surfaces") {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const HeightGrid g = oracle::smooth_random_dsm(32, seed);
    const HorizonField hf = compute_horizons(g, 32);
    for (int a = 0; a < 32; ++a) {
      for (int r = 0; r < 32; ++r) {
        for (int c = 0; c < 32; ++c) {
          const double ref = oracle::ray_march(g, r, c, hf.azimuth_deg(a));
          worst = std::max(worst, std::abs(hf.at(g.geometry().index(r, c), a) - ref));
        }
      }
    }
  }
  MESSAGE("worst horizon error " << worst << " deg");
  CHECK(worst <= 1.5);
}

TEST_CASE("window horizons match full-grid horizons inside the window") {
  const HeightGrid g = oracle::smooth_random_dsm(48, 5);
  const HorizonField full = compute_horizons(g, 16);
  const Window all{0, 0, 48, 48};
  const HorizonField same = compute_horizons(g, 16, all, 2);
  CHECK(same.angles == full.angles);
  CHECK(compute_horizons(g, 16, 3).angles == full.angles);
}

TEST_CASE("single-sample irradiance") {
  const GridGeometry g{4, 3, 1.0};
  const NormalField up = constant_normals(g, Vec3::UnitZ());
  const HorizonField open = flat_horizons(g, 32);

  const std::vector<SunSample> overhead{{180.0, 90.0, 500.0, 0.0, 1.0, 1.0}};
  {
    const HeightGrid f = flux_from_samples(up, open, overhead);
    for (const auto v : f.values()) CHECK(v == doctest::Approx(0.5));
  }

  const std::vector<SunSample> diffuse{{0.0, -10.0, 0.0, 100.0, 1.0, 1.0}};
  {
    const HeightGrid f = flux_from_samples(up, open, diffuse);
    for (const auto v : f.values()) CHECK(v == doctest::Approx(0.1));
  }

  const std::vector<SunSample> low{{135.0, 30.0, 500.0, 0.0, 1.0, 1.0}};
  {
    const HeightGrid f = flux_from_samples(up, open, low);
    for (const auto v : f.values()) CHECK(v == 500.0 * std::sin(deg2rad(30.0)) / 1000.0);
  }

  // the same sun behind a 40 degree horizon is blocked
  HorizonField blocked = flat_horizons(g, 32);
  std::fill(blocked.angles.begin(), blocked.angles.end(), 40.0f);
  {
    const HeightGrid f = flux_from_samples(up, blocked, low);
    for (const auto v : f.values()) CHECK(v == 0.0);
  }

  const NormalField north = constant_normals(g, Vec3(0, 1, 0.2));
  {
    const HeightGrid f = flux_from_samples(north, open, low);
    for (const auto v : f.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("tilted plane matches the analytic incidence integral") {
  SiteConfig site;
  site.latitude = 37.4;
  site.longitude = -122.1;
  site.temperature.a = 0.0;  // module at air temperature, factor 1 at 25 C
  const WeatherSeries w = constant_year(2023, 800.0, 0.0);
  const auto samples = sun_samples(w, site);
  const GridGeometry g{1, 1, 1.0};
  for (const Vec3& n : {Vec3(0, -std::sin(deg2rad(30.0)), std::cos(deg2rad(30.0))),
                       Vec3(std::sin(deg2rad(40.0)), 0, std::cos(deg2rad(40.0))), Vec3(0.2, 0.3, 1.0).normalized(),
                       Vec3(0, 0, 1)}) {
    const double got = flux_from_samples(constant_normals(g, n), flat_horizons(g, 32), samples)[0] * 1000.0;
    const double want = analytic_annual(site.latitude, n, 800.0, 2023);
    CHECK(std::abs(got - want) / want <= 0.01);
  }
}

TEST_CASE("occluders only remove light") {
  SceneSpec spec;
  spec.extent = 48;
  spec.building_count = 1;
  spec.rng_seed = 3;
  const Scene s = generate_scene(spec);
  SiteConfig site;
  site.tile_core = 0;
  site.time_step = 24;
  const auto samples = sun_samples(synthetic_weather(site.latitude, site.longitude, 2023, 1), site);
  const NormalField n = compute_normals(s.dsm_hq, 1);
  const HeightGrid base = flux_map(s.dsm_hq, n, samples, site);
  HeightGrid taller = s.dsm_hq;
  for (int r = 10; r < 14; ++r) {
    for (int c = 20; c < 24; ++c) taller(r, c) += 8.0;
  }
  const HeightGrid shaded = flux_map(taller, n, samples, site);
  const HeightGrid open = flux_from_samples(n, flat_horizons(s.dsm_hq.geometry(), site.azimuth_count), samples);
  int darker = 0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(base[i] <= open[i] + 1e-9);
    const int r = static_cast<int>(i) / 48, c = static_cast<int>(i) % 48;
    if (r >= 10 && r < 14 && c >= 20 && c < 24) continue;
    CHECK(shaded[i] <= base[i] + 1e-9);
    darker += shaded[i] < base[i] ? 1 : 0;
  }
  CHECK(darker > 0);
}

TEST_CASE("tiled flux equals untiled flux when occluders lie within the margin") {
  SceneSpec spec;
  spec.extent = 80;
  spec.rng_seed = 7;
  const Scene s = generate_scene(spec);
  SiteConfig site;
  site.time_step = 12;
  const auto samples = sun_samples(synthetic_weather(site.latitude, site.longitude, 2023, 2), site);
  const NormalField n = compute_normals(s.dsm_hq, 1);
  site.tile_core = 0;
  const HeightGrid whole = flux_map(s.dsm_hq, n, samples, site);
  site.tile_core = 24;
  site.tile_margin = 80;
  for (const int jobs : {1, 3}) {
    const HeightGrid tiled = flux_map(s.dsm_hq, n, samples, site, jobs);
    double worst = 0.0;
    for (std::size_t i = 0; i < whole.size(); ++i) {
      worst = std::max(worst, std::abs(tiled[i] - whole[i]) / std::max(1e-12, std::abs(whole[i])));
    }
    CHECK(worst <= 1e-6);
  }

  // no occluders at all: any margin works
  const HeightGrid flat(GridGeometry{50, 50, 0.5}, 1.0);
  const NormalField fn = compute_normals(flat, 1);
  site.tile_core = 0;
  const HeightGrid fw = flux_map(flat, fn, samples, site);
  site.tile_core = 16;
  site.tile_margin = 0;
  CHECK(flux_map(flat, fn, samples, site) == fw);
}

TEST_CASE("flux time grows near-linearly with the cell count") {
  SiteConfig site;
  site.tile_core = 0;
  site.time_step = 8;
  const auto samples = sun_samples(synthetic_weather(site.latitude, site.longitude, 2023, 1), site);
  const HeightGrid small = oracle::smooth_random_dsm(256, 1), large = oracle::smooth_random_dsm(512, 1);
  const NormalField ns = compute_normals(small, 1), nl = compute_normals(large, 1);
  flux_map(small, ns, samples, site);  // warm up
  auto t0 = std::chrono::steady_clock::now();
  flux_map(small, ns, samples, site);
  const double ts = seconds_since(t0);
  t0 = std::chrono::steady_clock::now();
  flux_map(large, nl, samples, site);
  const double tl = seconds_since(t0);
  MESSAGE("t(512^2) / t(256^2) = " << tl / ts);
  CHECK(tl / ts <= 5.0);
}
