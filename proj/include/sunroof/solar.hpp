#pragma once

// Sun geometry, weather series, horizon sweep and annual irradiation.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sunroof/raster.hpp"

namespace sunroof {

using TimePoint = std::chrono::sys_seconds;

/// Builds a UTC time point; throws on an invalid calendar date.
TimePoint make_time(int year, int month, int day, int hour = 0, int minute = 0, int second = 0);
/// "YYYY-MM-DDTHH:MM:SSZ" (the trailing Z and seconds are optional on input).
std::string format_time(TimePoint t);
TimePoint parse_time(const std::string& text);

struct SunPosition {
  double azimuth_deg = 0.0;    ///< clockwise from north
  double elevation_deg = 0.0;  ///< above the horizon, no refraction
};

/// Low-precision solar geometry (fractional-year series for declination and
/// equation of time, then hour angle).
SunPosition sun_position(double latitude_deg, double longitude_deg, TimePoint t);

struct WeatherRecord {
  TimePoint time;       ///< start of the hour, UTC
  double dni = 0.0;     ///< W/m^2
  double dhi = 0.0;     ///< W/m^2
  double air_temp = 20.0;   ///< deg C
  double wind_speed = 1.0;  ///< m/s
};

struct WeatherSeries {
  std::vector<WeatherRecord> records;

  /// Throws unless the series is one year of hourly records with
  /// non-negative irradiance. Gaps are reported hour by hour.
  void validate() const;
};

WeatherSeries parse_weather(const std::string& text, const std::string& source = "<memory>");
WeatherSeries read_weather(const std::filesystem::path& path);
void write_weather(const WeatherSeries& series, const std::filesystem::path& path);

/// Clear-sky irradiance scaled by a seeded, slowly varying cloud cover,
/// with a seasonal and diurnal temperature cycle.
WeatherSeries synthetic_weather(double latitude_deg, double longitude_deg, int year, std::uint64_t seed);

struct TemperatureModel {
  double a = 25.0;          ///< deg C, module heating over air at zero wind
  double b = 6.84;          ///< s/m
  double gamma = -0.0045;   ///< per deg C
  double min_factor = 0.5;
  double max_factor = 1.1;

  double module_temp(double air_temp, double wind_speed) const { return air_temp + a / (1.0 + b * wind_speed); }
  void validate() const;
};

double temperature_correction(double air_temp, double wind_speed, const TemperatureModel& model = {});

/// Factor for a known module temperature.
double temperature_factor(double module_temp, const TemperatureModel& model = {});

struct HorizonField {
  GridGeometry geometry;
  int azimuth_count = 0;
  /// Degrees in [0, 90), azimuth-major: angles[a * cells + i].
  std::vector<float> angles;

  double at(std::size_t cell, int azimuth) const {
    return angles[static_cast<std::size_t>(azimuth) * geometry.cell_count() + cell];
  }
  double azimuth_deg(int a) const { return 360.0 * a / azimuth_count; }
  /// Linear interpolation between the two nearest sampled azimuths.
  double interpolate(std::size_t cell, double azimuth_deg) const;
  std::vector<double> at_cell(std::size_t cell) const;
};

/// Cell rectangle [row0, row1) x [col0, col1).
struct Window {
  int row0 = 0, col0 = 0, row1 = 0, col1 = 0;
  int rows() const { return row1 - row0; }
  int cols() const { return col1 - col0; }
  bool operator==(const Window&) const = default;
};

/// Per-cell maximum occlusion angle for azimuth_count directions, one
/// sweep per direction over lines of constant slope. Each line keeps the
/// upper convex hull of its profile; cells query the two bracketing lines
/// and interpolate.
HorizonField compute_horizons(const HeightGrid& dsm, int azimuth_count, int jobs = 1);

/// Same sweep restricted to the cells of `window`. Lines are anchored to
/// global cell indices, so any cell whose occluders all lie in the window
/// gets the same angles as in a full-grid run.
HorizonField compute_horizons(const HeightGrid& dsm, int azimuth_count, const Window& window, int jobs = 1);

/// Isotropic sky: mean of cos^2(horizon) over azimuths.
double sky_view_factor(std::span<const double> horizons_deg);

struct SiteConfig {
  double latitude = 37.4;
  double longitude = -122.1;
  int tile_core = 256;    ///< cells; 0 disables tiling
  int tile_margin = 64;   ///< cells
  int azimuth_count = 32;
  int time_step = 1;      ///< hours between evaluated records
  TemperatureModel temperature;

  void validate() const;
};

/// One evaluated time step.
struct SunSample {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double dni = 0.0;
  double dhi = 0.0;
  double efficiency = 1.0;
  double hours = 1.0;
};

/// Every time_step-th record, sun taken at mid-hour, each weighted by
/// time_step hours.
std::vector<SunSample> sun_samples(const WeatherSeries& weather, const SiteConfig& site);

/// Annual irradiation in kWh/m^2 over the horizons' geometry, which must
/// match the normals. Nodata normals stay nodata.
HeightGrid flux_from_samples(const NormalField& normals, const HorizonField& horizons,
                             std::span<const SunSample> samples);

/// Tiled flux: each core tile is evaluated with horizons computed on the
/// core plus margin. tile_core = 0 evaluates the whole grid at once.
HeightGrid flux_map(const HeightGrid& dsm, const NormalField& normals, std::span<const SunSample> samples,
                    const SiteConfig& site, int jobs = 1);
HeightGrid flux_map(const HeightGrid& dsm, const NormalField& normals, const WeatherSeries& weather,
                    const SiteConfig& site, int jobs = 1);

}  // namespace sunroof
