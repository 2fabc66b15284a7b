#include "sunroof/solar.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "sunroof/grid_io.hpp"
#include "sunroof/parallel.hpp"

namespace sunroof {

namespace {

using namespace std::chrono;

bool is_leap(int y) { return year{y}.is_leap(); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

TimePoint make_time(int y, int mo, int d, int h, int mi, int s) {
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60) {
    throw Error("invalid date/time " + std::to_string(y) + "-" + std::to_string(mo) + "-" + std::to_string(d) +
                " " + std::to_string(h) + ":" + std::to_string(mi) + ":" + std::to_string(s));
  }
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

std::string format_time(TimePoint t) {
  const sys_days d = floor<days>(t);
  const year_month_day ymd{d};
  const hh_mm_ss<seconds> hms{t - d};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

TimePoint parse_time(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char tail[8] = {0};
  const std::string t(trim(text));
  const int n = std::sscanf(t.c_str(), "%d-%d-%d%*1[T ]%d:%d:%d%7s", &y, &mo, &d, &h, &mi, &s, tail);
  if (n == 5 || n == 6 || n == 7) {
    if (n == 7 && std::string(tail) != "Z") throw Error("unsupported time zone suffix in '" + t + "'");
    return make_time(y, mo, d, h, mi, s);
  }
  // "YYYY-MM-DDTHH:MMZ"
  if (std::sscanf(t.c_str(), "%d-%d-%d%*1[T ]%d:%d%7s", &y, &mo, &d, &h, &mi, tail) == 6 &&
      std::string(tail) == "Z") {
    return make_time(y, mo, d, h, mi, 0);
  }
  throw Error("cannot parse timestamp '" + t + "' (expected YYYY-MM-DDTHH:MM:SSZ)");
}

SunPosition sun_position(double latitude_deg, double longitude_deg, TimePoint t) {
  const sys_days d = floor<days>(t);
  const year_month_day ymd{d};
  const int y = static_cast<int>(ymd.year());
  const double day_of_year = static_cast<double>((d - sys_days{year{y} / 1 / 1}).count());  // 0-based
  const double hour = duration<double, std::ratio<3600>>(t - d).count();
  const double year_days = is_leap(y) ? 366.0 : 365.0;

  const double g = 2.0 * kPi / year_days * (day_of_year + (hour - 12.0) / 24.0);
  const double eqtime = 229.18 * (0.000075 + 0.001868 * std::cos(g) - 0.032077 * std::sin(g) -
                                  0.014615 * std::cos(2 * g) - 0.040849 * std::sin(2 * g));
  const double decl = 0.006918 - 0.399912 * std::cos(g) + 0.070257 * std::sin(g) - 0.006758 * std::cos(2 * g) +
                      0.000907 * std::sin(2 * g) - 0.002697 * std::cos(3 * g) + 0.00148 * std::sin(3 * g);
  const double true_solar_minutes = hour * 60.0 + eqtime + 4.0 * longitude_deg;
  const double ha = deg2rad(true_solar_minutes / 4.0 - 180.0);
  const double lat = deg2rad(latitude_deg);

  const double cos_zenith =
      std::clamp(std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(ha), -1.0, 1.0);
  SunPosition sp;
  sp.elevation_deg = 90.0 - rad2deg(std::acos(cos_zenith));
  double az = rad2deg(std::atan2(std::sin(ha), std::cos(ha) * std::sin(lat) - std::tan(decl) * std::cos(lat))) + 180.0;
  az = std::fmod(az, 360.0);
  if (az < 0) az += 360.0;
  sp.azimuth_deg = az;
  return sp;
}

void WeatherSeries::validate() const {
  if (records.empty()) throw Error("weather series is empty");
  std::vector<TimePoint> missing;
  std::size_t missing_count = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const WeatherRecord& r = records[i];
    if (!std::isfinite(r.dni) || !std::isfinite(r.dhi) || r.dni < 0 || r.dhi < 0) {
      throw Error("weather record " + std::to_string(i + 1) + " (" + format_time(r.time) +
                  "): dni and dhi must be finite and >= 0");
    }
    if (!std::isfinite(r.air_temp) || !std::isfinite(r.wind_speed) || r.wind_speed < 0) {
      throw Error("weather record " + std::to_string(i + 1) + " (" + format_time(r.time) +
                  "): temp must be finite and wind >= 0");
    }
    if (i == 0) continue;
    const TimePoint prev = records[i - 1].time;
    if (r.time <= prev) {
      throw Error("weather timestamps not strictly increasing at record " + std::to_string(i + 1) + " (" +
                  format_time(r.time) + ")");
    }
    if ((r.time - prev) % hours{1} != seconds{0}) {
      throw Error("weather record " + std::to_string(i + 1) + " (" + format_time(r.time) + ") is not on the hourly grid");
    }
    for (TimePoint t = prev + hours{1}; t < r.time; t += hours{1}) {
      if (missing.size() < 24) missing.push_back(t);
      ++missing_count;
    }
  }
  if (missing_count > 0) {
    std::string msg = "weather series has " + std::to_string(missing_count) + " missing hour(s): ";
    for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? ", " : "") + format_time(missing[i]);
    if (missing_count > missing.size()) msg += ", ...";
    throw Error(msg);
  }
  if (records.size() != 8760 && records.size() != 8784) {
    throw Error("weather series must cover one year hourly (8760 or 8784 records), got " +
                std::to_string(records.size()));
  }
}

WeatherSeries parse_weather(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw ParseError(source + ":" + std::to_string(line_no) + ": " + why);
  };
  WeatherSeries series;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = row.find(',', start);
      fields.push_back(trim(row.substr(start, comma == std::string_view::npos ? row.npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!header) {
      const std::vector<std::string_view> expected{"timestamp", "dni", "dhi", "temp", "wind"};
      if (fields != expected) fail("expected header 'timestamp,dni,dhi,temp,wind'");
      header = true;
      continue;
    }
    if (fields.size() != 5) fail("expected 5 fields, found " + std::to_string(fields.size()));
    WeatherRecord r;
    try {
      r.time = parse_time(std::string(fields[0]));
    } catch (const Error& e) {
      fail(e.what());
    }
    double* dst[4] = {&r.dni, &r.dhi, &r.air_temp, &r.wind_speed};
    for (int k = 0; k < 4; ++k) {
      const std::string_view f = fields[static_cast<std::size_t>(k + 1)];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), *dst[k]);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        fail("invalid number '" + std::string(f) + "'");
      }
    }
    series.records.push_back(r);
  }
  if (!header) {
    line_no = 0;
    fail("missing header 'timestamp,dni,dhi,temp,wind'");
  }
  return series;
}

WeatherSeries read_weather(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open weather file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  WeatherSeries w = parse_weather(ss.str(), path.string());
  try {
    w.validate();
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return w;
}

void write_weather(const WeatherSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write weather file '" + path.string() + "'");
  out << "timestamp,dni,dhi,temp,wind\n";
  for (const WeatherRecord& r : series.records) {
    out << format_time(r.time) << ',' << shortest(r.dni) << ',' << shortest(r.dhi) << ','
        << shortest(r.air_temp) << ',' << shortest(r.wind_speed) << '\n';
  }
  if (!out) throw Error("failed writing weather file '" + path.string() + "'");
}

WeatherSeries synthetic_weather(double latitude_deg, double longitude_deg, int y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const TimePoint start = make_time(y, 1, 1);
  const int total = is_leap(y) ? 8784 : 8760;
  const double season_sign = latitude_deg >= 0 ? 1.0 : -1.0;
  const double t_mean = 28.0 - 0.3 * std::abs(latitude_deg);
  const double t_swing = 0.25 * std::abs(latitude_deg);

  WeatherSeries w;
  w.records.reserve(static_cast<std::size_t>(total));
  double cloud_day = 0.3;
  for (int h = 0; h < total; ++h) {
    if (h % 24 == 0) cloud_day = std::clamp(0.6 * cloud_day + 0.4 * unit(rng) * unit(rng) * 2.0, 0.0, 1.0);
    const double cloud = std::clamp(cloud_day + 0.1 * normal(rng), 0.0, 1.0);
    WeatherRecord r;
    r.time = start + hours{h};
    const SunPosition sp = sun_position(latitude_deg, longitude_deg, r.time + minutes{30});
    if (sp.elevation_deg > 0.0) {
      // Kasten-Young air mass with a Meinel-style clear-sky beam.
      const double el = sp.elevation_deg;
      const double air_mass = 1.0 / (std::sin(deg2rad(el)) + 0.50572 * std::pow(el + 6.07995, -1.6364));
      const double clear = 1353.0 * std::pow(0.7, std::pow(air_mass, 0.678));
      r.dni = clear * (1.0 - 0.85 * cloud);
      r.dhi = 0.1 * clear * (1.0 + 1.5 * cloud);
    }
    const double day = h / 24.0;
    const double local_hour = std::fmod(h % 24 + longitude_deg / 15.0 + 48.0, 24.0);
    r.air_temp = t_mean - season_sign * t_swing * std::cos(2 * kPi * (day - 15.0) / (total / 24.0)) +
                 4.0 * std::sin(2 * kPi * (local_hour - 9.0) / 24.0) + normal(rng);
    r.wind_speed = 1.0 + 2.0 * std::abs(normal(rng));
    w.records.push_back(r);
  }
  return w;
}

void TemperatureModel::validate() const {
  if (!(b >= 0) || !std::isfinite(a) || !std::isfinite(gamma) || !(min_factor <= max_factor)) {
    throw ContractError("invalid temperature model coefficients");
  }
}

double temperature_factor(double module_temp, const TemperatureModel& m) {
  return std::clamp(1.0 + m.gamma * (module_temp - 25.0), m.min_factor, m.max_factor);
}

double temperature_correction(double air_temp, double wind_speed, const TemperatureModel& m) {
  return temperature_factor(m.module_temp(air_temp, wind_speed), m);
}

double HorizonField::interpolate(std::size_t cell, double az) const {
  const double step = 360.0 / azimuth_count;
  double pos = std::fmod(az, 360.0) / step;
  if (pos < 0) pos += azimuth_count;
  int i0 = static_cast<int>(std::floor(pos));
  const double t = pos - i0;
  i0 %= azimuth_count;
  const int i1 = (i0 + 1) % azimuth_count;
  return (1.0 - t) * at(cell, i0) + t * at(cell, i1);
}

std::vector<double> HorizonField::at_cell(std::size_t cell) const {
  std::vector<double> out(static_cast<std::size_t>(azimuth_count));
  for (int a = 0; a < azimuth_count; ++a) out[static_cast<std::size_t>(a)] = at(cell, a);
  return out;
}

double sky_view_factor(std::span<const double> horizons_deg) {
  if (horizons_deg.empty()) throw ContractError("sky_view_factor needs at least one azimuth");
  double s = 0.0;
  for (const double h : horizons_deg) {
    const double c = std::cos(deg2rad(std::clamp(h, 0.0, 90.0)));
    s += c * c;
  }
  return s / static_cast<double>(horizons_deg.size());
}

namespace {

struct HullPoint {
  double x, z;
};

// Upper hull of points arriving with increasing x.
void hull_insert(std::vector<HullPoint>& h, HullPoint p) {
  while (h.size() >= 2) {
    const HullPoint& a = h[h.size() - 2];
    const HullPoint& b = h.back();
    if ((b.z - a.z) * (p.x - a.x) <= (p.z - a.z) * (b.x - a.x)) {
      h.pop_back();
    } else {
      break;
    }
  }
  h.push_back(p);
}

// Largest slope (dz / dx) from (xo, zo) to any hull point, -inf for an
// empty hull; xo lies to the right of the hull.
double hull_query(const std::vector<HullPoint>& h, double xo, double zo) {
  if (h.empty()) return -std::numeric_limits<double>::infinity();
  // The tangent vertex is the first one whose outgoing edge passes below
  // the observer.
  std::size_t lo = 0, hi = h.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    const HullPoint& a = h[mid];
    const HullPoint& b = h[mid + 1];
    if ((zo - a.z) * (b.x - a.x) > (b.z - a.z) * (xo - a.x)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return (h[lo].z - zo) / (xo - h[lo].x);
}

// Steps along the observer's own ray that are evaluated exactly; the line
// hulls only see samples at least this many steps away.
constexpr int kNearSteps = 8;
constexpr int kNearSubsteps = 4;
constexpr int kExactExit = 32;
constexpr int kLineDensity = 2;  // sweep lines per cell across the direction

void sweep_azimuth(const HeightGrid& dsm, const Window& win, double azimuth_deg, float* out) {
  const double phi = deg2rad(azimuth_deg);
  const double dcol = std::sin(phi), drow = -std::cos(phi);
  const bool major_col = std::abs(dcol) >= std::abs(drow);
  const double dm = major_col ? dcol : drow;
  const double dn = major_col ? drow : dcol;
  const int s = dm > 0 ? 1 : -1;
  // Exact axis directions get k = 0 rather than a rounding residue.
  const double k = std::abs(dn / dm) < 1e-12 ? 0.0 : dn / dm;
  const double step = dsm.cell_size() * std::sqrt(1.0 + k * k);

  const int u0 = major_col ? win.col0 : win.row0, u1 = major_col ? win.col1 : win.row1;
  const int v0 = major_col ? win.row0 : win.col0, v1 = major_col ? win.row1 : win.col1;
  const int out_width = win.cols();

  double wmin = 1e300, wmax = -1e300;
  for (const int u : {u0, u1 - 1}) {
    for (const int v : {v0, v1 - 1}) {
      wmin = std::min(wmin, v - k * u);
      wmax = std::max(wmax, v - k * u);
    }
  }
  const long lmin = static_cast<long>(std::floor(wmin * kLineDensity)) - 1;
  const long lmax = static_cast<long>(std::ceil(wmax * kLineDensity)) + 1;
  std::vector<std::vector<HullPoint>> lines(static_cast<std::size_t>(lmax - lmin + 2));
  std::vector<std::vector<std::pair<std::size_t, HullPoint>>> pending(kNearSteps);

  auto height_at = [&](int u, int v) { return major_col ? dsm(v, u) : dsm(u, v); };
  auto nodata_at = [&](int u, int v) { return major_col ? dsm.is_nodata(v, u) : dsm.is_nodata(u, v); };
  // Height at integer major position u and fractional minor position pv;
  // false when the position is outside the window or touches nodata.
  auto sample = [&](int u, double pv, double& z) {
    if (pv < v0 || pv > v1 - 1) return false;
    const int vf = static_cast<int>(std::floor(pv));
    const double t = pv - vf;
    if (t > 0.0 && vf + 1 < v1) {
      if (nodata_at(u, vf) || nodata_at(u, vf + 1)) return false;
      z = (1.0 - t) * height_at(u, vf) + t * height_at(u, vf + 1);
    } else {
      if (nodata_at(u, vf)) return false;
      z = height_at(u, vf);
    }
    return true;
  };

  // Bilinear height at fractional major position u + f (f in [0, 1)).
  auto sample_between = [&](int u, double f, double pv, double& z) {
    if (f == 0.0) return sample(u, pv, z);
    double za, zb;
    if (!sample(u, pv, za) || !sample(u + 1, pv, zb)) return false;
    z = (1.0 - f) * za + f * zb;
    return true;
  };

  // Steps until minor position v, moving by dv per step, leaves the grid.
  // Measured against the full grid, not the window, so a cell takes the
  // same path whether or not it is evaluated inside a tile.
  const int grid_minor = major_col ? dsm.height() : dsm.width();
  auto exit_steps = [&](int v, double dv) {
    if (dv > 0.0) return (grid_minor - 1 - v) / dv;
    if (dv < 0.0) return v / -dv;
    return std::numeric_limits<double>::infinity();
  };

  const int nu = u1 - u0;
  for (int i = 0; i < nu; ++i) {
    const int u = s > 0 ? u1 - 1 - i : u0 + i;
    const double x = -static_cast<double>(s) * u * step;
    auto& slot = pending[static_cast<std::size_t>(i % kNearSteps)];
    for (const auto& [li, p] : slot) hull_insert(lines[li], p);
    slot.clear();

    for (int v = v0; v < v1; ++v) {
      const int row = major_col ? v : u, col = major_col ? u : v;
      float& dst = out[static_cast<std::size_t>(row - win.row0) * static_cast<std::size_t>(out_width) +
                       static_cast<std::size_t>(col - win.col0)];
      if (nodata_at(u, v)) {
        dst = 0.0f;
        continue;
      }
      const double z = height_at(u, v);
      const double w = (v - k * u) * kLineDensity;
      const double lf = std::floor(w);
      const double t = w - lf;
      const auto li = static_cast<std::size_t>(static_cast<long>(lf) - lmin);
      // A ray that leaves the window sideways within kExactExit steps is
      // evaluated exactly up to its exit: the bracketing line that stays
      // inside would otherwise report terrain the ray never crosses.
      const double exit = exit_steps(v, k * s);
      double slope = -std::numeric_limits<double>::infinity();
      int exact_steps = std::min(kNearSteps - 1, i);
      if (exit < kExactExit) {
        exact_steps = std::min(static_cast<int>(std::floor(exit)), i);
      } else {
        // Slopes, not angles, are interpolated between the bracketing
        // lines: that is linear in the occluder heights. Negative slopes
        // carry no occlusion and are clamped first.
        slope = std::max(0.0, hull_query(lines[li], x, z));
        if (t > 0.0) slope = (1.0 - t) * slope + t * std::max(0.0, hull_query(lines[li + 1], x, z));
      }
      {
        // Limit d -> 0: directional derivative of the bilinear surface.
        const int un = u + s;
        const int vn = k * s > 0.0 ? v + 1 : v - 1;
        const double ks = std::abs(k);
        if (i > 0 && exit > 0.0 && !nodata_at(un, v)) {
          double deriv = height_at(un, v) - z;
          if (ks > 0.0) {
            if (vn < v0 || vn >= v1 || nodata_at(u, vn)) {
              deriv = -std::numeric_limits<double>::infinity();
            } else {
              deriv += ks * (height_at(u, vn) - z);
            }
          }
          slope = std::max(slope, deriv / step);
        }
      }
      for (int j = 1; j <= exact_steps * kNearSubsteps + (exit < kExactExit ? kNearSubsteps - 1 : 0); ++j) {
        const double d = static_cast<double>(j) / kNearSubsteps;
        if (d > exit || d > i) break;
        const double up = u + s * d;  // fractional major position
        const int ub = static_cast<int>(std::floor(up));
        double zj;
        if (!sample_between(ub, up - ub, v + k * s * d, zj)) continue;
        slope = std::max(slope, (zj - z) / (d * step));
      }
      if (exit < kExactExit && exit > 0.0 && exit <= i) {
        // The exit point itself, where the ray meets the window edge.
        const double up = u + s * exit;
        const int ub = static_cast<int>(std::floor(up));
        const double pv = std::clamp(v + k * s * exit, static_cast<double>(v0), static_cast<double>(v1 - 1));
        double zj;
        if (sample_between(ub, up - ub, pv, zj)) slope = std::max(slope, (zj - z) / (exit * step));
      }
      dst = slope > 0.0 ? static_cast<float>(std::min(rad2deg(std::atan(slope)), 89.999)) : 0.0f;
    }

    if (i > 0) {
      // Midpoints toward the previously swept column.
      const double um = u + 0.5 * s;
      const int ub = std::min(u, u + s);
      const double xm = -static_cast<double>(s) * um * step;
      const long mlo = static_cast<long>(std::ceil((v0 - k * um) * kLineDensity));
      const long mhi = static_cast<long>(std::floor(((v1 - 1) - k * um) * kLineDensity));
      for (long l = mlo; l <= mhi; ++l) {
        double z;
        if (sample_between(ub, 0.5, static_cast<double>(l) / kLineDensity + k * um, z)) {
          slot.emplace_back(static_cast<std::size_t>(l - lmin), HullPoint{xm, z});
        }
      }
    }
    const long lo = static_cast<long>(std::ceil((v0 - k * u) * kLineDensity));
    const long hi = static_cast<long>(std::floor(((v1 - 1) - k * u) * kLineDensity));
    for (long l = lo; l <= hi; ++l) {
      const double pv = std::clamp(static_cast<double>(l) / kLineDensity + k * u, static_cast<double>(v0), static_cast<double>(v1 - 1));
      double z;
      if (sample(u, pv, z)) slot.emplace_back(static_cast<std::size_t>(l - lmin), HullPoint{x, z});
    }
  }
}

GridGeometry window_geometry(const GridGeometry& g, const Window& w) {
  GridGeometry out = g;
  out.width = w.cols();
  out.height = w.rows();
  out.x_ll = g.x_ll + w.col0 * g.cell_size;
  out.y_ll = g.y_ll + (g.height - w.row1) * g.cell_size;
  return out;
}

NormalField crop_normals(const NormalField& n, const Window& w) {
  NormalField out;
  out.geometry = window_geometry(n.geometry, w);
  out.normals.reserve(out.geometry.cell_count());
  out.nodata.reserve(out.geometry.cell_count());
  for (int r = w.row0; r < w.row1; ++r) {
    for (int c = w.col0; c < w.col1; ++c) {
      const std::size_t i = n.geometry.index(r, c);
      out.normals.push_back(n.normals[i]);
      out.nodata.push_back(n.nodata[i]);
    }
  }
  return out;
}

}  // namespace

HorizonField compute_horizons(const HeightGrid& dsm, int azimuth_count, const Window& window, int jobs) {
  if (azimuth_count < 8) throw ContractError("azimuth_count must be >= 8");
  const GridGeometry& g = dsm.geometry();
  if (window.row0 < 0 || window.col0 < 0 || window.row1 > g.height || window.col1 > g.width ||
      window.rows() <= 0 || window.cols() <= 0) {
    throw ContractError("horizon window lies outside the grid");
  }
  HorizonField hf;
  hf.geometry = window_geometry(g, window);
  hf.azimuth_count = azimuth_count;
  const std::size_t cells = hf.geometry.cell_count();
  hf.angles.assign(cells * static_cast<std::size_t>(azimuth_count), 0.0f);
  parallel_for(static_cast<std::size_t>(azimuth_count), jobs, [&](std::size_t a) {
    sweep_azimuth(dsm, window, hf.azimuth_deg(static_cast<int>(a)), hf.angles.data() + a * cells);
  });
  return hf;
}

HorizonField compute_horizons(const HeightGrid& dsm, int azimuth_count, int jobs) {
  return compute_horizons(dsm, azimuth_count, Window{0, 0, dsm.height(), dsm.width()}, jobs);
}

void SiteConfig::validate() const {
  if (!(std::abs(latitude) <= 90.0)) throw ContractError("latitude must lie in [-90, 90]");
  if (!(std::abs(longitude) <= 180.0)) throw ContractError("longitude must lie in [-180, 180]");
  if (tile_core < 0 || tile_margin < 0) throw ContractError("tile_core and tile_margin must be >= 0");
  if (azimuth_count < 8) throw ContractError("azimuth_count must be >= 8");
  if (time_step < 1) throw ContractError("time_step must be >= 1");
  temperature.validate();
}

std::vector<SunSample> sun_samples(const WeatherSeries& weather, const SiteConfig& site) {
  site.validate();
  weather.validate();
  std::vector<SunSample> out;
  for (std::size_t i = 0; i < weather.records.size(); i += static_cast<std::size_t>(site.time_step)) {
    const WeatherRecord& r = weather.records[i];
    const SunPosition sp = sun_position(site.latitude, site.longitude, r.time + minutes{30});
    out.push_back({sp.azimuth_deg, sp.elevation_deg, r.dni, r.dhi,
                   temperature_correction(r.air_temp, r.wind_speed, site.temperature),
                   static_cast<double>(site.time_step)});
  }
  return out;
}

HeightGrid flux_from_samples(const NormalField& normals, const HorizonField& horizons,
                             std::span<const SunSample> samples) {
  if (!(normals.geometry == horizons.geometry)) throw ContractError("normals and horizons differ in geometry");
  const std::size_t cells = normals.geometry.cell_count();
  const int na = horizons.azimuth_count;

  double diffuse = 0.0;
  for (const SunSample& s : samples) diffuse += s.dhi * s.efficiency * s.hours;

  std::vector<double> direct(cells, 0.0);
  for (const SunSample& s : samples) {
    if (s.elevation_deg <= 0.0 || s.dni <= 0.0) continue;
    const Vec3 sun = sun_direction(s.azimuth_deg, s.elevation_deg);
    const double weight = s.dni * s.efficiency * s.hours;
    double pos = std::fmod(s.azimuth_deg, 360.0) * na / 360.0;
    if (pos < 0) pos += na;
    int i0 = static_cast<int>(std::floor(pos));
    const double t = pos - i0;
    i0 %= na;
    const int i1 = (i0 + 1) % na;
    const float* h0 = horizons.angles.data() + static_cast<std::size_t>(i0) * cells;
    const float* h1 = horizons.angles.data() + static_cast<std::size_t>(i1) * cells;
    for (std::size_t i = 0; i < cells; ++i) {
      if (normals.nodata[i]) continue;
      const double cos_inc = normals.normals[i].dot(sun);
      if (cos_inc <= 0.0) continue;
      const double horizon = (1.0 - t) * h0[i] + t * h1[i];
      if (s.elevation_deg > horizon) direct[i] += weight * cos_inc;
    }
  }

  HeightGrid flux(normals.geometry, 0.0);
  std::vector<double> hz(static_cast<std::size_t>(na));
  for (std::size_t i = 0; i < cells; ++i) {
    if (normals.nodata[i]) {
      flux.set_nodata(i);
      continue;
    }
    for (int a = 0; a < na; ++a) hz[static_cast<std::size_t>(a)] = horizons.at(i, a);
    flux[i] = (direct[i] + diffuse * sky_view_factor(hz)) / 1000.0;
  }
  return flux;
}

HeightGrid flux_map(const HeightGrid& dsm, const NormalField& normals, std::span<const SunSample> samples,
                    const SiteConfig& site, int jobs) {
  site.validate();
  if (!(dsm.geometry() == normals.geometry)) {
    throw ContractError("flux_map: DSM and normals differ in geometry");
  }
  const int h = dsm.height(), w = dsm.width();
  if (site.tile_core == 0 || (site.tile_core >= h && site.tile_core >= w)) {
    return flux_from_samples(normals, compute_horizons(dsm, site.azimuth_count, jobs), samples);
  }
  const int core = site.tile_core, margin = site.tile_margin;
  const int tiles_r = (h + core - 1) / core, tiles_c = (w + core - 1) / core;
  HeightGrid flux(dsm.geometry(), 0.0);
  parallel_for(static_cast<std::size_t>(tiles_r * tiles_c), jobs, [&](std::size_t t) {
    const int tr = static_cast<int>(t) / tiles_c, tc = static_cast<int>(t) % tiles_c;
    const Window core_win{tr * core, tc * core, std::min(h, (tr + 1) * core), std::min(w, (tc + 1) * core)};
    const Window crop{std::max(0, core_win.row0 - margin), std::max(0, core_win.col0 - margin),
                      std::min(h, core_win.row1 + margin), std::min(w, core_win.col1 + margin)};
    const HorizonField hf = compute_horizons(dsm, site.azimuth_count, crop, 1);
    const HeightGrid part = flux_from_samples(crop_normals(normals, crop), hf, samples);
    for (int r = core_win.row0; r < core_win.row1; ++r) {
      for (int c = core_win.col0; c < core_win.col1; ++c) {
        const std::size_t src = part.geometry().index(r - crop.row0, c - crop.col0);
        const std::size_t dst = flux.geometry().index(r, c);
        flux[dst] = part[src];
        flux.set_nodata(dst, part.is_nodata(src));
      }
    }
  });
  return flux;
}

HeightGrid flux_map(const HeightGrid& dsm, const NormalField& normals, const WeatherSeries& weather,
                    const SiteConfig& site, int jobs) {
  const std::vector<SunSample> samples = sun_samples(weather, site);
  return flux_map(dsm, normals, samples, site, jobs);
}

}  // namespace sunroof
