#include "sunroof/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "sunroof/grid_io.hpp"
#include "sunroof/parallel.hpp"

namespace sunroof {

using nlohmann::json;
namespace fs = std::filesystem;

void PipelineConfig::validate() const {
  site.validate();
  segment.validate();
  refine_params.validate();
  panel.validate();
  layout.validate();
  scene.validate();
  degrade.validate();
  if (normal_smoothing < 0) throw ContractError("normal_smoothing must be non-negative");
  for (const double kw : targets_kw) {
    if (!(kw > 0.0)) throw ContractError("targets_kw entries must be positive");
  }
}

namespace {

json site_json(const SiteConfig& s) {
  return {{"latitude", s.latitude},
          {"longitude", s.longitude},
          {"tile_core", s.tile_core},
          {"tile_margin", s.tile_margin},
          {"azimuth_count", s.azimuth_count},
          {"time_step", s.time_step},
          {"temperature",
           {{"a", s.temperature.a},
            {"b", s.temperature.b},
            {"gamma", s.temperature.gamma},
            {"min_factor", s.temperature.min_factor},
            {"max_factor", s.temperature.max_factor}}}};
}

json segment_json(const SegmentConfig& s) {
  return {{"ransac_inlier_threshold", s.ransac_inlier_threshold},
          {"ransac_iterations", s.ransac_iterations},
          {"min_inlier_count", s.min_inlier_count},
          {"max_planes", s.max_planes},
          {"smoothness_weight", s.smoothness_weight},
          {"refit_rounds", s.refit_rounds},
          {"min_segment_area", s.min_segment_area},
          {"max_pitch", s.max_pitch},
          {"outlier_penalty_factor", s.outlier_penalty_factor},
          {"max_sweeps", s.max_sweeps},
          {"seed", s.seed}};
}

json refine_json(const RefineConfig& r) {
  return {{"unary_weight", r.unary_weight},
          {"pairwise_weight", r.pairwise_weight},
          {"height_discontinuity_scale", r.height_discontinuity_scale},
          {"probability_floor", r.probability_floor},
          {"dilation_radius", r.dilation_radius}};
}

json scene_json(const SceneSpec& s) {
  json styles = json::array();
  for (const RoofStyle st : s.roof_styles) styles.push_back(to_string(st));
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

json degrade_json(const DegradeParams& d) {
  return {{"downsample_factor", d.downsample_factor},
          {"gaussian_blur_sigma", d.gaussian_blur_sigma},
          {"noise_sigma", d.noise_sigma},
          {"registration_jitter", d.registration_jitter},
          {"foliage_change_probability", d.foliage_change_probability},
          {"probability_softening", d.probability_softening}};
}

// Overlays `user` on `defaults`, rejecting keys the defaults do not have.
void merge_checked(json& defaults, const json& user, const std::string& where) {
  if (!user.is_object()) throw ParseError("config " + (where.empty() ? "root" : where) + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!defaults.contains(key)) throw ParseError("unknown config key '" + path + "'");
    json& slot = defaults[key];
    if (slot.is_object()) {
      merge_checked(slot, value, path);
    } else {
      slot = value;
    }
  }
}

fs::path resolve(const json& j, const fs::path& base) {
  const fs::path p = j.get<std::string>();
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

json config_to_json(const PipelineConfig& c) {
  json targets = c.targets_kw;
  return {{"dsm", c.dsm.string()},
          {"footprints", c.footprints.string()},
          {"probabilities", c.probabilities.string()},
          {"weather", c.weather.string()},
          {"output_dir", c.output_dir.string()},
          {"write_png", c.write_png},
          {"refine", c.refine},
          {"normal_smoothing", c.normal_smoothing},
          {"targets_kw", targets},
          {"site", site_json(c.site)},
          {"segment", segment_json(c.segment)},
          {"refine_params", refine_json(c.refine_params)},
          {"panel",
           {{"width", c.panel.width},
            {"height", c.panel.height},
            {"rated_power", c.panel.rated_power},
            {"spacing", c.panel.spacing},
            {"system_efficiency", c.panel.system_efficiency}}},
          {"layout", {{"phase_steps", c.layout.phase_steps}, {"max_pitch", c.layout.max_pitch}}},
          {"scene", scene_json(c.scene)},
          {"degrade", degrade_json(c.degrade)},
          {"degrade_seed", c.degrade_seed},
          {"weather_seed", c.weather_seed},
          {"weather_year", c.weather_year}};
}

PipelineConfig config_from_json(const json& user, const fs::path& base_dir) {
  json j = config_to_json(PipelineConfig{});
  merge_checked(j, user, "");
  PipelineConfig c;
  c.dsm = resolve(j.at("dsm"), base_dir);
  c.footprints = resolve(j.at("footprints"), base_dir);
  c.probabilities = resolve(j.at("probabilities"), base_dir);
  c.weather = resolve(j.at("weather"), base_dir);
  c.output_dir = resolve(j.at("output_dir"), base_dir);
  read(j, "write_png", c.write_png);
  read(j, "refine", c.refine);
  read(j, "normal_smoothing", c.normal_smoothing);
  read(j, "targets_kw", c.targets_kw);
  read(j, "degrade_seed", c.degrade_seed);
  read(j, "weather_seed", c.weather_seed);
  read(j, "weather_year", c.weather_year);

  const json& s = j.at("site");
  read(s, "latitude", c.site.latitude);
  read(s, "longitude", c.site.longitude);
  read(s, "tile_core", c.site.tile_core);
  read(s, "tile_margin", c.site.tile_margin);
  read(s, "azimuth_count", c.site.azimuth_count);
  read(s, "time_step", c.site.time_step);
  const json& t = s.at("temperature");
  read(t, "a", c.site.temperature.a);
  read(t, "b", c.site.temperature.b);
  read(t, "gamma", c.site.temperature.gamma);
  read(t, "min_factor", c.site.temperature.min_factor);
  read(t, "max_factor", c.site.temperature.max_factor);

  const json& g = j.at("segment");
  read(g, "ransac_inlier_threshold", c.segment.ransac_inlier_threshold);
  read(g, "ransac_iterations", c.segment.ransac_iterations);
  read(g, "min_inlier_count", c.segment.min_inlier_count);
  read(g, "max_planes", c.segment.max_planes);
  read(g, "smoothness_weight", c.segment.smoothness_weight);
  read(g, "refit_rounds", c.segment.refit_rounds);
  read(g, "min_segment_area", c.segment.min_segment_area);
  read(g, "max_pitch", c.segment.max_pitch);
  read(g, "outlier_penalty_factor", c.segment.outlier_penalty_factor);
  read(g, "max_sweeps", c.segment.max_sweeps);
  read(g, "seed", c.segment.seed);

  const json& r = j.at("refine_params");
  read(r, "unary_weight", c.refine_params.unary_weight);
  read(r, "pairwise_weight", c.refine_params.pairwise_weight);
  read(r, "height_discontinuity_scale", c.refine_params.height_discontinuity_scale);
  read(r, "probability_floor", c.refine_params.probability_floor);
  read(r, "dilation_radius", c.refine_params.dilation_radius);

  const json& p = j.at("panel");
  read(p, "width", c.panel.width);
  read(p, "height", c.panel.height);
  read(p, "rated_power", c.panel.rated_power);
  read(p, "spacing", c.panel.spacing);
  read(p, "system_efficiency", c.panel.system_efficiency);

  const json& l = j.at("layout");
  read(l, "phase_steps", c.layout.phase_steps);
  read(l, "max_pitch", c.layout.max_pitch);

  const json& sc = j.at("scene");
  read(sc, "rng_seed", c.scene.rng_seed);
  read(sc, "extent", c.scene.extent);
  read(sc, "cell_size", c.scene.cell_size);
  read(sc, "building_count", c.scene.building_count);
  c.scene.roof_styles.clear();
  for (const auto& st : sc.at("roof_styles")) c.scene.roof_styles.push_back(roof_style_from_string(st.get<std::string>()));
  read(sc, "tree_count", c.scene.tree_count);
  read(sc, "obstacle_density", c.scene.obstacle_density);
  read(sc, "terrain_amplitude", c.scene.terrain_amplitude);
  read(sc, "tree_overhang_probability", c.scene.tree_overhang_probability);

  const json& d = j.at("degrade");
  read(d, "downsample_factor", c.degrade.downsample_factor);
  read(d, "gaussian_blur_sigma", c.degrade.gaussian_blur_sigma);
  read(d, "noise_sigma", c.degrade.noise_sigma);
  read(d, "registration_jitter", c.degrade.registration_jitter);
  read(d, "foliage_change_probability", c.degrade.foliage_change_probability);
  read(d, "probability_softening", c.degrade.probability_softening);

  c.validate();
  return c;
}

PipelineConfig read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ParseError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ParseError("override key '" + key + "' has an empty component");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

SegmentedRoofs segment_buildings(const HeightGrid& dsm, const FootprintSet& footprints, const SegmentConfig& cfg,
                                 int jobs) {
  if (!(footprints.labels.geometry() == dsm.geometry())) throw ContractError("footprints do not match the DSM grid");
  const auto ids = footprints.ids();
  std::vector<std::vector<RoofSegment>> per(ids.size());
  std::vector<std::vector<std::string>> notes(ids.size());
  parallel_for(ids.size(), jobs, [&](std::size_t i) {
    per[i] = segment_roof(dsm, footprints.cells(ids[i]), cfg, &notes[i]);
  });
  SegmentedRoofs out;
  out.geometry = dsm.geometry();
  out.labels = LabelGrid(dsm.geometry(), 0);
  std::int32_t next = 1;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (auto& seg : per[i]) {
      for (const std::size_t c : seg.cells) out.labels[c] = next;
      out.segments.push_back({next++, ids[i], std::move(seg)});
    }
    for (auto& n : notes[i]) out.diagnostics.push_back("building " + std::to_string(ids[i]) + ": " + n);
  }
  return out;
}

void write_segments(const SegmentedRoofs& roofs, const fs::path& labels_path, const fs::path& json_path) {
  write_labels(roofs.labels, labels_path);
  json segs = json::array();
  for (const auto& e : roofs.segments) {
    const Vec3& n = e.segment.plane.normal;
    segs.push_back({{"segment_id", e.segment_id},
                    {"building_id", e.building_id},
                    {"normal", {n.x(), n.y(), n.z()}},
                    {"offset", e.segment.plane.offset},
                    {"area", e.segment.area},
                    {"cell_count", e.segment.cells.size()}});
  }
  std::ofstream out(json_path);
  if (!out) throw Error("cannot write '" + json_path.string() + "'");
  out << json{{"schema_version", 1}, {"segments", segs}, {"diagnostics", roofs.diagnostics}}.dump(2) << '\n';
}

SegmentedRoofs read_segments(const fs::path& labels_path, const fs::path& json_path) {
  SegmentedRoofs out;
  out.labels = read_labels(labels_path);
  out.geometry = out.labels.geometry();
  std::ifstream in(json_path);
  if (!in) throw Error("cannot open '" + json_path.string() + "'");
  try {
    const json j = json::parse(in);
    if (j.at("schema_version").get<int>() != 1) throw ParseError("unsupported segments schema version");
    out.diagnostics = j.value("diagnostics", std::vector<std::string>{});
    for (const auto& s : j.at("segments")) {
      SegmentedRoofs::Entry e;
      e.segment_id = s.at("segment_id").get<std::int32_t>();
      e.building_id = s.at("building_id").get<std::int32_t>();
      const auto n = s.at("normal").get<std::vector<double>>();
      if (n.size() != 3) throw ParseError("segment normal must have 3 components");
      e.segment.plane = Plane{Vec3(n[0], n[1], n[2]), s.at("offset").get<double>()};
      e.segment.area = s.at("area").get<double>();
      out.segments.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw ParseError(json_path.string() + ": " + ex.what());
  }
  std::map<std::int32_t, std::size_t> index;
  for (std::size_t i = 0; i < out.segments.size(); ++i) index[out.segments[i].segment_id] = i;
  for (std::size_t c = 0; c < out.labels.size(); ++c) {
    const auto id = out.labels[c];
    if (id == 0) continue;
    const auto it = index.find(id);
    if (it == index.end()) throw ParseError(labels_path.string() + ": cell label " + std::to_string(id) + " has no segment entry");
    out.segments[it->second].segment.cells.push_back(c);
  }
  return out;
}

SolarReport build_report(const FootprintSet& footprints, const SegmentedRoofs& roofs, const HeightGrid& flux,
                         const PipelineConfig& cfg, int jobs) {
  if (!(roofs.geometry == flux.geometry()) || !(footprints.labels.geometry() == flux.geometry())) {
    throw ContractError("segments, footprints and flux must share a grid");
  }
  std::vector<std::vector<PanelPlacement>> panels(roofs.segments.size());
  parallel_for(roofs.segments.size(), jobs, [&](std::size_t i) {
    const auto& e = roofs.segments[i];
    panels[i] = layout_panels(e.segment, e.segment_id, cfg.panel, flux, cfg.layout);
  });

  SolarReport rep;
  rep.geometry = flux.geometry();
  rep.latitude = cfg.site.latitude;
  rep.longitude = cfg.site.longitude;
  rep.panel = cfg.panel;
  rep.seeds = {{"segment", cfg.segment.seed},
               {"scene", cfg.scene.rng_seed},
               {"degrade", cfg.degrade_seed},
               {"weather", cfg.weather_seed}};
  std::set<std::string> warnings;
  std::int32_t next_panel = 1;
  std::size_t si = 0;
  for (const std::int32_t id : footprints.ids()) {
    BuildingReport b;
    b.building_id = id;
    b.footprint_cells = footprints.cells(id);
    while (si < roofs.segments.size() && roofs.segments[si].building_id < id) ++si;
    for (; si < roofs.segments.size() && roofs.segments[si].building_id == id; ++si) {
      const auto& e = roofs.segments[si];
      SegmentReport sr;
      sr.segment_id = e.segment_id;
      sr.plane = e.segment.plane;
      sr.area = e.segment.area;
      sr.cell_count = static_cast<std::int32_t>(e.segment.cells.size());
      sr.panel_count = static_cast<std::int32_t>(panels[si].size());
      for (auto& p : panels[si]) {
        p.id = next_panel++;
        sr.annual_energy += p.annual_energy;
        b.panels.push_back(std::move(p));
      }
      b.segments.push_back(sr);
    }
    b.total_energy = total_energy(b.panels);
    std::vector<double> targets = cfg.targets_kw;
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    for (const double kw : targets) {
      std::vector<std::string> w;
      const auto chosen = select_subarray(b.panels, kw, cfg.panel.rated_power, &w);
      for (auto& s : w) warnings.insert("building " + std::to_string(id) + ": " + s);
      SubarrayResult sub;
      sub.target_kw = kw;
      sub.annual_energy = total_energy(chosen);
      for (const auto& p : chosen) sub.panel_ids.push_back(p.id);
      b.subarrays.push_back(std::move(sub));
    }
    rep.buildings.push_back(std::move(b));
  }
  rep.warnings.assign(warnings.begin(), warnings.end());
  for (const auto& d : roofs.diagnostics) rep.warnings.push_back(d);
  rep.validate();
  return rep;
}

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw Error(std::string(what) + " path is not set");
  if (!fs::is_regular_file(p)) throw Error(std::string(what) + " file '" + p.string() + "' does not exist");
}

}  // namespace

PipelineResult run_stages(const PipelineConfig& cfg, int jobs) {
  stage("config", [&] { cfg.validate(); });
  const HeightGrid dsm = stage("load", [&] {
    require_file(cfg.dsm, "DSM");
    return read_grid(cfg.dsm);
  });
  const LabelGrid labels = stage("load", [&] {
    require_file(cfg.footprints, "footprints");
    LabelGrid l = read_labels(cfg.footprints);
    if (!(l.geometry() == dsm.geometry())) throw Error("footprints grid does not match the DSM");
    return l;
  });
  const WeatherSeries weather = stage("load", [&] {
    require_file(cfg.weather, "weather");
    return read_weather(cfg.weather);
  });

  PipelineResult res;
  res.footprints = stage("refine", [&] {
    FootprintSet fp = FootprintSet::from_labels(labels);
    if (!cfg.refine) return fp;
    require_file(cfg.probabilities, "probabilities");
    const ProbabilityGrid probs = read_probabilities(cfg.probabilities);
    if (!(probs.geometry() == dsm.geometry())) throw Error("probabilities grid does not match the DSM");
    RefineResult r = refine_footprints(dsm, fp, probs, cfg.refine_params, jobs);
    return std::move(r.footprints);
  });
  res.roofs = stage("segment", [&] { return segment_buildings(dsm, res.footprints, cfg.segment, jobs); });
  res.flux = stage("flux", [&] {
    const NormalField normals = compute_normals(dsm, cfg.normal_smoothing);
    return flux_map(dsm, normals, weather, cfg.site, jobs);
  });
  res.report = stage("layout", [&] { return build_report(res.footprints, res.roofs, res.flux, cfg, jobs); });
  return res;
}

RgbImage render_labels(const LabelGrid& labels) {
  RgbImage img(labels.geometry(), Rgb{});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto id = labels[i];
    if (id == 0) continue;
    std::uint32_t h = static_cast<std::uint32_t>(id) * 2654435761u;
    h ^= h >> 15;
    img[i] = Rgb{static_cast<std::uint8_t>(64 + (h & 0x7f)), static_cast<std::uint8_t>(64 + ((h >> 8) & 0x7f)),
                 static_cast<std::uint8_t>(64 + ((h >> 16) & 0x7f))};
  }
  return img;
}

void write_outputs(const fs::path& dir, const std::function<void(const fs::path&)>& fn) {
  const bool created = !fs::exists(dir);
  fs::create_directories(dir);
  const fs::path staging = dir / ".staging";
  fs::remove_all(staging);
  fs::create_directory(staging);
  try {
    fn(staging);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(staging)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) fs::rename(f, dir / f.filename());
    fs::remove_all(staging);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    if (created) fs::remove(dir, ec);  // only succeeds when empty
    throw;
  }
}

void write_output_file(const fs::path& path, const std::function<void(const fs::path&)>& fn) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".partial";
  try {
    fn(tmp);
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

SolarReport run_pipeline(const PipelineConfig& cfg, int jobs) {
  PipelineResult res = run_stages(cfg, jobs);
  stage("write", [&] {
    write_outputs(cfg.output_dir, [&](const fs::path& dir) {
      write_report(res.report, dir / "report.json");
      write_grid(res.flux, dir / "flux.asc");
      write_labels(res.footprints.labels, dir / "footprints.asc");
      write_segments(res.roofs, dir / "segments.asc", dir / "segments.json");
      if (cfg.write_png) {
        double lo = 0.0, hi = 0.0;
        bool any = false;
        for (std::size_t i = 0; i < res.flux.size(); ++i) {
          if (res.flux.is_nodata(i)) continue;
          lo = any ? std::min(lo, res.flux[i]) : res.flux[i];
          hi = any ? std::max(hi, res.flux[i]) : res.flux[i];
          any = true;
        }
        write_png(colormap(res.flux, lo, hi > lo ? hi : lo + 1.0), dir / "flux.png");
        write_png(render_labels(res.roofs.labels), dir / "segments.png");
      }
    });
  });
  return std::move(res.report);
}

}  // namespace sunroof
