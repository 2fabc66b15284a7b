// sunroof: command line front end for the solar-potential pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sunroof/grid_io.hpp"
#include "sunroof/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sunroof;

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  void add(CLI::App* app) {
    app->add_option("-c,--config", path, "JSON config file");
    app->add_option("--set", overrides, "Config override key=value (repeatable)");
  }

  PipelineConfig load() const {
    json j = json::object();
    fs::path base;
    if (!path.empty()) {
      std::ifstream in(path);
      if (!in) throw Error("cannot open config '" + path + "'");
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
      }
      base = fs::path(path).parent_path();
    }
    for (const auto& o : overrides) apply_override(j, o);
    return config_from_json(j, base);
  }
};

double valid_range(const HeightGrid& g, double& lo, double& hi) {
  bool any = false;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.is_nodata(i)) continue;
    lo = any ? std::min(lo, g[i]) : g[i];
    hi = any ? std::max(hi, g[i]) : g[i];
    any = true;
  }
  if (!any) throw Error("grid has no valid cells");
  if (!(hi > lo)) hi = lo + 1.0;
  return hi - lo;
}

void print_warnings(const std::vector<std::string>& w) {
  for (const auto& s : w) std::cerr << "warning: " << s << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rooftop solar potential from elevation rasters"};
  app.require_subcommand(1);
  int jobs = 1;
  app.add_option("-j,--jobs", jobs, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene and a weather year");
  ConfigArgs synth_cfg;
  synth_cfg.add(synth);
  std::string synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("-o,--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Scene seed (overrides scene.rng_seed)");

  // degrade
  auto* degrade_cmd = app.add_subcommand("degrade", "Write lower quality DSM and probabilities for a scene");
  ConfigArgs degrade_cfg;
  degrade_cfg.add(degrade_cmd);
  std::string degrade_scene, degrade_out;
  std::optional<std::uint64_t> degrade_seed;
  degrade_cmd->add_option("-s,--scene", degrade_scene, "Scene directory")->required();
  degrade_cmd->add_option("-o,--out", degrade_out, "Output directory")->required();
  degrade_cmd->add_option("--seed", degrade_seed, "Degradation seed (overrides degrade_seed)");

  // refine
  auto* refine_cmd = app.add_subcommand("refine", "Refine building footprints");
  ConfigArgs refine_cfg;
  refine_cfg.add(refine_cmd);
  std::string refine_dsm, refine_fp, refine_probs, refine_out;
  refine_cmd->add_option("--dsm", refine_dsm)->required();
  refine_cmd->add_option("--footprints", refine_fp)->required();
  refine_cmd->add_option("--probabilities", refine_probs)->required();
  refine_cmd->add_option("-o,--out", refine_out, "Refined footprint grid")->required();

  // segment
  auto* segment_cmd = app.add_subcommand("segment", "Segment roofs into planes");
  ConfigArgs segment_cfg;
  segment_cfg.add(segment_cmd);
  std::string seg_dsm, seg_fp, seg_out;
  segment_cmd->add_option("--dsm", seg_dsm)->required();
  segment_cmd->add_option("--footprints", seg_fp)->required();
  segment_cmd->add_option("-o,--out", seg_out, "Output prefix: <out>.asc and <out>.json")->required();

  // flux
  auto* flux_cmd = app.add_subcommand("flux", "Annual irradiation per cell");
  ConfigArgs flux_cfg;
  flux_cfg.add(flux_cmd);
  std::string flux_dsm, flux_weather, flux_out, flux_png;
  flux_cmd->add_option("--dsm", flux_dsm)->required();
  flux_cmd->add_option("--weather", flux_weather)->required();
  flux_cmd->add_option("-o,--out", flux_out, "Flux grid (kWh/m^2/yr)")->required();
  flux_cmd->add_option("--png", flux_png, "Also write a colormapped PNG");

  // layout
  auto* layout_cmd = app.add_subcommand("layout", "Place panels and write a report");
  ConfigArgs layout_cfg;
  layout_cfg.add(layout_cmd);
  std::string lay_fp, lay_seg, lay_flux, lay_out;
  layout_cmd->add_option("--footprints", lay_fp)->required();
  layout_cmd->add_option("--segments", lay_seg, "Prefix written by 'segment'")->required();
  layout_cmd->add_option("--flux", lay_flux)->required();
  layout_cmd->add_option("-o,--out", lay_out, "Report JSON")->required();

  // run
  auto* run_cmd = app.add_subcommand("run", "Run every stage from a config");
  ConfigArgs run_cfg;
  run_cfg.add(run_cmd);
  std::string run_out;
  run_cmd->add_option("-o,--out", run_out, "Output directory (overrides output_dir)");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "MAPE between a predicted and a reference report");
  std::string eval_pred, eval_ref, eval_out;
  std::vector<double> eval_targets{5.0};
  double eval_iou = 0.3;
  eval_cmd->add_option("--pred", eval_pred)->required();
  eval_cmd->add_option("--ref", eval_ref)->required();
  eval_cmd->add_option("--targets", eval_targets, "Sub-array capacities in kW")->delimiter(',');
  eval_cmd->add_option("--min-iou", eval_iou, "Footprint IoU needed to pair buildings");
  eval_cmd->add_option("-o,--out", eval_out, "Metrics JSON (default stdout)");

  // render
  auto* render_cmd = app.add_subcommand("render", "Render a grid as PNG");
  std::string render_grid, render_out, render_mode = "colormap";
  std::optional<double> render_lo, render_hi;
  double render_az = 315.0, render_el = 45.0;
  render_cmd->add_option("grid", render_grid)->required();
  render_cmd->add_option("-o,--out", render_out)->required();
  render_cmd->add_option("--mode", render_mode)->check(CLI::IsMember({"colormap", "hillshade", "labels"}));
  render_cmd->add_option("--lo", render_lo);
  render_cmd->add_option("--hi", render_hi);
  render_cmd->add_option("--azimuth", render_az);
  render_cmd->add_option("--elevation", render_el);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      PipelineConfig cfg = synth_cfg.load();
      if (synth_seed) cfg.scene.rng_seed = *synth_seed;
      const Scene scene = generate_scene(cfg.scene);
      const WeatherSeries weather =
          synthetic_weather(cfg.site.latitude, cfg.site.longitude, cfg.weather_year, cfg.weather_seed);
      write_outputs(synth_out, [&](const fs::path& dir) {
        write_scene(scene, dir);
        write_weather(weather, dir / "weather.csv");
      });
    } else if (degrade_cmd->parsed()) {
      PipelineConfig cfg = degrade_cfg.load();
      if (degrade_seed) cfg.degrade_seed = *degrade_seed;
      const Scene scene = read_scene(degrade_scene);
      const DegradedInputs lq = degrade(scene, cfg.degrade, cfg.degrade_seed);
      write_outputs(degrade_out, [&](const fs::path& dir) {
        write_grid(lq.dsm_lq, dir / "dsm_lq.asc");
        write_probabilities(lq.probabilities_lq, dir / "probabilities_lq.asc");
      });
    } else if (refine_cmd->parsed()) {
      const PipelineConfig cfg = refine_cfg.load();
      const HeightGrid dsm = read_grid(refine_dsm);
      const auto fp = FootprintSet::from_labels(read_labels(refine_fp));
      const ProbabilityGrid probs = read_probabilities(refine_probs);
      RefineResult r = refine_footprints(dsm, fp, probs, cfg.refine_params, jobs);
      print_warnings(r.warnings);
      write_output_file(refine_out, [&](const fs::path& p) { write_labels(r.footprints.labels, p); });
    } else if (segment_cmd->parsed()) {
      const PipelineConfig cfg = segment_cfg.load();
      const HeightGrid dsm = read_grid(seg_dsm);
      const auto fp = FootprintSet::from_labels(read_labels(seg_fp));
      const SegmentedRoofs roofs = segment_buildings(dsm, fp, cfg.segment, jobs);
      write_output_file(seg_out + ".asc", [&](const fs::path& la) {
        write_output_file(seg_out + ".json", [&](const fs::path& js) { write_segments(roofs, la, js); });
      });
    } else if (flux_cmd->parsed()) {
      const PipelineConfig cfg = flux_cfg.load();
      const HeightGrid dsm = read_grid(flux_dsm);
      const WeatherSeries weather = read_weather(flux_weather);
      const HeightGrid flux = flux_map(dsm, compute_normals(dsm, cfg.normal_smoothing), weather, cfg.site, jobs);
      write_output_file(flux_out, [&](const fs::path& p) { write_grid(flux, p); });
      if (!flux_png.empty()) {
        double lo = 0, hi = 0;
        valid_range(flux, lo, hi);
        write_output_file(flux_png, [&](const fs::path& p) { write_png(colormap(flux, lo, hi), p); });
      }
    } else if (layout_cmd->parsed()) {
      const PipelineConfig cfg = layout_cfg.load();
      const auto fp = FootprintSet::from_labels(read_labels(lay_fp));
      const SegmentedRoofs roofs = read_segments(lay_seg + ".asc", lay_seg + ".json");
      const HeightGrid flux = read_grid(lay_flux);
      const SolarReport rep = build_report(fp, roofs, flux, cfg, jobs);
      write_output_file(lay_out, [&](const fs::path& p) { write_report(rep, p); });
    } else if (run_cmd->parsed()) {
      PipelineConfig cfg = run_cfg.load();
      if (!run_out.empty()) cfg.output_dir = run_out;
      const SolarReport rep = run_pipeline(cfg, jobs);
      std::cout << rep.buildings.size() << " buildings, " << rep.total_energy() << " kWh/yr full tiling\n";
    } else if (eval_cmd->parsed()) {
      const SolarReport pred = read_report(eval_pred), ref = read_report(eval_ref);
      const json metrics = evaluate(pred, ref, eval_targets, eval_iou);
      if (eval_out.empty()) {
        std::cout << metrics.dump(2) << '\n';
      } else {
        write_output_file(eval_out, [&](const fs::path& p) {
          std::ofstream out(p);
          if (!out) throw Error("cannot write '" + p.string() + "'");
          out << metrics.dump(2) << '\n';
        });
      }
    } else if (render_cmd->parsed()) {
      if (render_mode == "labels") {
        const LabelGrid labels = read_labels(render_grid);
        write_output_file(render_out, [&](const fs::path& p) { write_png(render_labels(labels), p); });
      } else {
        const HeightGrid g = read_grid(render_grid);
        if (render_mode == "hillshade") {
          write_output_file(render_out, [&](const fs::path& p) { write_png(hillshade(g, render_az, render_el), p); });
        } else {
          double lo = 0, hi = 0;
          valid_range(g, lo, hi);
          if (render_lo) lo = *render_lo;
          if (render_hi) hi = *render_hi;
          write_output_file(render_out, [&](const fs::path& p) { write_png(colormap(g, lo, hi), p); });
        }
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
