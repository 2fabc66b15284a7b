#pragma once

// End-to-end orchestration: refine, segment, flux, layout, report.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sunroof/footprint.hpp"
#include "sunroof/panel.hpp"
#include "sunroof/report.hpp"
#include "sunroof/roof_segment.hpp"
#include "sunroof/scene.hpp"
#include "sunroof/solar.hpp"

namespace sunroof {

/// Error raised inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct PipelineConfig {
  // Inputs.
  std::filesystem::path dsm;
  std::filesystem::path footprints;
  std::filesystem::path probabilities;  ///< required when refining
  std::filesystem::path weather;
  // Outputs.
  std::filesystem::path output_dir = "out";
  bool write_png = false;

  bool refine = true;
  int normal_smoothing = 1;  ///< cells, for flux normals
  std::vector<double> targets_kw{5.0};

  SiteConfig site;
  SegmentConfig segment;
  RefineConfig refine_params;
  PanelSpec panel;
  LayoutConfig layout;
  SceneSpec scene;
  // moderate degradation; DegradeParams{} alone is the identity
  DegradeParams degrade{2, 0.5, 0.05, 0.25, 0.05, 0.2};
  std::uint64_t degrade_seed = 1;
  std::uint64_t weather_seed = 1;
  int weather_year = 2023;

  void validate() const;
};

/// Reads a config object; relative paths resolve against `base_dir`.
/// Unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig read_config(const std::filesystem::path& path);

/// Applies "a.b.c=value" to a config object. The value is parsed as JSON
/// and taken as a string when that fails.
void apply_override(nlohmann::json& config, const std::string& assignment);

struct SegmentedRoofs {
  GridGeometry geometry;
  /// Segment id per cell (0 = none). Ids are 1-based, ascending with building id.
  LabelGrid labels;
  struct Entry {
    std::int32_t segment_id = 0;
    std::int32_t building_id = 0;
    RoofSegment segment;
  };
  std::vector<Entry> segments;
  std::vector<std::string> diagnostics;
};

SegmentedRoofs segment_buildings(const HeightGrid& dsm, const FootprintSet& footprints, const SegmentConfig& cfg,
                                 int jobs = 1);
void write_segments(const SegmentedRoofs& roofs, const std::filesystem::path& labels_path,
                    const std::filesystem::path& json_path);
SegmentedRoofs read_segments(const std::filesystem::path& labels_path, const std::filesystem::path& json_path);

/// Panels for every segment, per-building totals and sub-arrays.
SolarReport build_report(const FootprintSet& footprints, const SegmentedRoofs& roofs, const HeightGrid& flux,
                         const PipelineConfig& cfg, int jobs = 1);

struct PipelineResult {
  SolarReport report;
  FootprintSet footprints;
  SegmentedRoofs roofs;
  HeightGrid flux;
};

/// Runs every stage in memory without touching the output directory.
PipelineResult run_stages(const PipelineConfig& cfg, int jobs = 1);

/// run_stages plus outputs: report.json, flux.asc, footprints.asc,
/// segments.asc, segments.json and, when enabled, PNG renders. Outputs are
/// staged and moved into place only on success.
SolarReport run_pipeline(const PipelineConfig& cfg, int jobs = 1);

/// Calls `fn` with a fresh staging directory next to `dir`, then moves
/// every file it wrote into `dir`. On an exception the staging directory is
/// removed and `dir` is left as it was.
void write_outputs(const std::filesystem::path& dir,
                   const std::function<void(const std::filesystem::path& staging)>& fn);

/// Single-file variant: `fn` writes a temporary sibling that replaces
/// `path` on success and is deleted on failure.
void write_output_file(const std::filesystem::path& path,
                       const std::function<void(const std::filesystem::path& tmp)>& fn);

/// Distinct colors per label, black for 0.
RgbImage render_labels(const LabelGrid& labels);

}  // namespace sunroof
