#pragma once

// Solar report, its JSON form, and report-to-report error metrics.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>
#include "sunroof/panel.hpp"
#include "sunroof/raster.hpp"
#include "sunroof/roof_segment.hpp"

namespace sunroof {

inline constexpr int kReportSchemaVersion = 1;

struct SubarrayResult {
  double target_kw = 0.0;
  double annual_energy = 0.0;
  std::vector<std::int32_t> panel_ids;  ///< best first
};

struct SegmentReport {
  std::int32_t segment_id = 0;
  Plane plane;
  double area = 0.0;  ///< sloped m^2
  std::int32_t cell_count = 0;
  std::int32_t panel_count = 0;
  double annual_energy = 0.0;
};

struct BuildingReport {
  std::int32_t building_id = 0;
  std::vector<std::size_t> footprint_cells;  ///< ascending
  double total_energy = 0.0;  ///< full tiling, kWh/yr
  std::vector<SegmentReport> segments;
  std::vector<PanelPlacement> panels;
  std::vector<SubarrayResult> subarrays;  ///< ascending target
};

struct SolarReport {
  int schema_version = kReportSchemaVersion;
  GridGeometry geometry;
  double latitude = 0.0, longitude = 0.0;
  PanelSpec panel;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<BuildingReport> buildings;  ///< ascending id
  std::vector<std::string> warnings;

  double total_energy() const;
  /// Totals match panel sums and sub-arrays never exceed their totals.
  void validate() const;
};

nlohmann::json report_to_json(const SolarReport& report);
SolarReport report_from_json(const nlohmann::json& j);
void write_report(const SolarReport& report, const std::filesystem::path& path);
SolarReport read_report(const std::filesystem::path& path);

/// Greedy one-to-one pairing by descending footprint IoU, pairs below
/// min_iou dropped. Returns (ref index, pred index); both reports must share
/// a grid geometry.
std::vector<std::pair<std::size_t, std::size_t>> match_buildings(const SolarReport& pred, const SolarReport& ref,
                                                                 double min_iou = 0.3);

struct BuildingError {
  std::int32_t ref_id = 0;
  std::int32_t pred_id = -1;  ///< -1 when unmatched
  double ref_energy = 0.0;
  double pred_energy = 0.0;
  double error_pct = 0.0;
  bool excluded = false;  ///< reference energy is zero
};

struct MapeResult {
  double mean = 0.0;
  double stddev = 0.0;  ///< sample standard deviation, 0 for a single building
  int count = 0;        ///< buildings scored
  int matched = 0;
  int unmatched = 0;    ///< reference buildings without a partner, scored 100% unless excluded
  int excluded = 0;     ///< reference energy zero
  std::vector<BuildingError> buildings;
};

/// Full-tiling energy error over reference buildings, in percent.
MapeResult mape(const SolarReport& pred, const SolarReport& ref, double min_iou = 0.3);
/// Same with each report's own best sub-array for the target capacity.
MapeResult mape_at_kw(const SolarReport& pred, const SolarReport& ref, double target_kw, double min_iou = 0.3);

/// MAPE and MAPE@kW per target plus per-building detail. Throws when no
/// buildings match.
nlohmann::json evaluate(const SolarReport& pred, const SolarReport& ref, const std::vector<double>& targets_kw,
                        double min_iou = 0.3);

}  // namespace sunroof
