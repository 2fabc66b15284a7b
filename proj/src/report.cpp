#include "sunroof/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sunroof/grid_io.hpp"

namespace sunroof {

using nlohmann::json;

double SolarReport::total_energy() const {
  double sum = 0.0;
  for (const auto& b : buildings) sum += b.total_energy;
  return sum;
}

void SolarReport::validate() const {
  geometry.validate();
  panel.validate();
  for (std::size_t i = 1; i < buildings.size(); ++i) {
    if (buildings[i].building_id <= buildings[i - 1].building_id) throw Error("report buildings out of order");
  }
  for (const auto& b : buildings) {
    const double sum = sunroof::total_energy(b.panels);
    if (std::abs(sum - b.total_energy) > 1e-9 * std::max(1.0, std::abs(sum))) {
      throw Error("building " + std::to_string(b.building_id) + " total does not match its panels");
    }
    for (const auto& s : b.subarrays) {
      if (s.annual_energy > b.total_energy * (1.0 + 1e-12) + 1e-12) {
        throw Error("building " + std::to_string(b.building_id) + " sub-array exceeds the full tiling");
      }
    }
    for (const std::size_t c : b.footprint_cells) {
      if (c >= geometry.cell_count()) throw Error("footprint cell outside the report grid");
    }
  }
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw ParseError("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

// Ascending cells as [start, length] runs.
json runs_json(const std::vector<std::size_t>& cells) {
  json out = json::array();
  std::size_t i = 0;
  while (i < cells.size()) {
    std::size_t j = i + 1;
    while (j < cells.size() && cells[j] == cells[j - 1] + 1) ++j;
    out.push_back(json::array({cells[i], j - i}));
    i = j;
  }
  return out;
}

std::vector<std::size_t> runs_from(const json& j) {
  std::vector<std::size_t> out;
  for (const auto& r : j) {
    const auto start = r.at(0).get<std::size_t>(), len = r.at(1).get<std::size_t>();
    for (std::size_t k = 0; k < len; ++k) out.push_back(start + k);
  }
  return out;
}

}  // namespace

json report_to_json(const SolarReport& r) {
  json j;
  j["schema_version"] = r.schema_version;
  j["site"] = {{"latitude", r.latitude},
               {"longitude", r.longitude},
               {"grid",
                {{"width", r.geometry.width},
                 {"height", r.geometry.height},
                 {"cell_size", r.geometry.cell_size},
                 {"x_ll", r.geometry.x_ll},
                 {"y_ll", r.geometry.y_ll}}}};
  j["panel"] = {{"width", r.panel.width},
                {"height", r.panel.height},
                {"rated_power", r.panel.rated_power},
                {"spacing", r.panel.spacing},
                {"system_efficiency", r.panel.system_efficiency}};
  j["seeds"] = r.seeds;
  j["total_energy"] = r.total_energy();
  j["warnings"] = r.warnings;
  json buildings = json::array();
  for (const auto& b : r.buildings) {
    json jb;
    jb["building_id"] = b.building_id;
    jb["total_energy"] = b.total_energy;
    jb["panel_count"] = b.panels.size();
    jb["footprint"] = runs_json(b.footprint_cells);
    json segs = json::array();
    for (const auto& s : b.segments) {
      segs.push_back({{"segment_id", s.segment_id},
                      {"normal", vec_json(s.plane.normal)},
                      {"offset", s.plane.offset},
                      {"pitch_deg", s.plane.pitch_deg()},
                      {"azimuth_deg", s.plane.azimuth_deg()},
                      {"area", s.area},
                      {"cell_count", s.cell_count},
                      {"panel_count", s.panel_count},
                      {"annual_energy", s.annual_energy}});
    }
    jb["segments"] = segs;
    json panels = json::array();
    for (const auto& p : b.panels) {
      panels.push_back({{"id", p.id},
                        {"segment_id", p.segment_id},
                        {"center", vec_json(p.center)},
                        {"eaves", vec_json(p.eaves)},
                        {"upslope", vec_json(p.upslope)},
                        {"annual_energy", p.annual_energy},
                        {"cells", runs_json(p.cells)}});
    }
    jb["panels"] = panels;
    json subs = json::object();
    for (const auto& s : b.subarrays) {
      std::ostringstream key;
      key << s.target_kw;
      subs[key.str()] = {{"target_kw", s.target_kw},
                         {"annual_energy", s.annual_energy},
                         {"panel_count", s.panel_ids.size()},
                         {"panel_ids", s.panel_ids}};
    }
    jb["subarrays"] = subs;
    buildings.push_back(std::move(jb));
  }
  j["buildings"] = buildings;
  return j;
}

SolarReport report_from_json(const json& j) {
  SolarReport r;
  r.schema_version = j.at("schema_version").get<int>();
  if (r.schema_version != kReportSchemaVersion) {
    throw ParseError("unsupported report schema version " + std::to_string(r.schema_version));
  }
  const json& site = j.at("site");
  r.latitude = site.at("latitude").get<double>();
  r.longitude = site.at("longitude").get<double>();
  const json& g = site.at("grid");
  r.geometry.width = g.at("width").get<int>();
  r.geometry.height = g.at("height").get<int>();
  r.geometry.cell_size = g.at("cell_size").get<double>();
  r.geometry.x_ll = g.at("x_ll").get<double>();
  r.geometry.y_ll = g.at("y_ll").get<double>();
  const json& p = j.at("panel");
  r.panel.width = p.at("width").get<double>();
  r.panel.height = p.at("height").get<double>();
  r.panel.rated_power = p.at("rated_power").get<double>();
  r.panel.spacing = p.at("spacing").get<double>();
  r.panel.system_efficiency = p.at("system_efficiency").get<double>();
  r.seeds = j.value("seeds", std::map<std::string, std::uint64_t>{});
  r.warnings = j.value("warnings", std::vector<std::string>{});
  for (const auto& jb : j.at("buildings")) {
    BuildingReport b;
    b.building_id = jb.at("building_id").get<std::int32_t>();
    b.total_energy = jb.at("total_energy").get<double>();
    b.footprint_cells = runs_from(jb.at("footprint"));
    for (const auto& s : jb.at("segments")) {
      SegmentReport sr;
      sr.segment_id = s.at("segment_id").get<std::int32_t>();
      sr.plane = Plane{vec_from(s.at("normal")), s.at("offset").get<double>()};
      sr.area = s.at("area").get<double>();
      sr.cell_count = s.at("cell_count").get<std::int32_t>();
      sr.panel_count = s.at("panel_count").get<std::int32_t>();
      sr.annual_energy = s.at("annual_energy").get<double>();
      b.segments.push_back(sr);
    }
    for (const auto& jp : jb.at("panels")) {
      PanelPlacement pp;
      pp.id = jp.at("id").get<std::int32_t>();
      pp.segment_id = jp.at("segment_id").get<std::int32_t>();
      pp.center = vec_from(jp.at("center"));
      pp.eaves = vec_from(jp.at("eaves"));
      pp.upslope = vec_from(jp.at("upslope"));
      pp.annual_energy = jp.at("annual_energy").get<double>();
      pp.cells = runs_from(jp.at("cells"));
      b.panels.push_back(std::move(pp));
    }
    for (const auto& [key, s] : jb.at("subarrays").items()) {
      SubarrayResult sr;
      sr.target_kw = s.at("target_kw").get<double>();
      sr.annual_energy = s.at("annual_energy").get<double>();
      sr.panel_ids = s.at("panel_ids").get<std::vector<std::int32_t>>();
      b.subarrays.push_back(std::move(sr));
    }
    std::sort(b.subarrays.begin(), b.subarrays.end(),
              [](const auto& a, const auto& c) { return a.target_kw < c.target_kw; });
    r.buildings.push_back(std::move(b));
  }
  r.validate();
  return r;
}

void write_report(const SolarReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write report '" + path.string() + "'");
  out << report_to_json(report).dump(2) << '\n';
  if (!out) throw Error("failed writing report '" + path.string() + "'");
}

SolarReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open report '" + path.string() + "'");
  try {
    return report_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<std::pair<std::size_t, std::size_t>> match_buildings(const SolarReport& pred, const SolarReport& ref,
                                                                 double min_iou) {
  if (!(pred.geometry == ref.geometry)) throw ContractError("reports cover different grids");
  struct Cand {
    double iou;
    std::size_t r, p;
  };
  std::vector<Cand> cands;
  for (std::size_t r = 0; r < ref.buildings.size(); ++r) {
    const auto& a = ref.buildings[r].footprint_cells;
    for (std::size_t p = 0; p < pred.buildings.size(); ++p) {
      const auto& b = pred.buildings[p].footprint_cells;
      std::size_t inter = 0;
      for (std::size_t i = 0, k = 0; i < a.size() && k < b.size();) {
        if (a[i] < b[k]) {
          ++i;
        } else if (b[k] < a[i]) {
          ++k;
        } else {
          ++inter;
          ++i;
          ++k;
        }
      }
      const std::size_t uni = a.size() + b.size() - inter;
      const double iou = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
      if (iou >= min_iou && inter > 0) cands.push_back({iou, r, p});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
    if (x.iou != y.iou) return x.iou > y.iou;
    if (x.r != y.r) return x.r < y.r;
    return x.p < y.p;
  });
  std::vector<char> used_r(ref.buildings.size(), 0), used_p(pred.buildings.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const Cand& c : cands) {
    if (used_r[c.r] || used_p[c.p]) continue;
    used_r[c.r] = used_p[c.p] = 1;
    out.emplace_back(c.r, c.p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

template <typename EnergyFn>
MapeResult score(const SolarReport& pred, const SolarReport& ref, double min_iou, EnergyFn energy) {
  const auto pairs = match_buildings(pred, ref, min_iou);
  std::vector<long> partner(ref.buildings.size(), -1);
  for (const auto& [r, p] : pairs) partner[r] = static_cast<long>(p);
  MapeResult res;
  std::vector<double> errs;
  for (std::size_t r = 0; r < ref.buildings.size(); ++r) {
    BuildingError be;
    be.ref_id = ref.buildings[r].building_id;
    be.ref_energy = energy(ref, ref.buildings[r]);
    if (partner[r] >= 0) {
      const auto& pb = pred.buildings[static_cast<std::size_t>(partner[r])];
      be.pred_id = pb.building_id;
      be.pred_energy = energy(pred, pb);
      ++res.matched;
    } else {
      ++res.unmatched;
    }
    if (be.ref_energy == 0.0) {
      be.excluded = true;
      ++res.excluded;
    } else {
      be.error_pct = be.pred_id < 0 ? 100.0 : std::abs(be.pred_energy - be.ref_energy) / be.ref_energy * 100.0;
      errs.push_back(be.error_pct);
    }
    res.buildings.push_back(be);
  }
  res.count = static_cast<int>(errs.size());
  if (!errs.empty()) {
    res.mean = std::accumulate(errs.begin(), errs.end(), 0.0) / static_cast<double>(errs.size());
    if (errs.size() > 1) {
      double ss = 0.0;
      for (const double e : errs) ss += (e - res.mean) * (e - res.mean);
      res.stddev = std::sqrt(ss / static_cast<double>(errs.size() - 1));
    }
  }
  return res;
}

json mape_json(const MapeResult& m) {
  return {{"mean", m.mean}, {"std", m.stddev}, {"count", m.count},
          {"matched", m.matched}, {"unmatched", m.unmatched}, {"excluded_zero_reference", m.excluded}};
}

std::string kw_key(double kw) {
  std::ostringstream s;
  s << kw;
  return s.str();
}

}  // namespace

MapeResult mape(const SolarReport& pred, const SolarReport& ref, double min_iou) {
  return score(pred, ref, min_iou, [](const SolarReport&, const BuildingReport& b) { return b.total_energy; });
}

MapeResult mape_at_kw(const SolarReport& pred, const SolarReport& ref, double target_kw, double min_iou) {
  return score(pred, ref, min_iou, [target_kw](const SolarReport& rep, const BuildingReport& b) {
    return total_energy(select_subarray(b.panels, target_kw, rep.panel.rated_power));
  });
}

json evaluate(const SolarReport& pred, const SolarReport& ref, const std::vector<double>& targets_kw,
              double min_iou) {
  const MapeResult full = mape(pred, ref, min_iou);
  if (full.matched == 0) throw Error("no buildings matched between the reports");
  json out;
  out["min_iou"] = min_iou;
  out["mape"] = mape_json(full);
  json at_kw = json::object();
  std::vector<MapeResult> per_target;
  for (const double kw : targets_kw) {
    per_target.push_back(mape_at_kw(pred, ref, kw, min_iou));
    at_kw[kw_key(kw)] = mape_json(per_target.back());
  }
  out["mape_at_kw"] = at_kw;
  json rows = json::array();
  for (std::size_t i = 0; i < full.buildings.size(); ++i) {
    const auto& b = full.buildings[i];
    json row = {{"ref_id", b.ref_id},
                {"pred_id", b.pred_id < 0 ? json(nullptr) : json(b.pred_id)},
                {"ref_energy", b.ref_energy},
                {"pred_energy", b.pred_energy},
                {"error_pct", b.excluded ? json(nullptr) : json(b.error_pct)}};
    json kws = json::object();
    for (std::size_t t = 0; t < targets_kw.size(); ++t) {
      const auto& bt = per_target[t].buildings[i];
      kws[kw_key(targets_kw[t])] = {{"ref_energy", bt.ref_energy},
                                    {"pred_energy", bt.pred_energy},
                                    {"error_pct", bt.excluded ? json(nullptr) : json(bt.error_pct)}};
    }
    row["at_kw"] = kws;
    rows.push_back(std::move(row));
  }
  out["buildings"] = rows;
  return out;
}

}  // namespace sunroof
