#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "trendsense/didmulti.hpp"
#include "trendsense/panel.hpp"
#include "trendsense/sensitivity.hpp"
#include "trendsense/simulation.hpp"

namespace trendsense {

/* JSON/CSV serialization of the public record types. JSON uses ordered maps
 * so key order (and therefore output bytes) is stable across runs; every
 * top-level document carries schema_version "v1". Non-finite numbers become
 * JSON null / empty CSV cells. */

using json = nlohmann::ordered_json;

constexpr const char* kSchemaVersion = "v1";

std::string format_double(double v);  // %.10g, "" for non-finite (CSV cells)

json to_json(const LearnerSpec& spec);
LearnerSpec learner_spec_from_json(const json& j);
json to_json(const Scenario& sc);
json to_json(const AttEstimate& est, bool include_vectors = false);
json to_json(const SensitivityReport& rep);
json to_json(const DgpConfig& cfg);
json to_json(const OracleScenario& oracle);
json to_json(const Diagnostics& diag);

json gt_batch_json(const GtBatch& batch, double level);
std::string gt_batch_csv(const GtBatch& batch, double level);

std::string contour_csv(const ContourGrid& grid);
json contour_json(const ContourGrid& grid);
// level-set rendering via marching squares; decorative output
std::string contour_svg(const ContourGrid& grid, int n_levels = 8);

std::string series_csv(const Series& s, const std::string& xname, const std::string& yname);

json sim_tables_json(const SimTables& t);
// one row per run; point estimates vs confidence limits
std::string sim_point_csv(const std::vector<SimTables>& runs);
std::string sim_limit_csv(const std::vector<SimTables>& runs);

// FNV-1a of the serialized config; stable run identifier
std::string run_id(const json& config);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace trendsense
