#pragma once
// JSON conversions for configs and results. Non-finite numbers are written as
// null and read back as NaN.

#include <filesystem>

#include "json.hpp"

#include "durdecomp/ddcsim.hpp"
#include "durdecomp/effects.hpp"
#include "durdecomp/nonparam.hpp"
#include "durdecomp/phmodel.hpp"
#include "durdecomp/spells.hpp"

namespace durdecomp {

using Json = nlohmann::json;

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

/// Keys absent from `j` keep their defaults; unknown keys raise ConfigError.
DdcConfig ddc_config_from_json(const Json& j, DdcConfig base = {});
Json to_json(const DdcConfig& c);

ColumnSchema column_schema_from_json(const Json& j);
PiecewiseSpec piecewise_spec_from_json(const Json& j);
Json to_json(const PiecewiseSpec& s);

Json to_json(const SurvivalCurve& c);
Json to_json(const GcompEstimates& g);
Json to_json(const FitResult& f);
FitResult fit_result_from_json(const Json& j);
Json to_json(const DecompositionResult& r);
DecompositionResult decomposition_from_json(const Json& j);
Json to_json(const SubstrataEffects& e);
Json to_json(const ReservationTable& t);

}  // namespace durdecomp
