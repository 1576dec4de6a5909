#pragma once
// Grid exports: CSV (one node per row, 17 significant digits) and JSON
// documents that read back bitwise.

#include <json.hpp>
#include <string>
#include <vector>

#include "frgrav/geomframe.hpp"

namespace frgrav {

using Json = nlohmann::json;

enum class GridFormat { Csv, Json };
GridFormat parse_grid_format(const std::string& s);

std::string scheme_name(Scheme s);
Scheme parse_scheme(const std::string& s);

inline const std::vector<std::string> kMetricColumns = {"g1", "g2", "h3", "h4", "w1", "w2", "n1", "n2"};
inline const std::vector<std::string> kDefaultAxisNames = {"x1", "x2", "v"};

std::string field_csv(const SampledField& f, const std::vector<std::string>& axis_names,
                      const std::string& value_name = "value");
std::string metric_csv(const DMetric& g, const std::vector<std::string>& axis_names = kDefaultAxisNames);

Json field_to_json(const SampledField& f, const std::vector<std::string>& axis_names = kDefaultAxisNames);
SampledField field_from_json(const Json& j);

// Coefficients, order, scheme, singular nodes and aux fields.
Json metric_to_json(const DMetric& g, const std::vector<std::string>& axis_names = kDefaultAxisNames);
DMetric metric_from_json(const Json& j);

Json source_to_json(const SourceSpec& s, const std::vector<std::string>& axis_names = kDefaultAxisNames);
SourceSpec source_from_json(const Json& j);

void export_grid(const SampledField& f, const std::string& path, GridFormat fmt,
                 const std::vector<std::string>& axis_names = kDefaultAxisNames);
void export_grid(const DMetric& g, const std::string& path, GridFormat fmt,
                 const std::vector<std::string>& axis_names = kDefaultAxisNames);

// Throw IoError naming the path.
void write_text(const std::string& path, const std::string& text);
Json read_json(const std::string& path);

}  // namespace frgrav
