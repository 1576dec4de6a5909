#pragma once
// construct -> verify -> export, and the JSON run report.

#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "frgrav/blackholes.hpp"
#include "frgrav/config.hpp"
#include "frgrav/solvers.hpp"

namespace frgrav {

inline constexpr const char* kReportSchemaVersion = "1.0";

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitSolver = 3, kExitResidual = 4, kExitIo = 5 };

// Exit code for an exception escaping a run.
int exit_code_for(const std::exception& e);

struct RunOverrides {
    std::optional<double> tolerance;
    std::optional<std::string> out_dir;
    bool write_outputs = true;
};

struct BuiltMetric {
    DMetric metric;
    SourceSpec source;
    std::vector<std::string> axis_names;
    std::optional<Family> family;         // A-D
    std::vector<HorizonPoint> horizon;    // rotoid-based kinds
    Json extras = Json::object();
};

struct RunResult {
    Json report;
    int exit_code = kExitOk;
    std::optional<BuiltMetric> built;
};

// Builds the metric and source described by a validated config.
BuiltMetric build_metric(const RunConfig& cfg);

// Never throws for module errors: they are reported with their exit code.
// Outputs go to <dir>/metric.csv|json, residuals.json, source.json,
// horizon.csv (rotoid-based kinds) and report.json.
RunResult run(const RunConfig& cfg, const RunOverrides& ovr = {});

// Residuals of a stored metric against a stored source.
RunResult verify(const DMetric& g, const SourceSpec& src, double tolerance, const ResidualOptions& ropt = {});
RunResult verify_files(const std::string& metric_path, const std::string& source_path, double tolerance,
                       const std::optional<std::string>& report_path = std::nullopt);

Json residual_json(const ResidualReport& r);
// Empty when the report carries every required key with the right type.
std::vector<std::string> report_schema_errors(const Json& report);

std::string horizon_csv(const std::vector<HorizonPoint>& h);

}  // namespace frgrav
