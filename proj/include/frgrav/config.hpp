#pragma once
// Run configuration: JSON with top-level keys alpha, grid, family, generators,
// source, signs, tolerances, output. Unknown keys are rejected at every level.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "frgrav/expr.hpp"
#include "frgrav/io.hpp"

namespace frgrav {

inline constexpr const char* kFamilyKinds[] = {"A", "B", "C", "D", "schwarzschild", "rotoid", "solrot", "oscillator"};

struct AxisSpec {
    double lo = 0.0, hi = 1.0;
    std::size_t n = 17;
    std::optional<double> terminal;  // default lo
    std::string spacing = "uniform";  // x1 of black-hole kinds may use "xi"
};

// A generator entry: an expression (numbers become constants) or a keyword.
struct Generator {
    std::optional<Expr> expr;
    std::string word;
    double number() const;  // value of a constant expression; ConfigError otherwise
};

struct Tolerances {
    double residual = 1e-6;              // max over eq1..eq4
    std::optional<double> lc;            // when set, LC violations also gate the exit code
    std::size_t boundary_layers = kDefaultBoundaryLayers;
    double psi = 1e-8;
};

struct OutputSpec {
    std::string dir = "out";
    GridFormat format = GridFormat::Csv;
};

struct RunConfig {
    double alpha = 1.0;
    std::string family;
    std::map<std::string, AxisSpec> grid;  // x1, x2, v
    std::map<std::string, Generator> generators;
    std::optional<Expr> upsilon2, upsilon4;
    std::map<std::string, Json> signs;
    Tolerances tolerances;
    OutputSpec output;
    Json echo;  // the document as read

    bool black_hole() const;
    const Generator* generator(const std::string& key) const;
};

// Validates keys, types, family requirements and expression syntax.
RunConfig parse_config(const Json& doc);
RunConfig parse_config_file(const std::string& path);

}  // namespace frgrav
