#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "frgrav/errors.hpp"
#include "frgrav/pipeline.hpp"

using namespace frgrav;

namespace {

void print_run(const RunResult& r) {
    const Json& j = r.report;
    if (j.contains("error")) std::fprintf(stderr, "frgrav: %s\n", j["error"].get<std::string>().c_str());
    if (j.contains("max_residual") && j["max_residual"].is_number())
        std::printf("%s: max residual %.6g (tolerance %.6g)\n", j["status"].get<std::string>().c_str(),
                    j["max_residual"].get<double>(), j["tolerance"]["residual"].get<double>());
    else
        std::printf("%s\n", j["status"].get<std::string>().c_str());
}

int cmd_run(const std::string& path, std::optional<double> tol, std::optional<std::string> out,
            const std::optional<std::string>& kind) {
    RunConfig cfg;
    try {
        Json doc = read_json(path);
        if (kind) {
            if (doc.contains("family") && doc["family"] != *kind)
                throw ConfigError(path + ": family \"" + doc["family"].get<std::string>() + "\" does not match --kind " +
                                  *kind);
            if (*kind != "schwarzschild" && *kind != "rotoid" && *kind != "solrot" && *kind != "oscillator")
                throw ConfigError("--kind must be schwarzschild, rotoid, solrot or oscillator");
            doc["family"] = *kind;
        }
        cfg = parse_config(doc);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "frgrav: %s\n", e.what());
        return exit_code_for(e);
    }
    RunOverrides ovr;
    ovr.tolerance = tol;
    ovr.out_dir = std::move(out);
    const RunResult r = run(cfg, ovr);
    print_run(r);
    return r.exit_code;
}

int cmd_deriv(double alpha, const std::string& text, double at, double terminal, std::size_t nodes) {
    try {
        const Expr e = Expr::parse(text);
        if (e.variables().size() > 1) throw ConfigError("deriv takes an expression in a single variable");
        if (!(at > terminal)) throw ConfigError("--at must exceed --terminal");
        if (nodes < 2) throw ConfigError("--nodes must be at least 2");
        const FracOrder ord(alpha, {terminal});
        const Grid1D g = Grid1D::uniform(terminal, at, nodes + 1, terminal);
        const SampledField f = SampledField::from_function({g}, [&](std::span<const double> x) {
            return e.eval({x[0], x[0], x[0]});
        });
        const double d = caputo_left(f, ord, at);
        const Json out = {{"alpha", alpha}, {"expr", e.to_string()}, {"at", at},
                          {"terminal", terminal}, {"nodes", nodes}, {"caputo_derivative", d}};
        std::printf("%s\n", out.dump().c_str());
        return kExitOk;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "frgrav: %s\n", e.what());
        return exit_code_for(e);
    }
}

int cmd_ml(double alpha, double z) {
    try {
        const Json out = {{"alpha", alpha}, {"z", z}, {"mittag_leffler", mittag_leffler(alpha, z)}};
        std::printf("%s\n", out.dump().c_str());
        return kExitOk;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "frgrav: %s\n", e.what());
        return exit_code_for(e);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fractional gravity solution engine"};
    app.require_subcommand(1);

    std::string config_path, expr_text, metric_path, source_path, kind;
    std::optional<double> tolerance;
    std::optional<std::string> out_dir, report_path;
    double alpha = 1.0, at = 1.0, terminal = 0.0, z = 0.0, verify_tol = 1e-6;
    std::size_t nodes = 2048;

    auto* run = app.add_subcommand("run", "construct, verify and export a configured metric");
    run->add_option("--config", config_path, "JSON run config")->required();
    run->add_option("--tolerance", tolerance, "override tolerances.residual");
    run->add_option("--out", out_dir, "override output.dir");

    auto* deriv = app.add_subcommand("deriv", "left Caputo derivative of an expression at a point");
    deriv->add_option("--alpha", alpha)->required();
    deriv->add_option("--expr", expr_text)->required();
    deriv->add_option("--at", at)->required();
    deriv->add_option("--terminal", terminal)->required();
    deriv->add_option("--nodes", nodes, "grid intervals");

    auto* ml = app.add_subcommand("ml", "Mittag-Leffler function E_alpha(z)");
    ml->add_option("--alpha", alpha)->required();
    ml->add_option("--z", z)->required();

    auto* verify = app.add_subcommand("verify", "residuals of a stored metric against a stored source");
    verify->add_option("--metric", metric_path, "metric JSON document")->required();
    verify->add_option("--source", source_path, "source JSON document")->required();
    verify->add_option("--tolerance", verify_tol, "max residual");
    verify->add_option("--report", report_path, "write the report here");

    auto* bh = app.add_subcommand("blackhole", "run a black-hole kind");
    bh->add_option("--kind", kind)->required()->check(CLI::IsMember({"schwarzschild", "rotoid", "solrot", "oscillator"}));
    bh->add_option("--config", config_path)->required();
    bh->add_option("--tolerance", tolerance);
    bh->add_option("--out", out_dir);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    if (*run) return cmd_run(config_path, tolerance, out_dir, std::nullopt);
    if (*bh) return cmd_run(config_path, tolerance, out_dir, kind);
    if (*deriv) return cmd_deriv(alpha, expr_text, at, terminal, nodes);
    if (*ml) return cmd_ml(alpha, z);
    const RunResult r = verify_files(metric_path, source_path, verify_tol, report_path);
    print_run(r);
    return r.exit_code;
}
