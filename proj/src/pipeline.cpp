#include "frgrav/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "frgrav/errors.hpp"
#include "frgrav/solvers.hpp"

namespace frgrav {

namespace {

using Clock = std::chrono::steady_clock;

Grid1D axis_grid(const AxisSpec& a) { return Grid1D::uniform(a.lo, a.hi, a.n, a.terminal.value_or(a.lo)); }

SampledField sample3(const std::vector<Grid1D>& axes, const Expr& e) {
    return SampledField::from_function(axes, [&](std::span<const double> x) { return e.eval({x[0], x[1], x[2]}); });
}

SampledField sample2(const std::vector<Grid1D>& chart, const Expr& e) {
    return SampledField::from_function(chart, [&](std::span<const double> x) { return e.eval({x[0], x[1], 0.0}); });
}

// Fields over (x1, v).
SampledField sample_xv(const Grid1D& x, const Grid1D& v, const Expr& e) {
    return SampledField::from_function({x, v}, [&](std::span<const double> a) { return e.eval({a[0], 0.0, a[1]}); });
}

SampledField sample_v(const Grid1D& v, const Expr& e) {
    return SampledField::from_function({v}, [&](std::span<const double> a) { return e.eval({0.0, 0.0, a[0]}); });
}

double scalar(const RunConfig& c, const std::string& key, double fallback) {
    const Generator* g = c.generator(key);
    return g ? g->number() : fallback;
}

std::optional<SampledField> full(const RunConfig& c, const std::string& key, const std::vector<Grid1D>& axes) {
    const Generator* g = c.generator(key);
    if (!g) return std::nullopt;
    return sample3(axes, *g->expr);
}

std::optional<SampledField> chart(const RunConfig& c, const std::string& key, const std::vector<Grid1D>& axes) {
    const Generator* g = c.generator(key);
    if (!g) return std::nullopt;
    return sample2({axes[0], axes[1]}, *g->expr);
}

SourceSpec make_source(const RunConfig& c, const std::vector<Grid1D>& axes) {
    SourceSpec s = SourceSpec::zero(axes);
    if (c.upsilon2) s.upsilon2 = sample3(axes, *c.upsilon2);
    if (c.upsilon4) s.upsilon4 = sample2({axes[0], axes[1]}, *c.upsilon4);
    return s;
}

double sign_of(const RunConfig& c, const std::string& key, double fallback) {
    const auto it = c.signs.find(key);
    return it == c.signs.end() ? fallback : it->second.get<double>();
}

BuiltMetric build_family(const RunConfig& c) {
    BuiltMetric b;
    const std::vector<Grid1D> axes = {axis_grid(c.grid.at("x1")), axis_grid(c.grid.at("x2")), axis_grid(c.grid.at("v"))};
    const FracOrder ord(c.alpha, {axes[0].terminal(), axes[1].terminal(), axes[2].terminal()});
    GeneratingData gen;
    gen.phi = full(c, "phi", axes);
    gen.f = full(c, "f", axes);
    gen.h3 = full(c, "h3", axes);
    gen.w1 = full(c, "w1", axes);
    gen.w2 = full(c, "w2", axes);
    gen.n1_1 = chart(c, "n1_1", axes);
    gen.n1_2 = chart(c, "n1_2", axes);
    gen.n2_1 = chart(c, "n2_1", axes);
    gen.n2_2 = chart(c, "n2_2", axes);
    gen.h4_0 = chart(c, "h4_0", axes);
    gen.h4_slope = chart(c, "h4_slope", axes);
    gen.h3_0 = chart(c, "h3_0", axes);
    gen.varsigma40 = chart(c, "varsigma40", axes);
    gen.psi_boundary = chart(c, "psi_boundary", axes);
    gen.h0 = scalar(c, "h0", gen.h0);

    FamilyOptions opt;
    opt.sign = sign_of(c, "sign", opt.sign);
    opt.w_sign = sign_of(c, "w_sign", opt.w_sign);
    opt.h3_branch = sign_of(c, "h3_branch", opt.h3_branch);
    if (c.signs.count("variant") && c.signs.at("variant") == "printed") opt.variant = FormulaVariant::Printed;
    opt.psi.tolerance = c.tolerances.psi;

    b.family = parse_family(c.family);
    b.source = make_source(c, axes);
    b.metric = frgrav::build_family(*b.family, axes, ord, gen, b.source, opt);
    b.axis_names = kDefaultAxisNames;
    return b;
}

XiMeasure measure_of(const RunConfig& c) {
    const Generator* g = c.generator("measure");
    if (!g || g->word == "literal") return XiMeasure::Literal;
    if (g->word == "proper") return XiMeasure::Proper;
    throw ConfigError("generators.measure must be \"literal\" or \"proper\"");
}

RotoidH3 h3_form_of(const RunConfig& c) {
    const Generator* g = c.generator("h3");
    if (!g || g->word == "exact") return RotoidH3::Exact;
    if (g->word == "linearized") return RotoidH3::Linearized;
    throw ConfigError("generators.h3 must be \"exact\" or \"linearized\"");
}

NData n_data(const RunConfig& c, const std::vector<Grid1D>& axes) {
    NData n;
    n.w1 = full(c, "w1", axes);
    n.w2 = full(c, "w2", axes);
    n.n1 = chart(c, "n1", axes);
    n.n2 = chart(c, "n2", axes);
    return n;
}

std::size_t count_of(const RunConfig& c, const std::string& key, std::size_t fallback) {
    const double x = scalar(c, key, static_cast<double>(fallback));
    if (!(x >= 0.0) || x != std::floor(x)) throw ConfigError("generators." + key + " must be a non-negative integer");
    return static_cast<std::size_t>(x);
}

double max_interior(const SampledField& f, double keep) {
    const std::size_t n = f.size();
    const auto skip = static_cast<std::size_t>(std::floor(static_cast<double>(n) * (1.0 - keep) / 2.0));
    double m = 0.0;
    for (std::size_t i = skip; i + skip < n; ++i) m = std::max(m, std::fabs(f[i]));
    return m;
}

BuiltMetric build_black_hole(const RunConfig& c) {
    BuiltMetric b;
    const double mu0 = scalar(c, "mu0", 1.0), eps = scalar(c, "eps", 0.0);
    PrimeOptions popt;
    popt.xi = measure_of(c);
    popt.excision_margin = scalar(c, "excision_margin", popt.excision_margin);
    const AxisSpec& ra = c.grid.at("x1");
    const Grid1D r = ra.spacing == "xi" ? radii_uniform_in_xi(mu0, eps, ra.lo, ra.hi, ra.n, popt.xi)
                                        : Grid1D::uniform(ra.lo, ra.hi, ra.n);
    const PrimeData p = prime_schwarzschild(mu0, eps, r, popt);
    const Grid1D theta = axis_grid(c.grid.at("x2")), phi = axis_grid(c.grid.at("v"));
    const std::vector<Grid1D> axes = {p.xi_grid(), theta, phi};
    const FracOrder ord(c.alpha, {axes[0].terminal(), theta.terminal(), phi.terminal()});
    b.axis_names = {"xi", "theta", "phi"};
    b.source = make_source(c, axes);
    b.extras["radii"] = p.r;
    const SampledField psi0({axes[0], axes[1]}, 0.0);

    if (c.family == "schwarzschild") {
        DeformationData d;
        d.eta4 = full(c, "eta4", axes);
        d.b = full(c, "b", axes);
        d.eta3 = full(c, "eta3", axes);
        d.psi = chart(c, "psi", axes).value_or(psi0);
        d.n = n_data(c, axes);
        d.h0 = scalar(c, "h0", d.h0);
        b.metric = fractional_deformation(p, theta, phi, d, ord);
        return b;
    }

    RotoidData rot;
    rot.omega0 = scalar(c, "omega0", rot.omega0);
    rot.phi0 = scalar(c, "phi0", rot.phi0);
    if (const Generator* q0 = c.generator("q0")) {
        const double v = q0->number();
        rot.q0 = [v](double) { return v; };
    }
    if (const Generator* m1 = c.generator("mu1")) {
        const Expr e = *m1->expr;
        rot.mu1 = [e, &p](double rr, double th, double ph) { return e.eval({p.xi_at(rr), th, ph}); };
    }
    RotoidOptions ropt;
    ropt.h3 = h3_form_of(c);
    ropt.psi = chart(c, "psi", axes).value_or(psi0);
    ropt.n = n_data(c, axes);
    ropt.n_tolerance = scalar(c, "n_tolerance", ropt.n_tolerance);
    b.metric = rotoid_metric(p, theta, phi, rot, ord, ropt);
    b.extras["n_conditions"] = rotoid_n_conditions(b.metric);

    const double th = scalar(c, "horizon_theta", M_PI / 2.0);
    b.horizon = horizon_curve(p, rot, th, phi.nodes(), 0.1 * mu0, 10.0 * mu0);

    if (const Generator* eg = c.generator("eta")) {
        SolitonOptions so;
        so.eps_sign = scalar(c, "soliton_sign", so.eps_sign);
        so.tolerance = scalar(c, "soliton_tolerance", so.tolerance);
        so.max_iterations = count_of(c, "soliton_iterations", so.max_iterations);
        const SampledField eta = solitonic_eta(sample_xv(axes[0], phi, *eg->expr), so);
        double res = 0.0;
        for (double x : solitonic_residual(eta, so.eps_sign).values()) res = std::max(res, std::fabs(x));
        b.extras["soliton_residual"] = res;
        b.metric = solitonic_rotoid(b.metric, eta, ropt.h3);
    }

    if (c.family == "oscillator") {
        const SampledField z1 = sample_v(phi, *c.generator("z1")->expr);
        const SampledField z2 = sample_v(phi, *c.generator("z2")->expr);
        const FracOrder vo(c.alpha, {phi.terminal()});
        SeriesOptions so;
        so.order = count_of(c, "order", so.order);
        so.growth_limit = count_of(c, "growth_limit", so.growth_limit);
        const SeriesSolution s = oscillator_series(z1, z2, vo, scalar(c, "c1", 0.0), scalar(c, "c2", 1.0), so);
        b.extras["series_term_norms"] = s.term_norms;
        b.extras["series_ratios"] = s.ratios;
        b.extras["series_last_term"] = s.last_term();
        b.extras["series_residual_interior80"] = max_interior(oscillator_residual(s, z1, z2, vo), 0.8);
        b.metric = oscillator_embedded_metric(b.metric, s, ropt.h3);
    }
    return b;
}

// Replaces non-finite numbers by null and records their paths.
Json sanitize(const Json& j, const std::string& path, Json& flags) {
    if (j.is_number_float()) {
        if (std::isfinite(j.get<double>())) return j;
        flags.push_back(path + ": non-finite");
        return nullptr;
    }
    if (j.is_object()) {
        Json out = Json::object();
        for (const auto& [k, v] : j.items()) out[k] = sanitize(v, path.empty() ? k : path + "." + k, flags);
        return out;
    }
    if (j.is_array()) {
        Json out = Json::array();
        for (std::size_t i = 0; i < j.size(); ++i) out.push_back(sanitize(j[i], path + "[" + std::to_string(i) + "]", flags));
        return out;
    }
    return j;
}

double max_value(const std::map<std::string, double>& m) {
    double out = 0.0;
    for (const auto& [k, v] : m) out = std::isfinite(v) ? std::max(out, v) : INFINITY;
    return out;
}

Json base_report(const std::string& kind, const Json& config) {
    Json r = Json::object();
    r["schema_version"] = kReportSchemaVersion;
    r["kind"] = kind;
    r["config"] = config;
    r["residuals"] = nullptr;
    r["lc"] = Json::object();
    r["extras"] = Json::object();
    r["outputs"] = Json::array();
    r["flags"] = Json::array();
    return r;
}

void finalize(Json& r, int code, const std::string& status, Clock::time_point t0) {
    r["exit_code"] = code;
    r["status"] = status;
    Json flags = r["flags"];
    Json clean = Json::object();
    for (const auto& [k, v] : r.items()) clean[k] = k == "flags" ? v : sanitize(v, k, flags);
    clean["flags"] = flags;
    clean["timing"] = {{"wall_seconds", std::chrono::duration<double>(Clock::now() - t0).count()}};
    r = std::move(clean);
}

// Fills residuals and lc, returns the exit code.
int evaluate(Json& r, const DMetric& g, const SourceSpec& src, std::optional<Family> fam, double tol,
             std::optional<double> lc_tol, const ResidualOptions& ropt) {
    const ResidualReport rep = reduced_residuals(g, src, ropt);
    r["residuals"] = residual_json(rep);
    const auto lc = fam ? select_levi_civita(g, *fam, ropt) : lc_conditions(g, ropt);
    r["lc"] = lc;
    const double lc_max = max_value(lc);
    const double rmax = rep.max_abs();
    r["tolerance"] = {{"residual", tol}, {"lc", lc_tol ? Json(*lc_tol) : Json(nullptr)}};
    r["max_residual"] = rmax;
    r["max_lc_violation"] = lc_max;
    const bool ok = std::isfinite(rmax) && rmax <= tol && (!lc_tol || lc_max <= *lc_tol);
    return ok ? kExitOk : kExitResidual;
}

std::string status_for(int code) {
    switch (code) {
        case kExitOk: return "ok";
        case kExitResidual: return "residual_exceeds_tolerance";
        case kExitConfig: return "config_error";
        case kExitSolver: return "solver_not_converged";
        default: return "io_error";
    }
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const IoError*>(&e)) return kExitIo;
    if (dynamic_cast<const SolverError*>(&e)) return kExitSolver;
    if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return kExitIo;
    return kExitConfig;
}

BuiltMetric build_metric(const RunConfig& cfg) { return cfg.black_hole() ? build_black_hole(cfg) : build_family(cfg); }

Json residual_json(const ResidualReport& r) {
    auto stat = [](const EqStat& s) { return Json{{"max_abs", s.max_abs}, {"mean_abs", s.mean_abs}}; };
    return {{"eq1", stat(r.eq1)},
            {"eq2", stat(r.eq2)},
            {"eq3", stat(r.eq3)},
            {"eq4", stat(r.eq4)},
            {"max_abs", r.max_abs()},
            {"evaluated_nodes", r.evaluated_nodes},
            {"singular_nodes", r.singular_nodes},
            {"shape", r.shape},
            {"boundary_included", r.boundary_included},
            {"source_frame", r.source_frame}};
}

std::string horizon_csv(const std::vector<HorizonPoint>& h) {
    std::ostringstream os;
    os << "phi,r_plus,r_plus_formula,relative_difference\n";
    char buf[128];
    for (const auto& p : h) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", p.phi, p.r_plus, p.r_formula,
                      std::fabs(p.r_plus - p.r_formula) / p.r_formula);
        os << buf;
    }
    return os.str();
}

RunResult run(const RunConfig& cfg, const RunOverrides& ovr) {
    const auto t0 = Clock::now();
    RunResult out;
    Json& r = out.report;
    r = base_report("run", cfg.echo);
    r["family"] = cfg.family;
    const std::string dir = ovr.out_dir.value_or(cfg.output.dir);
    try {
        BuiltMetric b = build_metric(cfg);
        ResidualOptions ropt;
        ropt.boundary_layers = cfg.tolerances.boundary_layers;
        const double tol = ovr.tolerance.value_or(cfg.tolerances.residual);
        out.exit_code = evaluate(r, b.metric, b.source, b.family, tol, cfg.tolerances.lc, ropt);
        r["extras"] = b.extras;
        if (!b.horizon.empty()) {
            double worst = 0.0;
            for (const auto& h : b.horizon) worst = std::max(worst, std::fabs(h.r_plus - h.r_formula) / h.r_formula);
            r["extras"]["horizon_max_relative_difference"] = worst;
        }
        if (ovr.write_outputs) {
            std::filesystem::create_directories(dir);
            const std::string ext = cfg.output.format == GridFormat::Csv ? "csv" : "json";
            export_grid(b.metric, dir + "/metric." + ext, cfg.output.format, b.axis_names);
            write_text(dir + "/source.json", source_to_json(b.source, b.axis_names).dump() + "\n");
            write_text(dir + "/residuals.json", r["residuals"].dump(2) + "\n");
            r["outputs"] = {"metric." + ext, "source.json", "residuals.json"};
            if (!b.horizon.empty()) {
                write_text(dir + "/horizon.csv", horizon_csv(b.horizon));
                r["outputs"].push_back("horizon.csv");
            }
            r["outputs"].push_back("report.json");
        }
        out.built = std::move(b);
    } catch (const std::exception& e) {
        out.exit_code = exit_code_for(e);
        r["error"] = e.what();
    }
    finalize(r, out.exit_code, status_for(out.exit_code), t0);
    if (ovr.write_outputs && out.exit_code != kExitIo) {
        try {
            std::filesystem::create_directories(dir);
            write_text(dir + "/report.json", r.dump(2) + "\n");
        } catch (const std::exception& e) {
            out.exit_code = kExitIo;
            r["exit_code"] = kExitIo;
            r["status"] = status_for(kExitIo);
            r["error"] = e.what();
        }
    }
    return out;
}

RunResult verify(const DMetric& g, const SourceSpec& src, double tolerance, const ResidualOptions& ropt) {
    const auto t0 = Clock::now();
    RunResult out;
    out.report = base_report("verify", nullptr);
    try {
        out.exit_code = evaluate(out.report, g, src, std::nullopt, tolerance, std::nullopt, ropt);
    } catch (const std::exception& e) {
        out.exit_code = exit_code_for(e);
        out.report["error"] = e.what();
    }
    finalize(out.report, out.exit_code, status_for(out.exit_code), t0);
    return out;
}

RunResult verify_files(const std::string& metric_path, const std::string& source_path, double tolerance,
                       const std::optional<std::string>& report_path) {
    RunResult out;
    try {
        const DMetric g = metric_from_json(read_json(metric_path));
        const SourceSpec src = source_from_json(read_json(source_path));
        out = verify(g, src, tolerance);
    } catch (const std::exception& e) {
        out.report = base_report("verify", nullptr);
        out.exit_code = exit_code_for(e);
        out.report["error"] = e.what();
        finalize(out.report, out.exit_code, status_for(out.exit_code), Clock::now());
    }
    out.report["metric_file"] = metric_path;
    out.report["source_file"] = source_path;
    if (report_path) {
        try {
            write_text(*report_path, out.report.dump(2) + "\n");
        } catch (const IoError& e) {
            out.exit_code = kExitIo;
            out.report["exit_code"] = kExitIo;
            out.report["status"] = status_for(kExitIo);
            out.report["error"] = e.what();
        }
    }
    return out;
}

std::vector<std::string> report_schema_errors(const Json& r) {
    std::vector<std::string> err;
    if (!r.is_object()) return {"report is not an object"};
    auto need = [&](const char* key, bool ok) {
        if (!r.contains(key)) err.push_back(std::string("missing ") + key);
        else if (!ok) err.push_back(std::string("wrong type for ") + key);
    };
    need("schema_version", r.contains("schema_version") && r["schema_version"] == kReportSchemaVersion);
    need("kind", r.contains("kind") && r["kind"].is_string());
    need("status", r.contains("status") && r["status"].is_string());
    need("exit_code", r.contains("exit_code") && r["exit_code"].is_number_integer());
    need("timing", r.contains("timing") && r["timing"].is_object() && r["timing"].contains("wall_seconds") &&
                       r["timing"]["wall_seconds"].is_number());
    need("config", r.contains("config") && (r["config"].is_object() || r["config"].is_null()));
    need("lc", r.contains("lc") && r["lc"].is_object());
    need("flags", r.contains("flags") && r["flags"].is_array());
    need("outputs", r.contains("outputs") && r["outputs"].is_array());
    need("residuals", r.contains("residuals") && (r["residuals"].is_object() || r["residuals"].is_null()));
    if (r.contains("residuals") && r["residuals"].is_object()) {
        const Json& res = r["residuals"];
        for (const char* eq : {"eq1", "eq2", "eq3", "eq4"}) {
            if (!res.contains(eq) || !res[eq].is_object()) {
                err.push_back(std::string("residuals.") + eq + " missing");
                continue;
            }
            for (const char* k : {"max_abs", "mean_abs"}) {
                const Json& v = res[eq].contains(k) ? res[eq][k] : Json();
                if (!(v.is_null() || (v.is_number() && v.get<double>() >= 0.0)))
                    err.push_back(std::string("residuals.") + eq + "." + k + " must be a non-negative number");
            }
        }
        for (const char* k : {"evaluated_nodes", "singular_nodes"})
            if (!res.contains(k) || !res[k].is_number_unsigned()) err.push_back(std::string("residuals.") + k + " missing");
        if (!r.contains("max_residual")) err.push_back("missing max_residual");
        if (!r.contains("tolerance") || !r["tolerance"].is_object()) err.push_back("missing tolerance");
    } else if (r.contains("exit_code") && r["exit_code"] == 0) {
        err.push_back("a successful report needs residuals");
    }
    if (r.contains("status") && r.contains("exit_code") && r["exit_code"].is_number_integer()) {
        const int code = r["exit_code"].get<int>();
        if (r["status"] != status_for(code)) err.push_back("status does not match exit_code");
    }
    return err;
}

}  // namespace frgrav
