#include "frgrav/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "frgrav/errors.hpp"

namespace frgrav {

namespace {

enum class Arity { Scalar, Chart, Full, XV, V, Word };

struct KeySpec {
    Arity arity;
    bool required = false;
};

using Schema = std::map<std::string, KeySpec>;

const std::set<std::string> kTopKeys = {"alpha", "grid", "family", "generators", "source", "signs", "tolerances", "output"};

Schema family_schema(const std::string& fam) {
    const KeySpec chart{Arity::Chart};
    Schema s = {{"n1_1", chart}, {"n1_2", chart}, {"n2_1", chart}, {"n2_2", chart}, {"psi_boundary", chart}};
    if (fam == "A") {
        s["phi"] = {Arity::Full, true};
        s["h4_0"] = chart;
    } else if (fam == "B") {
        s["h3"] = {Arity::Full, true};
        s["w1"] = {Arity::Full};
        s["w2"] = {Arity::Full};
        s["h4_0"] = chart;
    } else if (fam == "C") {
        s["h4_0"] = chart;
        s["h4_slope"] = chart;
        s["h3_0"] = chart;
    } else if (fam == "D") {
        s["f"] = {Arity::Full, true};
        s["w1"] = {Arity::Full};
        s["w2"] = {Arity::Full};
        s["varsigma40"] = chart;
        s["h0"] = {Arity::Scalar};
    }
    return s;
}

Schema black_hole_schema(const std::string& fam) {
    Schema s = {{"mu0", {Arity::Scalar}},         {"eps", {Arity::Scalar}}, {"measure", {Arity::Word}},
                {"excision_margin", {Arity::Scalar}}, {"psi", {Arity::Chart}}, {"w1", {Arity::Full}},
                {"w2", {Arity::Full}},           {"n1", {Arity::Chart}},  {"n2", {Arity::Chart}}};
    if (fam == "schwarzschild") {
        s["eta4"] = {Arity::Full};
        s["b"] = {Arity::Full};
        s["eta3"] = {Arity::Full};
        s["h0"] = {Arity::Scalar};
        return s;
    }
    for (const char* k : {"omega0", "phi0", "q0", "n_tolerance", "horizon_theta"}) s[k] = {Arity::Scalar};
    s["mu1"] = {Arity::Full};
    s["h3"] = {Arity::Word};
    if (fam == "solrot" || fam == "oscillator") {
        s["eta"] = {Arity::XV, fam == "solrot"};
        for (const char* k : {"soliton_sign", "soliton_tolerance", "soliton_iterations"}) s[k] = {Arity::Scalar};
    }
    if (fam == "oscillator") {
        s["z1"] = {Arity::V, true};
        s["z2"] = {Arity::V, true};
        for (const char* k : {"order", "c1", "c2", "growth_limit"}) s[k] = {Arity::Scalar};
    }
    return s;
}

bool is_black_hole(const std::string& fam) { return fam.size() > 1; }

std::string where(const std::string& path) { return "config key \"" + path + "\""; }

void reject_unknown(const Json& obj, const std::set<std::string>& allowed, const std::string& path) {
    if (!obj.is_object()) throw ConfigError(where(path) + " must be an object");
    for (const auto& [k, v] : obj.items())
        if (!allowed.count(k)) throw ConfigError("unknown " + where(path.empty() ? k : path + "." + k));
}

double get_number(const Json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(where(path) + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(where(path) + " must be finite");
    return x;
}

Expr get_expr(const Json& v, const std::string& path) {
    if (v.is_number()) return Expr::constant(get_number(v, path));
    if (!v.is_string()) throw ConfigError(where(path) + " must be a number or an expression string");
    try {
        return Expr::parse(v.get<std::string>());
    } catch (const ConfigError& e) {
        throw ConfigError(where(path) + ": " + e.what());
    }
}

void check_variables(const Expr& e, Arity a, const std::string& path) {
    std::set<std::string> allowed;
    switch (a) {
        case Arity::Chart: allowed = {"x1", "x2"}; break;
        case Arity::Full: allowed = {"x1", "x2", "v"}; break;
        case Arity::XV: allowed = {"x1", "v"}; break;
        case Arity::V: allowed = {"v"}; break;
        default: break;
    }
    for (const auto& name : e.variables())
        if (!allowed.count(name)) throw ConfigError(where(path) + " may not depend on " + name);
}

AxisSpec parse_axis(const Json& j, const std::string& path, bool radial) {
    reject_unknown(j, {"lo", "hi", "n", "terminal", "spacing"}, path);
    AxisSpec a;
    for (const char* k : {"lo", "hi", "n"})
        if (!j.contains(k)) throw ConfigError(where(path) + " is missing \"" + k + "\"");
    a.lo = get_number(j.at("lo"), path + ".lo");
    a.hi = get_number(j.at("hi"), path + ".hi");
    if (!j.at("n").is_number_integer() || j.at("n").get<long long>() < 2)
        throw ConfigError(where(path + ".n") + " must be an integer >= 2");
    a.n = j.at("n").get<std::size_t>();
    if (!(a.hi > a.lo)) throw ConfigError(where(path) + " needs lo < hi");
    if (j.contains("terminal")) {
        a.terminal = get_number(j.at("terminal"), path + ".terminal");
        if (*a.terminal > a.lo) throw ConfigError(where(path + ".terminal") + " must not exceed lo");
    }
    if (j.contains("spacing")) {
        if (!j.at("spacing").is_string()) throw ConfigError(where(path + ".spacing") + " must be a string");
        a.spacing = j.at("spacing").get<std::string>();
        const bool ok = a.spacing == "uniform" || (radial && a.spacing == "xi");
        if (!ok) throw ConfigError(where(path + ".spacing") + " must be \"uniform\"" + (radial ? " or \"xi\"" : ""));
    }
    return a;
}

}  // namespace

double Generator::number() const {
    if (!expr || !expr->variables().empty()) throw ConfigError("generator must be a constant");
    return expr->eval({0.0, 0.0, 0.0});
}

bool RunConfig::black_hole() const { return is_black_hole(family); }

const Generator* RunConfig::generator(const std::string& key) const {
    const auto it = generators.find(key);
    return it == generators.end() ? nullptr : &it->second;
}

RunConfig parse_config(const Json& doc) {
    reject_unknown(doc, kTopKeys, "");
    RunConfig c;
    c.echo = doc;

    if (!doc.contains("family") || !doc.at("family").is_string()) throw ConfigError(where("family") + " is required");
    c.family = doc.at("family").get<std::string>();
    if (std::find(std::begin(kFamilyKinds), std::end(kFamilyKinds), c.family) == std::end(kFamilyKinds))
        throw ConfigError("unknown family \"" + c.family + "\"");

    if (!doc.contains("alpha")) throw ConfigError(where("alpha") + " is required");
    c.alpha = get_number(doc.at("alpha"), "alpha");
    if (!(c.alpha > 0.0 && c.alpha <= 1.0)) throw ConfigError(where("alpha") + " must lie in (0, 1]");

    if (!doc.contains("grid")) throw ConfigError(where("grid") + " is required");
    const Json& grid = doc.at("grid");
    reject_unknown(grid, {"x1", "x2", "v"}, "grid");
    for (const char* ax : {"x1", "x2", "v"}) {
        if (!grid.contains(ax)) throw ConfigError(where(std::string("grid.") + ax) + " is required");
        c.grid[ax] = parse_axis(grid.at(ax), std::string("grid.") + ax, ax == std::string("x1") && c.black_hole());
    }
    if (c.black_hole() && c.grid["x1"].terminal)
        throw ConfigError(where("grid.x1.terminal") + " is fixed at the innermost radius for black-hole kinds");

    const Schema schema = c.black_hole() ? black_hole_schema(c.family) : family_schema(c.family);
    const Json gens = doc.value("generators", Json::object());
    std::set<std::string> allowed;
    for (const auto& [k, v] : schema) allowed.insert(k);
    reject_unknown(gens, allowed, "generators");
    std::vector<std::string> missing;
    for (const auto& [k, spec] : schema) {
        const std::string path = "generators." + k;
        if (!gens.contains(k)) {
            if (spec.required) missing.push_back(k);
            continue;
        }
        Generator g;
        if (spec.arity == Arity::Word) {
            if (!gens.at(k).is_string()) throw ConfigError(where(path) + " must be a string");
            g.word = gens.at(k).get<std::string>();
        } else {
            g.expr = get_expr(gens.at(k), path);
            check_variables(*g.expr, spec.arity, path);
        }
        c.generators[k] = std::move(g);
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw ConfigError("family " + c.family + " requires generators: " + list);
    }
    if (c.family == "schwarzschild" && (c.generators.count("eta4") + c.generators.count("b")) != 1)
        throw ConfigError("family schwarzschild requires exactly one of generators eta4 or b");

    if (doc.contains("source")) {
        const Json& src = doc.at("source");
        reject_unknown(src, {"upsilon2", "upsilon4"}, "source");
        if (src.contains("upsilon2")) c.upsilon2 = get_expr(src.at("upsilon2"), "source.upsilon2");
        if (src.contains("upsilon4")) {
            c.upsilon4 = get_expr(src.at("upsilon4"), "source.upsilon4");
            check_variables(*c.upsilon4, Arity::Chart, "source.upsilon4");
        }
    }

    if (doc.contains("signs")) {
        const Json& s = doc.at("signs");
        const std::set<std::string> keys = c.black_hole() ? std::set<std::string>{}
                                                          : std::set<std::string>{"sign", "w_sign", "h3_branch", "variant"};
        reject_unknown(s, keys, "signs");
        for (const auto& [k, v] : s.items()) {
            if (k == "variant") {
                if (!v.is_string() || (v != "consistent" && v != "printed"))
                    throw ConfigError(where("signs.variant") + " must be \"consistent\" or \"printed\"");
            } else if (!v.is_number() || std::fabs(v.get<double>()) != 1.0) {
                throw ConfigError(where("signs." + k) + " must be +1 or -1");
            }
            c.signs[k] = v;
        }
    }

    if (doc.contains("tolerances")) {
        const Json& t = doc.at("tolerances");
        reject_unknown(t, {"residual", "lc", "boundary_layers", "psi"}, "tolerances");
        if (t.contains("residual")) c.tolerances.residual = get_number(t.at("residual"), "tolerances.residual");
        if (t.contains("lc")) c.tolerances.lc = get_number(t.at("lc"), "tolerances.lc");
        if (t.contains("psi")) c.tolerances.psi = get_number(t.at("psi"), "tolerances.psi");
        if (t.contains("boundary_layers")) {
            if (!t.at("boundary_layers").is_number_unsigned())
                throw ConfigError(where("tolerances.boundary_layers") + " must be a non-negative integer");
            c.tolerances.boundary_layers = t.at("boundary_layers").get<std::size_t>();
        }
        if (!(c.tolerances.residual > 0.0)) throw ConfigError(where("tolerances.residual") + " must be positive");
    }

    if (doc.contains("output")) {
        const Json& o = doc.at("output");
        reject_unknown(o, {"dir", "format"}, "output");
        if (o.contains("dir")) {
            if (!o.at("dir").is_string()) throw ConfigError(where("output.dir") + " must be a string");
            c.output.dir = o.at("dir").get<std::string>();
        }
        if (o.contains("format")) {
            if (!o.at("format").is_string()) throw ConfigError(where("output.format") + " must be a string");
            c.output.format = parse_grid_format(o.at("format").get<std::string>());
        }
    }
    return c;
}

RunConfig parse_config_file(const std::string& path) {
    const Json doc = read_json(path);
    try {
        return parse_config(doc);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace frgrav
