#include "frgrav/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "frgrav/errors.hpp"

namespace frgrav {

namespace {

std::string num17(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

Json nested(const SampledField& f, std::size_t axis, std::size_t offset) {
    Json a = Json::array();
    const std::size_t n = f.axis(axis).size(), st = f.stride(axis);
    for (std::size_t i = 0; i < n; ++i) {
        if (axis + 1 == f.rank()) a.push_back(f[offset + i]);
        else a.push_back(nested(f, axis + 1, offset + i * st));
    }
    return a;
}

void flatten(const Json& a, std::size_t depth, std::size_t rank, const std::vector<std::size_t>& shape,
             std::vector<double>& out) {
    if (!a.is_array() || a.size() != shape[depth]) throw ShapeError("nested value array does not match the axes");
    for (const Json& x : a) {
        if (depth + 1 == rank) {
            if (!x.is_number()) throw ShapeError("non-numeric grid value");
            out.push_back(x.get<double>());
        } else {
            flatten(x, depth + 1, rank, shape, out);
        }
    }
}

Json axes_json(const std::vector<Grid1D>& axes, const std::vector<std::string>& names) {
    Json a = Json::array();
    for (std::size_t i = 0; i < axes.size(); ++i)
        a.push_back({{"name", i < names.size() ? names[i] : "axis" + std::to_string(i)},
                     {"nodes", axes[i].nodes()},
                     {"terminal", axes[i].terminal()}});
    return a;
}

std::vector<Grid1D> axes_from(const Json& a) {
    if (!a.is_array()) throw ShapeError("\"axes\" must be an array");
    std::vector<Grid1D> out;
    for (const Json& ax : a) out.emplace_back(ax.at("nodes").get<std::vector<double>>(), ax.at("terminal").get<double>());
    return out;
}

SampledField values_from(const std::vector<Grid1D>& axes, const Json& values) {
    std::vector<std::size_t> shape;
    for (const auto& g : axes) shape.push_back(g.size());
    std::vector<double> v;
    flatten(values, 0, axes.size(), shape, v);
    return SampledField(axes, std::move(v));
}

void rows(std::ostringstream& os, const std::vector<Grid1D>& axes, const std::vector<const SampledField*>& cols) {
    const std::size_t n = cols.front()->size();
    std::vector<std::size_t> idx(axes.size(), 0);
    for (std::size_t p = 0; p < n; ++p) {
        std::size_t rem = p;
        for (std::size_t a = axes.size(); a-- > 0;) {
            idx[a] = rem % axes[a].size();
            rem /= axes[a].size();
        }
        for (std::size_t a = 0; a < axes.size(); ++a) os << (a ? "," : "") << num17(axes[a][idx[a]]);
        for (const SampledField* c : cols) os << ',' << num17((*c)[p]);
        os << '\n';
    }
}

void header(std::ostringstream& os, std::size_t rank, const std::vector<std::string>& names,
            const std::vector<std::string>& cols) {
    for (std::size_t a = 0; a < rank; ++a) os << (a ? "," : "") << (a < names.size() ? names[a] : "axis" + std::to_string(a));
    for (const auto& c : cols) os << ',' << c;
    os << '\n';
}

}  // namespace

GridFormat parse_grid_format(const std::string& s) {
    if (s == "csv") return GridFormat::Csv;
    if (s == "json") return GridFormat::Json;
    throw ConfigError("unknown output format \"" + s + "\" (expected csv or json)");
}

std::string scheme_name(Scheme s) { return s == Scheme::L1 ? "L1" : "L1_2"; }

Scheme parse_scheme(const std::string& s) {
    if (s == "L1") return Scheme::L1;
    if (s == "L1_2") return Scheme::L1_2;
    throw ConfigError("unknown scheme \"" + s + "\" (expected L1 or L1_2)");
}

std::string field_csv(const SampledField& f, const std::vector<std::string>& axis_names, const std::string& value_name) {
    std::ostringstream os;
    header(os, f.rank(), axis_names, {value_name});
    rows(os, f.axes(), {&f});
    return os.str();
}

std::string metric_csv(const DMetric& g, const std::vector<std::string>& axis_names) {
    std::ostringstream os;
    header(os, 3, axis_names, kMetricColumns);
    rows(os, g.axes, {&g.g1, &g.g2, &g.h3, &g.h4, &g.w1, &g.w2, &g.n1, &g.n2});
    return os.str();
}

Json field_to_json(const SampledField& f, const std::vector<std::string>& axis_names) {
    return {{"axes", axes_json(f.axes(), axis_names)}, {"values", nested(f, 0, 0)}};
}

SampledField field_from_json(const Json& j) {
    try {
        return values_from(axes_from(j.at("axes")), j.at("values"));
    } catch (const Json::exception& e) {
        throw ShapeError(std::string("malformed field document: ") + e.what());
    }
}

Json metric_to_json(const DMetric& g, const std::vector<std::string>& axis_names) {
    Json fields = Json::object();
    for (std::size_t c = 0; c < kMetricColumns.size(); ++c) {
        const SampledField* f[] = {&g.g1, &g.g2, &g.h3, &g.h4, &g.w1, &g.w2, &g.n1, &g.n2};
        fields[kMetricColumns[c]] = nested(*f[c], 0, 0);
    }
    std::vector<std::size_t> singular;
    for (std::size_t i = 0; i < g.singular.size(); ++i)
        if (g.singular[i]) singular.push_back(i);
    Json aux = Json::object();
    for (const auto& [k, f] : g.aux) aux[k] = field_to_json(f, axis_names);
    return {{"kind", "d-metric"},
            {"alpha", g.order.alpha()},
            {"terminals", g.order.terminals()},
            {"scheme", scheme_name(g.scheme)},
            {"axes", axes_json(g.axes, axis_names)},
            {"fields", fields},
            {"singular_nodes", singular},
            {"aux", aux}};
}

DMetric metric_from_json(const Json& j) {
    try {
        DMetric g;
        g.axes = axes_from(j.at("axes"));
        if (g.axes.size() != 3) throw ShapeError("a d-metric needs three axes");
        g.order = FracOrder(j.at("alpha").get<double>(), j.value("terminals", std::vector<double>{}));
        g.scheme = parse_scheme(j.value("scheme", scheme_name(kDefaultScheme)));
        const Json& f = j.at("fields");
        SampledField* dst[] = {&g.g1, &g.g2, &g.h3, &g.h4, &g.w1, &g.w2, &g.n1, &g.n2};
        for (std::size_t c = 0; c < kMetricColumns.size(); ++c) *dst[c] = values_from(g.axes, f.at(kMetricColumns[c]));
        g.singular.assign(g.size(), 0);
        for (std::size_t i : j.value("singular_nodes", std::vector<std::size_t>{})) {
            if (i >= g.size()) throw ShapeError("singular node index out of range");
            g.singular[i] = 1;
        }
        if (j.contains("aux"))
            for (const auto& [k, v] : j.at("aux").items()) g.aux[k] = field_from_json(v);
        g.record_signs();
        g.validate();
        return g;
    } catch (const Json::exception& e) {
        throw ShapeError(std::string("malformed metric document: ") + e.what());
    }
}

Json source_to_json(const SourceSpec& s, const std::vector<std::string>& axis_names) {
    return {{"kind", "source"},
            {"upsilon2", field_to_json(s.upsilon2, axis_names)},
            {"upsilon4", field_to_json(s.upsilon4, axis_names)}};
}

SourceSpec source_from_json(const Json& j) {
    try {
        SourceSpec s;
        s.upsilon2 = field_from_json(j.at("upsilon2"));
        s.upsilon4 = field_from_json(j.at("upsilon4"));
        return s;
    } catch (const Json::exception& e) {
        throw ShapeError(std::string("malformed source document: ") + e.what());
    }
}

void export_grid(const SampledField& f, const std::string& path, GridFormat fmt,
                 const std::vector<std::string>& axis_names) {
    write_text(path, fmt == GridFormat::Csv ? field_csv(f, axis_names) : field_to_json(f, axis_names).dump() + "\n");
}

void export_grid(const DMetric& g, const std::string& path, GridFormat fmt, const std::vector<std::string>& axis_names) {
    write_text(path, fmt == GridFormat::Csv ? metric_csv(g, axis_names) : metric_to_json(g, axis_names).dump() + "\n");
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

Json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace frgrav
