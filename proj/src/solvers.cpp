#include "frgrav/solvers.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>

namespace frgrav {

namespace {

Grid1D effective(const Grid1D& g, std::size_t axis, const FracOrder& ord) {
    return ord.has_terminal(axis) ? g.with_terminal(ord.terminal(axis)) : g;
}

double max_abs(const SampledField& f) {
    double m = 0.0;
    for (double v : f.values()) m = std::max(m, std::fabs(v));
    return m;
}

SampledField field_or(const std::optional<SampledField>& f, const std::vector<Grid1D>& axes, double fill) {
    return f ? *f : SampledField(axes, fill);
}

std::vector<Grid1D> chart(const std::vector<Grid1D>& axes) { return {axes[0], axes[1]}; }

// 2-D integration function broadcast along v.
SampledField integration_fn(const std::optional<SampledField>& f, const std::vector<Grid1D>& axes, double fill,
                            const char* name) {
    if (!f) return SampledField(axes, fill);
    if (f->rank() == 3) {
        if (f->axes() != axes) throw ShapeError(std::string(name) + " is not sampled on the metric grid");
        return *f;
    }
    if (f->rank() != 2 || f->axis(0) != axes[0] || f->axis(1) != axes[1])
        throw ShapeError(std::string(name) + " must be sampled on the (x1, x2) chart");
    return extend_along_v(*f, axes[2]);
}

void check_3d(const std::optional<SampledField>& f, const std::vector<Grid1D>& axes, const char* name) {
    if (!f) throw PreconditionError(std::string("generating field ") + name + " is required");
    if (f->axes() != axes) throw ShapeError(std::string("generating field ") + name + " is not on the metric grid");
    f->validate();
}

// Nodes sitting on the v terminal, where Caputo derivatives of generic data vanish.
std::vector<std::uint8_t> v_terminal_nodes(const std::vector<Grid1D>& axes, const FracOrder& ord) {
    const Grid1D v = effective(axes[2], 2, ord);
    const std::size_t nv = v.size();
    std::vector<std::uint8_t> out(axes[0].size() * axes[1].size() * nv, 0);
    if (v.front() != v.terminal()) return out;
    for (std::size_t i = 0; i < out.size(); i += nv) out[i] = 1;
    return out;
}

// num / den with zero where both vanish; nodes with den = 0 != num are flagged.
SampledField ratio(const SampledField& num, const SampledField& den, double tol, std::vector<std::uint8_t>& singular) {
    SampledField out(num.axes(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (std::fabs(den[i]) > tol) out[i] = num[i] / den[i];
        else if (std::fabs(num[i]) > tol) singular[i] = 1;
    }
    return out;
}

void require_nonzero(const SampledField& f, double tol, const std::vector<std::uint8_t>& exempt, const std::string& msg) {
    for (std::size_t i = 0; i < f.size(); ++i)
        if (!exempt[i] && !(std::fabs(f[i]) > tol)) throw PreconditionError(msg + " (node " + std::to_string(i) + ")");
}

void flag_degenerate(DMetric& g, double tol) {
    if (g.singular.empty()) g.singular.assign(g.size(), 0);
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t a = 0; a < 4; ++a)
            if (!(std::fabs(g.coeff(a)[i]) > tol)) g.singular[i] = 1;
}

void set_h_part(DMetric& g, const FracOrder& ord, const GeneratingData& gen, const SourceSpec& src,
                const FamilyOptions& opt) {
    const auto c = chart(g.axes);
    const SampledField bc = gen.psi_boundary ? *gen.psi_boundary : SampledField(c, 0.0);
    const SampledField psi = solve_psi(src.upsilon4, bc, ord, g.scheme, opt.psi);
    const SampledField eg = extend_along_v(fractional_exp(psi, ord), g.axes[2]);
    g.g1 = eg;
    g.g2 = eg;
    g.aux["psi"] = psi;
}

SampledField terminal_slice(const SampledField& f) {
    SampledField out({f.axis(0), f.axis(1)}, 0.0);
    const std::size_t nv = f.axis(2).size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f[i * nv];
    return out;
}

bool finite(const SampledField& f) {
    for (double x : f.values())
        if (!std::isfinite(x)) return false;
    return true;
}

void set_n(DMetric& g, const GeneratingData& gen, const SampledField& integrand) {
    const SampledField n11 = integration_fn(gen.n1_1, g.axes, 0.0, "1n_1");
    const SampledField n12 = integration_fn(gen.n1_2, g.axes, 0.0, "1n_2");
    const SampledField n21 = integration_fn(gen.n2_1, g.axes, 0.0, "2n_1");
    const SampledField n22 = integration_fn(gen.n2_2, g.axes, 0.0, "2n_2");
    const bool need = max_abs(n21) > 0.0 || max_abs(n22) > 0.0;
    const SampledField I = need ? antiderivative(integrand, 2, g.order, g.scheme) : SampledField(g.axes, 0.0);
    g.n1 = n11 + n21 * I;
    g.n2 = n12 + n22 * I;
    // n* -> 2n * integrand at the v terminal
    const SampledField at = terminal_slice(n21 * integrand), bt = terminal_slice(n22 * integrand);
    if (finite(at)) g.aux["terminal.n1_v"] = at;
    if (finite(bt)) g.aux["terminal.n2_v"] = bt;
}

DMetric blank(const std::vector<Grid1D>& axes, const FracOrder& ord) {
    if (axes.size() != 3) throw ShapeError("family constructors need a (x1, x2, v) grid");
    DMetric g;
    g.axes = axes;
    g.order = ord;
    g.singular.assign(axes[0].size() * axes[1].size() * axes[2].size(), 0);
    return g;
}

void finish(DMetric& g, const FamilyOptions& opt) {
    for (const SampledField* f : {&g.w1, &g.w2, &g.n1, &g.n2, &g.h3, &g.h4})
        if (f->size() == 0) throw PreconditionError("family constructor left a coefficient unset");
    flag_degenerate(g, opt.nonzero_tol);
    // keep coefficients finite at masked nodes
    for (SampledField* f : {&g.g1, &g.g2, &g.h3, &g.h4, &g.w1, &g.w2, &g.n1, &g.n2})
        for (std::size_t i = 0; i < f->size(); ++i)
            if (!std::isfinite((*f)[i])) {
                (*f)[i] = 0.0;
                g.singular[i] = 1;
            }
    g.record_signs();
    g.validate();
}

}  // namespace

SampledField extend_along_v(const SampledField& f2, const Grid1D& v) {
    if (f2.rank() != 2) throw ShapeError("expected a field over (x1, x2)");
    SampledField out({f2.axis(0), f2.axis(1), v}, 0.0);
    const std::size_t nv = v.size();
    for (std::size_t i = 0; i < f2.size(); ++i)
        for (std::size_t k = 0; k < nv; ++k) out[i * nv + k] = f2[i];
    return out;
}

SampledField fractional_exp(const SampledField& psi, const FracOrder& ord) {
    if (ord.integer()) return psi.map([](double x) { return std::exp(x); });
    const double a = ord.alpha();
    return psi.map([a](double x) { return mittag_leffler(a, x); });
}

SampledField solve_psi(const SampledField& src4, const SampledField& boundary, const FracOrder& ord, Scheme scheme,
                       const PsiOptions& opt) {
    if (src4.rank() != 2) throw ShapeError("Y4 must be sampled on the (x1, x2) chart");
    if (!boundary.same_grid(src4)) throw ShapeError("psi boundary data must share the source grid");
    src4.validate();
    boundary.validate();
    const Grid1D& gx = src4.axis(0);
    const Grid1D& gy = src4.axis(1);
    const std::size_t n1 = gx.size(), n2 = gy.size();
    if (n1 < 3 || n2 < 3) throw ShapeError("psi chart needs at least 3 nodes per axis");

    const LineOperator d1 = caputo_operator(effective(gx, 0, ord), ord.alpha(), scheme);
    const LineOperator d2 = caputo_operator(effective(gy, 1, ord), ord.alpha(), scheme);
    const LineOperator A1 = d1.compose(d1), A2 = d2.compose(d2);

    auto id = [n2](std::size_t i, std::size_t j) { return static_cast<int>(i * n2 + j); };
    auto edge = [n1, n2](std::size_t i, std::size_t j) { return i == 0 || j == 0 || i + 1 == n1 || j + 1 == n2; };

    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(n1 * n2));
    for (std::size_t i = 0; i < n1; ++i)
        for (std::size_t j = 0; j < n2; ++j) {
            const int r = id(i, j);
            if (edge(i, j)) {
                trip.emplace_back(r, r, 1.0);
                rhs[r] = boundary[i * n2 + j];
                continue;
            }
            rhs[r] = 2.0 * src4[i * n2 + j];
            for (std::size_t k = 0; k < n1; ++k) {
                const double w = A1.weight(i, k);
                if (w != 0.0) trip.emplace_back(r, id(k, j), w);
            }
            for (std::size_t k = 0; k < n2; ++k) {
                const double w = A2.weight(j, k);
                if (w != 0.0) trip.emplace_back(r, id(i, k), w);
            }
        }
    Eigen::SparseMatrix<double> M(static_cast<Eigen::Index>(n1 * n2), static_cast<Eigen::Index>(n1 * n2));
    M.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(M);
    if (lu.info() != Eigen::Success) throw SolverError("psi system factorization failed", {});
    const Eigen::VectorXd sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw SolverError("psi system solve failed", {});

    SampledField psi(src4.axes(), std::vector<double>(sol.data(), sol.data() + sol.size()));
    const SampledField lap = apply_axis(psi, 0, A1) + apply_axis(psi, 1, A2);
    double res = 0.0, scale = 1.0;
    for (std::size_t i = 1; i + 1 < n1; ++i)
        for (std::size_t j = 1; j + 1 < n2; ++j) {
            const std::size_t k = i * n2 + j;
            res = std::max(res, std::fabs(lap[k] - 2.0 * src4[k]));
            scale = std::max(scale, std::fabs(2.0 * src4[k]));
        }
    if (!(res <= opt.tolerance * scale))
        throw SolverError("psi residual " + std::to_string(res) + " above tolerance", {res});
    return psi;
}

Family parse_family(const std::string& s) {
    if (s == "A") return Family::A;
    if (s == "B") return Family::B;
    if (s == "C") return Family::C;
    if (s == "D") return Family::D;
    throw ConfigError("unknown family '" + s + "'");
}

std::string to_string(Family f) {
    switch (f) {
        case Family::A: return "A";
        case Family::B: return "B";
        case Family::C: return "C";
        case Family::D: return "D";
    }
    return "?";
}

DMetric family_A(const std::vector<Grid1D>& axes, const FracOrder& ord, const GeneratingData& gen,
                 const SourceSpec& src, const FamilyOptions& opt) {
    DMetric g = blank(axes, ord);
    src.validate(axes);
    check_3d(gen.phi, axes, "phi");
    const SampledField& phi = *gen.phi;
    const auto exempt = v_terminal_nodes(axes, ord);
    const SampledField& Y2 = src.upsilon2;
    require_nonzero(Y2, opt.nonzero_tol, std::vector<std::uint8_t>(Y2.size(), 0),
                    "family A needs a nonvanishing Y2; use family B for Y2 = 0");
    const SampledField phiv = partial(phi, 2, ord);
    require_nonzero(phiv, opt.nonzero_tol, exempt, "family A needs phi* != 0; use family B or D instead");

    const SampledField e2 = phi.map([](double x) { return std::exp(2.0 * x); });
    const SampledField e2v = partial(e2, 2, ord);
    const SampledField h40 = integration_fn(gen.h4_0, axes, 0.0, "0h4");
    const double s = opt.sign;
    const SampledField q = e2v / Y2;
    if (opt.variant == FormulaVariant::Consistent) {
        g.h4 = h40 + (0.25 * s) * antiderivative(q, 2, ord, g.scheme);
        const SampledField h4v = (0.25 * s) * q;
        g.h3 = h4v * phiv / (2.0 * Y2 * g.h4);
    } else {
        g.h4 = h40 + (2.0 * s) * antiderivative(q, 2, ord, g.scheme);
        g.h3 = s * phiv.map([](double x) { return std::fabs(x); }) / Y2;
    }
    if (opt.h3_branch < 0) g.h3 = -g.h3;
    g.singular = exempt;
    g.w1 = opt.w_sign * ratio(partial(phi, 0, ord), phiv, opt.nonzero_tol, g.singular);
    g.w2 = opt.w_sign * ratio(partial(phi, 1, ord), phiv, opt.nonzero_tol, g.singular);
    const SampledField integrand = g.h3 / g.h4.map([](double x) { return std::pow(std::fabs(x), 1.5); });
    set_n(g, gen, integrand);
    set_h_part(g, ord, gen, src, opt);
    g.aux["phi"] = phi;
    finish(g, opt);
    return g;
}

DMetric family_B(const std::vector<Grid1D>& axes, const FracOrder& ord, const GeneratingData& gen,
                 const SourceSpec& src, const FamilyOptions& opt) {
    DMetric g = blank(axes, ord);
    src.validate(axes);
    if (max_abs(src.upsilon2) > opt.nonzero_tol)
        throw PreconditionError("family B (h4* = 0) solves the reduced system only for Y2 = 0");
    check_3d(gen.h3, axes, "h3");
    g.h3 = *gen.h3;
    g.h4 = integration_fn(gen.h4_0, axes, 1.0, "0h4");
    g.w1 = field_or(gen.w1, axes, 0.0);
    g.w2 = field_or(gen.w2, axes, 0.0);
    set_n(g, gen, g.h3);
    set_h_part(g, ord, gen, src, opt);
    finish(g, opt);
    return g;
}

DMetric family_C(const std::vector<Grid1D>& axes, const FracOrder& ord, const GeneratingData& gen,
                 const SourceSpec& src, const FamilyOptions& opt) {
    DMetric g = blank(axes, ord);
    src.validate(axes);
    const SampledField h30 = integration_fn(gen.h3_0, axes, 1.0, "0h3");
    const SampledField c0 = integration_fn(gen.h4_0, axes, 1.0, "h4 at the v terminal");
    const SampledField c1 = integration_fn(gen.h4_slope, axes, 1.0, "h4* at the v terminal");

    const Grid1D v = effective(axes[2], 2, ord);
    const std::size_t nv = v.size();
    const LineOperator I = antiderivative_operator(v, ord.alpha(), g.scheme);
    // I^alpha[1], (v - v0)^alpha / Gamma(1 + alpha) in the continuum
    const std::vector<double> P = I.apply(std::vector<double>(nv, 1.0));
    const double sgn = opt.variant == FormulaVariant::Consistent ? -1.0 : 1.0;

    SampledField h4(axes, 0.0), h4v(axes, 0.0);
    std::vector<double> h(nv), p(nv), F(nv), hn(nv), pn(nv);
    for (std::size_t line = 0; line * nv < h4.size(); ++line) {
        const std::size_t base = line * nv;
        for (std::size_t k = 0; k < nv; ++k) {
            h[k] = c0[base] + c1[base] * P[k];
            p[k] = c1[base];
        }
        std::vector<double> history;
        bool converged = false;
        for (std::size_t it = 0; it < opt.max_iterations; ++it) {
            for (std::size_t k = 0; k < nv; ++k)
                F[k] = p[k] * p[k] / (2.0 * h[k]) + sgn * 2.0 * h30[base + k] * h[k] * src.upsilon2[base + k];
            const auto IF = I.apply(F);
            for (std::size_t k = 0; k < nv; ++k) pn[k] = c1[base] + IF[k];
            const auto Ip = I.apply(pn);
            double change = 0.0, scale = 1.0;
            for (std::size_t k = 0; k < nv; ++k) {
                hn[k] = c0[base] + Ip[k];
                change = std::max(change, std::fabs(hn[k] - h[k]));
                scale = std::max(scale, std::fabs(hn[k]));
                h[k] += opt.damping * (hn[k] - h[k]);
                p[k] += opt.damping * (pn[k] - p[k]);
            }
            history.push_back(change);
            if (!std::isfinite(change)) break;
            if (change <= opt.ode_tolerance * scale) {
                converged = true;
                break;
            }
        }
        if (!converged) throw SolverError("family C h4 iteration did not converge on line " + std::to_string(line), history);
        for (std::size_t k = 0; k < nv; ++k) {
            h4[base + k] = h[k];
            h4v[base + k] = p[k];
        }
    }
    require_nonzero(h4v, opt.nonzero_tol, std::vector<std::uint8_t>(h4v.size(), 0),
                    "family C needs h4* != 0; use family B for h4* = 0");
    g.h4 = h4;
    g.h3 = -h30;
    g.aux["terminal.h4_v"] = terminal_slice(c1);

    // phi~ = ln|h4* / sqrt|0h3 h4||
    SampledField pt(axes, 0.0);
    for (std::size_t i = 0; i < pt.size(); ++i) pt[i] = std::log(std::fabs(h4v[i] / std::sqrt(std::fabs(h30[i] * h4[i]))));
    const SampledField ptv = partial(pt, 2, ord);
    g.w1 = opt.w_sign * ratio(partial(pt, 0, ord), ptv, opt.nonzero_tol, g.singular);
    g.w2 = opt.w_sign * ratio(partial(pt, 1, ord), ptv, opt.nonzero_tol, g.singular);
    set_n(g, gen, h4.map([](double x) { return std::pow(std::fabs(x), -1.5); }));
    set_h_part(g, ord, gen, src, opt);
    g.aux["phi"] = pt;
    finish(g, opt);
    return g;
}

DMetric family_D(const std::vector<Grid1D>& axes, const FracOrder& ord, const GeneratingData& gen,
                 const SourceSpec& src, const FamilyOptions& opt) {
    DMetric g = blank(axes, ord);
    src.validate(axes);
    check_3d(gen.f, axes, "f");
    const SampledField& f = *gen.f;
    const auto exempt = v_terminal_nodes(axes, ord);
    const SampledField fv = partial(f, 2, ord);
    require_nonzero(fv, opt.nonzero_tol, exempt, "family D needs f* != 0");
    const SampledField s40 = integration_fn(gen.varsigma40, axes, 1.0, "varsigma40");
    require_nonzero(s40, opt.nonzero_tol, std::vector<std::uint8_t>(s40.size(), 0), "varsigma40 must be nonzero");
    const double h0 = gen.h0;
    const SampledField f2 = f * f;
    const SampledField& Y2 = src.upsilon2;

    SampledField vs;
    if (opt.variant == FormulaVariant::Consistent) {
        // 1/varsigma = 1/varsigma40 - sgn(varsigma40) 0h^2 I[Y2 (f^2)*]
        const SampledField J = antiderivative(Y2 * partial(f2, 2, ord), 2, ord, g.scheme);
        vs = SampledField(axes, 0.0);
        for (std::size_t i = 0; i < vs.size(); ++i) {
            const double sg = s40[i] > 0 ? 1.0 : -1.0;
            vs[i] = 1.0 / (1.0 / s40[i] - sg * h0 * h0 * J[i]);
        }
    } else {
        vs = s40 - (h0 * h0 / 16.0) * antiderivative(Y2 * f2 * f2, 2, ord, g.scheme);
    }
    g.h4 = f2;
    g.h3 = -(h0 * h0) * fv * fv * vs.map([](double x) { return std::fabs(x); });
    g.singular = exempt;

    const SampledField vsv = partial(vs, 2, ord);
    const bool flat = max_abs(vsv) <= opt.nonzero_tol;
    if (flat) {
        if (!gen.w1 || !gen.w2)
            throw PreconditionError("varsigma* vanishes (Y2 = 0): w1 and w2 must be supplied explicitly");
        g.w1 = *gen.w1;
        g.w2 = *gen.w2;
    } else {
        g.w1 = opt.w_sign * ratio(partial(vs, 0, ord), vsv, opt.nonzero_tol, g.singular);
        g.w2 = opt.w_sign * ratio(partial(vs, 1, ord), vsv, opt.nonzero_tol, g.singular);
    }
    set_n(g, gen, fv * fv / f2 * vs);
    set_h_part(g, ord, gen, src, opt);
    g.aux["varsigma"] = vs;
    finish(g, opt);
    return g;
}

DMetric build_family(Family fam, const std::vector<Grid1D>& axes, const FracOrder& ord, const GeneratingData& gen,
                     const SourceSpec& src, const FamilyOptions& opt) {
    switch (fam) {
        case Family::A: return family_A(axes, ord, gen, src, opt);
        case Family::B: return family_B(axes, ord, gen, src, opt);
        case Family::C: return family_C(axes, ord, gen, src, opt);
        case Family::D: return family_D(axes, ord, gen, src, opt);
    }
    throw ConfigError("unknown family");
}

AuxQuantities aux_quantities(const DMetric& g) {
    const FracOrder& o = g.order;
    const SampledField h3v = partial(g.h3, 2, o), h4v = partial(g.h4, 2, o);
    AuxQuantities q;
    q.phi = SampledField(g.axes, 0.0);
    q.gamma = SampledField(g.axes, 0.0);
    SampledField lg(g.axes, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        q.phi[i] = std::log(std::fabs(h4v[i] / std::sqrt(std::fabs(g.h3[i] * g.h4[i]))));
        lg[i] = std::log(std::pow(std::fabs(g.h4[i]), 1.5) / std::fabs(g.h3[i]));
    }
    q.gamma = partial(lg, 2, o);
    q.beta = h4v * partial(q.phi, 2, o);
    for (std::size_t k = 0; k < 2; ++k) q.alpha[k] = h4v * partial(q.phi, k, o);
    return q;
}

std::map<std::string, double> select_levi_civita(const DMetric& g, Family fam, const ResidualOptions& opt) {
    std::map<std::string, double> out;
    for (const auto& [k, v] : lc_conditions(g, opt)) out["lc." + k] = v;

    std::vector<std::uint8_t> mask = boundary_mask(g.axes, opt);
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (!g.singular.empty() && g.singular[i]) mask[i] = 1;
    const FracOrder& o = g.order;
    const SampledField* w[2] = {&g.w1, &g.w2};
    const SampledField h4v = partial(g.h4, 2, o);

    double wc = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
        SampledField c = partial(*w[i], 2, o) + partial(g.h4, i, o);
        if (fam != Family::B) c = c + *w[i] * h4v;
        wc = std::max(wc, masked_max(c, mask));
    }
    out[fam == Family::B ? "family.w_h0" : "family.w_h4"] = wc;
    out["family.dw_sym"] = masked_max(partial(g.w2, 0, o) - partial(g.w1, 1, o), mask);
    out["family.n2_zero"] = out["lc.n_star"];
    out["family.dn1_sym"] = out["lc.dn_sym"];
    return out;
}

}  // namespace frgrav
