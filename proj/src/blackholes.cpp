#include "frgrav/blackholes.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <sstream>

#include "frgrav/solvers.hpp"

namespace frgrav {

namespace {

constexpr double kNonzeroTol = 1e-12;

double xi_integrand(double mu0, double eps, XiMeasure m, double r) {
    const double w = std::sqrt(std::fabs(varpi2(mu0, eps, r)));
    return m == XiMeasure::Literal ? w : 1.0 / w;
}

double xi_between(double mu0, double eps, XiMeasure m, double a, double b) {
    if (a == b) return 0.0;
    auto f = [&](double r) { return xi_integrand(mu0, eps, m, r); };
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-14);
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
}

void check_no_horizon(double mu0, double eps, double lo, double hi, double margin, const std::vector<double>& r) {
    for (double root : horizon_radii(mu0, eps))
        if (root >= lo && root <= hi)
            throw HorizonError("radial grid crosses the horizon at r = " + fmt(root), root);
    for (double x : r)
        if (std::fabs(varpi2(mu0, eps, x)) < margin) {
            const auto roots = horizon_radii(mu0, eps);
            double near = roots.empty() ? x : roots.front();
            for (double root : roots)
                if (std::fabs(root - x) < std::fabs(near - x)) near = root;
            throw HorizonError("node r = " + fmt(x) + " lies inside the excision margin of the horizon at r = " +
                                   fmt(near),
                               near);
        }
}

SampledField slice_r(const std::vector<Grid1D>& axes, const std::function<double(std::size_t, double, double)>& f) {
    SampledField out(axes, 0.0);
    const std::size_t n2 = axes[1].size(), nv = axes[2].size();
    for (std::size_t i = 0; i < axes[0].size(); ++i)
        for (std::size_t j = 0; j < n2; ++j)
            for (std::size_t k = 0; k < nv; ++k) out[(i * n2 + j) * nv + k] = f(i, axes[1][j], axes[2][k]);
    return out;
}

void check_theta(const Grid1D& theta) {
    for (double t : theta.nodes())
        if (std::fabs(std::sin(t)) < kNonzeroTol) throw DomainError("theta grid touches a pole (sin theta = 0)");
}

void require_grid(const SampledField& f, const std::vector<Grid1D>& axes, const char* name) {
    if (f.axes() != axes) throw ShapeError(std::string(name) + " is not sampled on the metric grid");
    f.validate();
}

SampledField chart_field(const std::optional<SampledField>& f, const std::vector<Grid1D>& axes, const char* name) {
    if (!f) return SampledField(axes, 0.0);
    if (f->rank() != 2 || f->axis(0) != axes[0] || f->axis(1) != axes[1])
        throw ShapeError(std::string(name) + " must be sampled on the (x1, x2) chart");
    f->validate();
    return extend_along_v(*f, axes[2]);
}

void set_n_data(DMetric& g, const NData& n) {
    g.w1 = n.w1 ? *n.w1 : SampledField(g.axes, 0.0);
    g.w2 = n.w2 ? *n.w2 : SampledField(g.axes, 0.0);
    if (n.w1) require_grid(*n.w1, g.axes, "w1");
    if (n.w2) require_grid(*n.w2, g.axes, "w2");
    g.n1 = chart_field(n.n1, g.axes, "n1");
    g.n2 = chart_field(n.n2, g.axes, "n2");
}

void set_g_from_psi(DMetric& g, const std::optional<SampledField>& psi) {
    if (!psi) return;
    if (psi->rank() != 2 || psi->axis(0) != g.axes[0] || psi->axis(1) != g.axes[1])
        throw ShapeError("psi must be sampled on the (x1, x2) chart");
    const SampledField e = extend_along_v(fractional_exp(*psi, g.order), g.axes[2]);
    g.g1 = -e;
    g.g2 = -e;
    g.aux["psi"] = *psi;
}

std::vector<std::uint8_t> terminal_nodes(const DMetric& g) {
    std::vector<std::uint8_t> out(g.size(), 0);
    const Grid1D& v = g.axes[2];
    const double a = g.order.has_terminal(2) ? g.order.terminal(2) : v.terminal();
    if (g.order.integer() || v.front() != a) return out;
    for (std::size_t i = 0; i < out.size(); i += v.size()) out[i] = 1;
    return out;
}

void finish(DMetric& g) {
    if (g.singular.empty()) g.singular.assign(g.size(), 0);
    for (SampledField* f : {&g.g1, &g.g2, &g.h3, &g.h4, &g.w1, &g.w2, &g.n1, &g.n2})
        for (std::size_t i = 0; i < f->size(); ++i)
            if (!std::isfinite((*f)[i])) {
                (*f)[i] = 0.0;
                g.singular[i] = 1;
            }
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t a = 0; a < 4; ++a)
            if (!(std::fabs(g.coeff(a)[i]) > kNonzeroTol)) g.singular[i] = 1;
    g.record_signs();
    g.validate();
}

SampledField sqrt_abs(const SampledField& f) {
    return f.map([](double x) { return std::sqrt(std::fabs(x)); });
}

// h3 for h4 = P (q + eps s).
SampledField rotoid_h3(const DMetric& g, const SampledField& h4, RotoidH3 form) {
    const FracOrder& o = g.order;
    if (form == RotoidH3::Exact) {
        const SampledField bv = partial(sqrt_abs(h4), 2, o, g.scheme);
        return -4.0 * bv * bv;
    }
    // -4 [(sqrt|P q|)*]^2 [1 + eps (s / sqrt|P q|)* / (sqrt|P q|)*]
    const SampledField& P = g.aux.at("polarization");
    const SampledField rq = sqrt_abs(P * g.aux.at("q"));
    const SampledField rqv = partial(rq, 2, o, g.scheme);
    const SampledField corr = partial(g.aux.at("eps_s") / rq, 2, o, g.scheme);
    SampledField out(g.axes, 0.0);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = -4.0 * rqv[i] * rqv[i] * (1.0 + corr[i] / rqv[i]);
    return out;
}

DMetric rescale(const DMetric& g0, const SampledField& factor, RotoidH3 form, const char* name) {
    for (double x : factor.values())
        if (!(x > 0.0)) throw DomainError(std::string(name) + " must be positive on the grid");
    DMetric g = g0;
    g.h4 = factor * g0.h4;
    if (g.aux.count("polarization")) g.aux["polarization"] = factor * g.aux.at("polarization");
    else g.aux["polarization"] = factor;
    g.h3 = rotoid_h3(g, g.h4, form);
    g.singular = terminal_nodes(g);
    finish(g);
    return g;
}

}  // namespace

double varpi2(double mu0, double eps, double r) { return 1.0 - 2.0 * mu0 / r + eps / (r * r); }

std::vector<double> horizon_radii(double mu0, double eps) {
    // r^2 - 2 mu0 r + eps = 0
    const double disc = mu0 * mu0 - eps;
    if (disc < 0.0) return {};
    const double s = std::sqrt(disc);
    std::vector<double> out;
    for (double r : {mu0 - s, mu0 + s})
        if (r > 0.0 && (out.empty() || r != out.back())) out.push_back(r);
    return out;
}

Grid1D PrimeData::xi_grid() const { return Grid1D(xi, xi.front()); }

double PrimeData::xi_at(double rr) const { return xi_between(mu0, eps, measure, r.front(), rr); }

PrimeData prime_schwarzschild(double mu0, double eps, const Grid1D& r_grid, const PrimeOptions& opt) {
    if (!(mu0 > 0.0)) throw DomainError("mu0 must be positive");
    if (!(eps >= 0.0 && eps < 1.0)) throw DomainError("eps must lie in [0, 1)");
    if (r_grid.size() < 2) throw ShapeError("radial grid needs at least 2 nodes");
    if (!(r_grid.front() > 0.0)) throw DomainError("radial nodes must be positive");
    check_no_horizon(mu0, eps, r_grid.front(), r_grid.back(), opt.excision_margin, r_grid.nodes());
    PrimeData p;
    p.mu0 = mu0;
    p.eps = eps;
    p.measure = opt.xi;
    p.r = r_grid.nodes();
    p.xi.assign(p.r.size(), 0.0);
    p.varpi2.resize(p.r.size());
    for (std::size_t i = 0; i < p.r.size(); ++i) {
        p.varpi2[i] = varpi2(mu0, eps, p.r[i]);
        if (i > 0) p.xi[i] = p.xi[i - 1] + xi_between(mu0, eps, opt.xi, p.r[i - 1], p.r[i]);
    }
    return p;
}

Grid1D radii_uniform_in_xi(double mu0, double eps, double r_lo, double r_hi, std::size_t n, XiMeasure measure) {
    if (n < 2 || !(r_hi > r_lo)) throw DomainError("need r_lo < r_hi and at least 2 nodes");
    const double total = xi_between(mu0, eps, measure, r_lo, r_hi);
    std::vector<double> r(n);
    r.front() = r_lo;
    r.back() = r_hi;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double target = total * static_cast<double>(i) / static_cast<double>(n - 1);
        auto f = [&](double x) { return xi_between(mu0, eps, measure, r_lo, x) - target; };
        std::uintmax_t it = 100;
        const auto br = boost::math::tools::toms748_solve(f, r[i - 1], r_hi, f(r[i - 1]), f(r_hi),
                                                          boost::math::tools::eps_tolerance<double>(50), it);
        r[i] = 0.5 * (br.first + br.second);
    }
    return Grid1D(r, r_lo);
}

DMetric prime_metric(const PrimeData& p, const Grid1D& theta, const Grid1D& phi, const FracOrder& ord) {
    check_theta(theta);
    DMetric g;
    g.axes = {p.xi_grid(), theta, phi};
    g.order = ord;
    g.g1 = SampledField(g.axes, -1.0);
    g.g2 = slice_r(g.axes, [&](std::size_t i, double, double) { return -p.r[i] * p.r[i]; });
    g.h3 = slice_r(g.axes, [&](std::size_t i, double t, double) {
        const double s = std::sin(t);
        return -p.r[i] * p.r[i] * s * s;
    });
    g.h4 = slice_r(g.axes, [&](std::size_t i, double, double) { return p.varpi2[i]; });
    for (SampledField* f : {&g.w1, &g.w2, &g.n1, &g.n2}) *f = SampledField(g.axes, 0.0);
    g.singular.assign(g.size(), 0);
    g.record_signs();
    g.validate();
    return g;
}

DMetric fractional_deformation(const PrimeData& p, const Grid1D& theta, const Grid1D& phi, const DeformationData& d,
                               const FracOrder& ord) {
    if (d.h0 != 2.0) throw PreconditionError("vacuum deformations need 0h = 2");
    if (d.eta4.has_value() == d.b.has_value()) throw PreconditionError("give exactly one of eta4 or b");
    const DMetric prime = prime_metric(p, theta, phi, ord);
    DMetric g = prime;
    g.aux.clear();
    if (d.eta4) {
        require_grid(*d.eta4, g.axes, "eta4");
        g.h4 = *d.eta4 * prime.h4;
    } else {
        require_grid(*d.b, g.axes, "b");
        g.h4 = *d.b * *d.b;
    }
    g.singular = terminal_nodes(g);
    if (d.eta3) {
        require_grid(*d.eta3, g.axes, "eta3");
        g.h3 = *d.eta3 * prime.h3;
    } else {
        const SampledField bv = partial(sqrt_abs(g.h4), 2, ord, g.scheme);
        for (std::size_t i = 0; i < bv.size(); ++i)
            if (!g.singular[i] && !(std::fabs(bv[i]) > kNonzeroTol))
                throw PreconditionError("deformation needs b* != 0 (node " + std::to_string(i) + ")");
        g.h3 = -(d.h0 * d.h0) * bv * bv;
    }
    set_g_from_psi(g, d.psi);
    set_n_data(g, d.n);
    g.aux["eta1"] = g.g1 / prime.g1;
    g.aux["eta2"] = g.g2 / prime.g2;
    g.aux["eta3"] = g.h3 / prime.h3;
    g.aux["eta4"] = g.h4 / prime.h4;
    finish(g);
    return g;
}

double rotoid_h4(const PrimeData& p, const RotoidData& rot, double r, double theta, double phi) {
    const double mu = p.mu0 + (rot.mu1 ? rot.mu1(r, theta, phi) : 0.0);
    if (!(std::fabs(mu) > kNonzeroTol)) throw DomainError("rotoid mass mu = mu0 + mu1 vanishes");
    const double q0 = rot.q0 ? rot.q0(r) : 4.0 * p.mu0 * p.mu0;
    const double q = 1.0 - 2.0 * mu / r;
    const double s = q0 / (4.0 * mu * mu) * std::sin(rot.omega0 * phi + rot.phi0);
    return q + p.eps * s;
}

DMetric rotoid_metric(const PrimeData& p, const Grid1D& theta, const Grid1D& phi, const RotoidData& rot,
                      const FracOrder& ord, const RotoidOptions& opt) {
    if (!(p.eps < 1.0)) throw DomainError("rotoid eccentricity must be below 1");
    check_theta(theta);
    DMetric g;
    g.axes = {p.xi_grid(), theta, phi};
    g.order = ord;
    const SampledField q = slice_r(g.axes, [&](std::size_t i, double t, double f) {
        return 1.0 - 2.0 * (p.mu0 + (rot.mu1 ? rot.mu1(p.r[i], t, f) : 0.0)) / p.r[i];
    });
    const SampledField h4 = slice_r(g.axes, [&](std::size_t i, double t, double f) { return rotoid_h4(p, rot, p.r[i], t, f); });
    g.h4 = h4;
    g.aux["q"] = q;
    g.aux["eps_s"] = h4 - q;
    g.aux["polarization"] = SampledField(g.axes, 1.0);
    g.g1 = SampledField(g.axes, -1.0);
    g.g2 = SampledField(g.axes, -1.0);
    set_g_from_psi(g, opt.psi);
    set_n_data(g, opt.n);
    g.h3 = rotoid_h3(g, h4, opt.h3);
    g.singular = terminal_nodes(g);
    finish(g);
    for (const auto& [k, v] : rotoid_n_conditions(g))
        if (!(v <= opt.n_tolerance))
            throw PreconditionError("rotoid N-connection violates the " + k + " condition by " + fmt(v));
    return g;
}

std::map<std::string, double> rotoid_n_conditions(const DMetric& g, const ResidualOptions& ropt) {
    const FracOrder& o = g.order;
    std::vector<std::uint8_t> mask = boundary_mask(g.axes, ropt);
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (!g.singular.empty() && g.singular[i]) mask[i] = 1;
    const SampledField curl = partial(g.w2, 0, o, g.scheme) - partial(g.w1, 1, o, g.scheme);
    const SampledField w1v = partial(g.w1, 2, o, g.scheme), w2v = partial(g.w2, 2, o, g.scheme);
    std::map<std::string, double> out;
    if (std::max(masked_max(w1v, mask), masked_max(w2v, mask)) <= kNonzeroTol) {
        out["w"] = masked_max(curl, mask);
    } else {
        // w1 w2 (ln|w1/w2|)* = w2. - w1'
        SampledField lr(g.axes, 0.0);
        for (std::size_t i = 0; i < lr.size(); ++i) lr[i] = std::log(std::fabs(g.w1[i] / g.w2[i]));
        out["w"] = masked_max(g.w1 * g.w2 * partial(lr, 2, o, g.scheme) - curl, mask);
    }
    out["n"] = masked_max(partial(g.n1, 1, o, g.scheme) - partial(g.n2, 0, o, g.scheme), mask);
    const SampledField nv = partial(g.n1, 2, o, g.scheme);
    out["n_v"] = std::max(masked_max(nv, mask), masked_max(partial(g.n2, 2, o, g.scheme), mask));
    return out;
}

double rotoid_horizon_formula(const PrimeData& p, const RotoidData& rot, double phi) {
    const double q0 = rot.q0 ? rot.q0(2.0 * p.mu0) : 4.0 * p.mu0 * p.mu0;
    const double k = q0 / (4.0 * p.mu0 * p.mu0);
    return 2.0 * p.mu0 / (1.0 + p.eps * k * std::sin(rot.omega0 * phi + rot.phi0));
}

double rotoid_horizon(const PrimeData& p, const RotoidData& rot, double theta, double phi, double r_lo, double r_hi,
                      std::size_t samples) {
    if (samples < 2 || !(r_hi > r_lo) || !(r_lo > 0.0)) throw DomainError("invalid radial search interval");
    auto f = [&](double r) { return rotoid_h4(p, rot, r, theta, phi); };
    double a = r_lo, fa = f(a);
    for (std::size_t i = 1; i < samples; ++i) {
        const double b = r_lo + (r_hi - r_lo) * static_cast<double>(i) / static_cast<double>(samples - 1);
        const double fb = f(b);
        if (fa == 0.0) return a;
        if ((fa < 0) != (fb < 0)) {
            std::uintmax_t it = 200;
            const auto br = boost::math::tools::toms748_solve(f, a, b, fa, fb,
                                                              boost::math::tools::eps_tolerance<double>(52), it);
            return 0.5 * (br.first + br.second);
        }
        a = b;
        fa = fb;
    }
    throw HorizonError("h4 has no zero on [" + fmt(r_lo) + ", " + fmt(r_hi) + "] at phi = " + fmt(phi),
                       std::nan(""));
}

std::vector<HorizonPoint> horizon_curve(const PrimeData& p, const RotoidData& rot, double theta,
                                        const std::vector<double>& phis, double r_lo, double r_hi) {
    std::vector<HorizonPoint> out;
    for (double ph : phis)
        out.push_back({ph, rotoid_horizon(p, rot, theta, ph, r_lo, r_hi), rotoid_horizon_formula(p, rot, ph)});
    return out;
}

namespace {

struct Stencil {
    std::size_t n1 = 0, n2 = 1, nv = 0;
    double h1 = 1, h2 = 1, hv = 1;
    bool three_d = false;
    std::size_t id(std::size_t i, std::size_t j, std::size_t k) const { return (i * n2 + j) * nv + k; }
    bool interior(std::size_t i, std::size_t j, std::size_t k) const {
        const bool in2 = !three_d || (j >= 1 && j + 1 < n2);
        return i >= 1 && i + 1 < n1 && in2 && k >= 2 && k + 2 < nv;
    }
};

double uniform_step(const Grid1D& g, const char* name) {
    const double h = (g.back() - g.front()) / static_cast<double>(g.size() - 1);
    for (std::size_t i = 1; i < g.size(); ++i)
        if (std::fabs(g[i] - g[i - 1] - h) > 1e-9 * std::max(1.0, std::fabs(h)))
            throw ShapeError(std::string("solitonic equation needs a uniform ") + name + " grid");
    return h;
}

Stencil stencil_for(const SampledField& eta) {
    Stencil s;
    if (eta.rank() != 2 && eta.rank() != 3) throw ShapeError("solitonic eta lives on (x1, v) or (x1, x2, v)");
    s.three_d = eta.rank() == 3;
    const Grid1D& gx = eta.axis(0);
    const Grid1D& gv = eta.axis(eta.rank() - 1);
    s.n1 = gx.size();
    s.nv = gv.size();
    if (s.n1 < 3 || gv.size() < 5) throw ShapeError("solitonic grid needs 3 x-nodes and 5 v-nodes");
    s.h1 = uniform_step(gx, "x1");
    s.hv = uniform_step(gv, "v");
    if (s.three_d) {
        s.n2 = eta.axis(1).size();
        if (s.n2 < 3) throw ShapeError("solitonic grid needs 3 x2-nodes");
        s.h2 = uniform_step(eta.axis(1), "x2");
    }
    return s;
}

double residual_at(const Stencil& s, const std::vector<double>& e, double ep, std::size_t i, std::size_t j,
                   std::size_t k) {
    const double c = e[s.id(i, j, k)];
    // Differences from the centre value keep constants exactly stationary.
    auto d = [&](std::size_t ii, std::size_t jj, std::size_t kk) { return e[s.id(ii, jj, kk)] - c; };
    const double exx = (d(i + 1, j, k) + d(i - 1, j, k)) / (s.h1 * s.h1);
    const double ev4 = ((d(i, j, k + 2) + d(i, j, k - 2)) - 4.0 * (d(i, j, k + 1) + d(i, j, k - 1))) / std::pow(s.hv, 4);
    auto dsq = [&](std::size_t kk) {
        const double x = e[s.id(i, j, kk)];
        return (x - c) * (x + c);
    };
    // 6 (eta eta*)* = 3 (eta^2)**
    const double nl = 3.0 * (dsq(k + 1) + dsq(k - 1)) / (s.hv * s.hv);
    double mixed = 0.0;
    if (s.three_d)
        mixed = ((d(i, j + 1, k + 1) - d(i, j + 1, k - 1)) - (d(i, j - 1, k + 1) - d(i, j - 1, k - 1))) /
                (4.0 * s.h2 * s.hv);
    return exx + ep * (mixed + nl + ev4);
}

}  // namespace

SampledField solitonic_residual(const SampledField& eta, double eps_sign) {
    const Stencil s = stencil_for(eta);
    eta.validate();
    SampledField out(eta.axes(), 0.0);
    for (std::size_t i = 0; i < s.n1; ++i)
        for (std::size_t j = 0; j < s.n2; ++j)
            for (std::size_t k = 0; k < s.nv; ++k)
                if (s.interior(i, j, k)) out[s.id(i, j, k)] = residual_at(s, eta.values(), eps_sign, i, j, k);
    return out;
}

SampledField solitonic_eta(const SampledField& initial, const SolitonOptions& opt) {
    const Stencil s = stencil_for(initial);
    initial.validate();
    if (std::fabs(opt.eps_sign) != 1.0) throw DomainError("solitonic sign must be +1 or -1");
    const double ep = opt.eps_sign;
    std::vector<double> e = initial.values();
    const std::size_t n = e.size();
    std::vector<double> history;

    auto max_res = [&](Eigen::VectorXd* r, double* l2 = nullptr) {
        double m = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < s.n1; ++i)
            for (std::size_t j = 0; j < s.n2; ++j)
                for (std::size_t k = 0; k < s.nv; ++k) {
                    if (!s.interior(i, j, k)) continue;
                    const double v = residual_at(s, e, ep, i, j, k);
                    if (r) (*r)[static_cast<Eigen::Index>(s.id(i, j, k))] = v;
                    m = std::max(m, std::fabs(v));
                    sq += v * v;
                }
        if (l2) *l2 = sq;
        return m;
    };

    const double h4 = std::pow(s.hv, 4), hv2 = s.hv * s.hv, h12 = s.h1 * s.h1;
    for (std::size_t it = 0;; ++it) {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        double l2 = 0.0;
        const double m = max_res(&r, &l2);
        history.push_back(m);
        if (!std::isfinite(m)) break;
        if (m <= opt.tolerance) return SampledField(initial.axes(), e);
        if (it == opt.max_iterations) break;

        std::vector<Eigen::Triplet<double>> trip;
        for (std::size_t i = 0; i < s.n1; ++i)
            for (std::size_t j = 0; j < s.n2; ++j)
                for (std::size_t k = 0; k < s.nv; ++k) {
                    const int row = static_cast<int>(s.id(i, j, k));
                    if (!s.interior(i, j, k)) {
                        trip.emplace_back(row, row, 1.0);
                        continue;
                    }
                    auto add = [&](std::size_t ii, std::size_t jj, std::size_t kk, double w) {
                        trip.emplace_back(row, static_cast<int>(s.id(ii, jj, kk)), w);
                    };
                    add(i + 1, j, k, 1.0 / h12);
                    add(i - 1, j, k, 1.0 / h12);
                    add(i, j, k, -2.0 / h12 + ep * (6.0 / h4 - 12.0 * e[s.id(i, j, k)] / hv2));
                    add(i, j, k + 1, ep * (-4.0 / h4 + 6.0 * e[s.id(i, j, k + 1)] / hv2));
                    add(i, j, k - 1, ep * (-4.0 / h4 + 6.0 * e[s.id(i, j, k - 1)] / hv2));
                    add(i, j, k + 2, ep / h4);
                    add(i, j, k - 2, ep / h4);
                    if (s.three_d) {
                        const double c = ep / (4.0 * s.h2 * s.hv);
                        add(i, j + 1, k + 1, c);
                        add(i, j + 1, k - 1, -c);
                        add(i, j - 1, k + 1, -c);
                        add(i, j - 1, k - 1, c);
                    }
                }
        Eigen::SparseMatrix<double> J(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        J.setFromTriplets(trip.begin(), trip.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(J);
        if (lu.info() != Eigen::Success) throw SolverError("solitonic Jacobian factorization failed", history);
        const Eigen::VectorXd d = lu.solve(-r);
        // Backtrack until the residual decreases.
        const std::vector<double> base = e;
        double step = opt.damping;
        for (int k = 0; k < 30; ++k, step *= 0.5) {
            for (std::size_t q = 0; q < n; ++q) e[q] = base[q] + step * d[static_cast<Eigen::Index>(q)];
            double trial = 0.0;
            max_res(nullptr, &trial);
            if (trial < l2) break;
        }
    }
    throw SolverError("solitonic relaxation did not reach residual " + fmt(opt.tolerance), history);
}

SampledField on_metric_grid(const SampledField& f, const std::vector<Grid1D>& axes) {
    if (f.rank() == 3) {
        if (f.axes() != axes) throw ShapeError("field is not sampled on the metric grid");
        return f;
    }
    if (f.rank() != 2 || f.axis(0) != axes[0] || f.axis(1) != axes[2])
        throw ShapeError("expected a field over (x1, v) matching the metric grid");
    SampledField out(axes, 0.0);
    const std::size_t n2 = axes[1].size(), nv = axes[2].size();
    for (std::size_t i = 0; i < axes[0].size(); ++i)
        for (std::size_t j = 0; j < n2; ++j)
            for (std::size_t k = 0; k < nv; ++k) out[(i * n2 + j) * nv + k] = f[i * nv + k];
    return out;
}

DMetric solitonic_rotoid(const DMetric& g_rot, const SampledField& eta, RotoidH3 h3) {
    return rescale(g_rot, on_metric_grid(eta, g_rot.axes), h3, "solitonic eta");
}

SeriesSolution oscillator_series(const SampledField& z1, const SampledField& z2, const FracOrder& ord, double c1,
                                 double c2, const SeriesOptions& opt) {
    if (z1.rank() != 1 || !z1.same_grid(z2)) throw ShapeError("z1 and z2 must share a 1-D v grid");
    if (opt.order < 1) throw DomainError("series truncation order must be at least 1");
    z1.validate();
    z2.validate();
    for (double x : z1.values())
        if (!(std::fabs(x) > kNonzeroTol)) throw DomainError("z1 vanishes on the grid");
    const Grid1D& v = z1.axis(0);
    const double v1 = ord.has_terminal(0) ? ord.terminal(0) : v.terminal();
    const FracOrder o(ord.alpha(), {v1});
    const Grid1D ve = v.with_terminal(v1);

    SeriesSolution out;
    out.c1 = c1;
    out.c2 = c2;
    out.v1 = v1;
    SampledField sum(z1.axes(), 0.0);
    SampledField gp = z2 / z1;
    std::size_t growing = 0;
    for (std::size_t p = 0; p <= opt.order; ++p) {
        if (p > 0) {
            SampledField d = rl_derivative_axis(SampledField({ve}, gp.values()), 0, o.alpha(), opt.scheme);
            // D g is singular at the terminal when g(v1) != 0; that node is dropped from the quadrature.
            if (v.front() == v1 && std::isinf(d[0])) d[0] = 0.0;
            gp = SampledField(z1.axes(), d.values()) / z1;
        }
        const SampledField term = integral(gp, 0, o);
        double tn = 0.0;
        bool finite = true;
        for (double x : term.values()) {
            finite = finite && std::isfinite(x);
            tn = std::max(tn, std::fabs(x));
        }
        out.term_norms.push_back(finite ? tn : INFINITY);
        if (!finite) throw DivergenceError("oscillator series term " + std::to_string(p) + " is not finite",
                                           out.term_norms);
        sum = p % 2 ? sum - term : sum + term;
        double sn = 0.0;
        for (double x : sum.values()) sn = std::max(sn, std::fabs(x));
        out.ratios.push_back(sn > 0.0 ? tn / sn : 0.0);
        if (p > 0 && tn <= opt.rel_tolerance * sn) break;
        if (p > 0 && tn > out.term_norms[p - 1]) {
            if (++growing >= opt.growth_limit)
                throw DivergenceError("oscillator series terms grew " + std::to_string(growing) + " times in a row",
                                      out.term_norms);
        } else {
            growing = 0;
        }
    }
    out.rho = sum;
    for (std::size_t k = 0; k < v.size(); ++k) out.rho[k] += c1 * (v[k] - v1) + c2;
    return out;
}

SampledField oscillator_residual(const SeriesSolution& s, const SampledField& z1, const SampledField& z2,
                                 const FracOrder& ord, Scheme scheme) {
    const FracOrder o(ord.alpha(), {s.v1});
    const SampledField rv = partial(s.rho, 0, o, scheme);
    const Grid1D ve = rv.axis(0).with_terminal(s.v1);
    const SampledField d = rl_derivative_axis(SampledField({ve}, rv.values()), 0, o.alpha(), scheme);
    return SampledField(rv.axes(), d.values()) + z1 * rv - z2;
}

DMetric oscillator_embedded_metric(const DMetric& g_solrot, const SeriesSolution& rho, RotoidH3 h3) {
    if (rho.rho.rank() != 1 || rho.rho.axis(0).nodes() != g_solrot.axes[2].nodes())
        throw ShapeError("rho must be sampled on the metric v grid");
    SampledField f(g_solrot.axes, 0.0);
    const std::size_t nv = g_solrot.axes[2].size();
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = rho.rho[i % nv];
    return rescale(g_solrot, f, h3, "oscillator rho");
}

}  // namespace frgrav
