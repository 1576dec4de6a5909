#include <doctest.h>

#include <cmath>

#include "frgrav/blackholes.hpp"
#include "frgrav/errors.hpp"

using namespace frgrav;

namespace {

double max_abs(const SampledField& f) {
    double m = 0.0;
    for (double x : f.values()) m = std::max(m, std::fabs(x));
    return m;
}

double max_diff(const SampledField& a, const SampledField& b) { return max_abs(a - b); }

SampledField field(const std::vector<Grid1D>& ax, const std::function<double(double, double, double)>& f) {
    return SampledField::from_function(ax, [&](std::span<const double> x) { return f(x[0], x[1], x[2]); });
}

SampledField field2(const std::vector<Grid1D>& ax, const std::function<double(double, double)>& f) {
    return SampledField::from_function(ax, [&](std::span<const double> x) { return f(x[0], x[1]); });
}

SampledField line(const Grid1D& v, const std::function<double(double)>& f) {
    return SampledField::from_function({v}, [&](std::span<const double> x) { return f(x[0]); });
}

// Travelling KdV-type soliton eta = (k/2) sech^2(sqrt(k) s / 2), s = v - c x1 - d x2, k = c^2 + d.
double soliton(double s, double k) {
    const double q = 1.0 / std::cosh(std::sqrt(k) * s / 2.0);
    return k / 2.0 * q * q;
}

struct Setup {
    PrimeData p;
    Grid1D theta, phi;
};

Setup setup(double eps, std::size_t nr = 9, std::size_t nt = 9, std::size_t nv = 17) {
    return {prime_schwarzschild(1.0, eps, Grid1D::uniform(3.0, 6.0, nr)), Grid1D::uniform(0.5, 2.5, nt),
            Grid1D::uniform(0.0, 1.0, nv)};
}

}  // namespace

TEST_CASE("varpi and horizon roots") {
    CHECK(varpi2(1.0, 0.0, 4.0) == doctest::Approx(0.5).epsilon(1e-15));
    const auto r0 = horizon_radii(1.0, 0.0);
    REQUIRE(r0.size() == 1);
    CHECK(r0[0] == 2.0);
    const auto r1 = horizon_radii(1.0, 0.19);
    REQUIRE(r1.size() == 2);
    CHECK(r1[0] == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(r1[1] == doctest::Approx(1.9).epsilon(1e-14));
    CHECK(horizon_radii(1.0, 2.0).empty());
}

TEST_CASE("xi by quadrature") {
    // Frozen from 30-digit adaptive quadrature of |1 - 2/r + eps/r^2|^(1/2) and its reciprocal.
    const PrimeData lit = prime_schwarzschild(1.0, 0.01, Grid1D(std::vector<double>{2.5, 3.0}, 2.5));
    CHECK(lit.xi[1] - lit.xi[0] == doctest::Approx(0.26013238884019744).epsilon(1e-13));
    CHECK(lit.xi_at(3.0) == doctest::Approx(0.26013238884019744).epsilon(1e-13));
    PrimeOptions opt;
    opt.xi = XiMeasure::Proper;
    const PrimeData pr = prime_schwarzschild(1.0, 0.0, Grid1D(std::vector<double>{2.5, 3.0}, 2.5), opt);
    CHECK(pr.xi[1] == doctest::Approx(0.96855106562459226).epsilon(1e-13));

    const PrimeData p = prime_schwarzschild(1.0, 0.0, Grid1D::uniform(2.2, 10.0, 40));
    for (std::size_t i = 1; i < p.xi.size(); ++i) {
        CHECK(p.xi[i] > p.xi[i - 1]);
        CHECK(p.varpi2[i] == doctest::Approx(1.0 - 2.0 / p.r[i]).epsilon(1e-15));
    }
}

TEST_CASE("radii uniform in xi") {
    const Grid1D r = radii_uniform_in_xi(1.0, 0.0, 2.2, 6.0, 12);
    const PrimeData p = prime_schwarzschild(1.0, 0.0, r);
    const double h = p.xi.back() / 11.0;
    for (std::size_t i = 0; i < 12; ++i) CHECK(p.xi[i] == doctest::Approx(h * static_cast<double>(i)).epsilon(1e-10));
}

TEST_CASE("horizon excision") {
    try {
        prime_schwarzschild(1.0, 0.0, Grid1D::uniform(1.5, 3.0, 8));
        FAIL("expected HorizonError");
    } catch (const HorizonError& e) {
        CHECK(e.root == 2.0);
    }
    CHECK_THROWS_AS(prime_schwarzschild(1.0, 0.0, Grid1D::uniform(2.05, 3.0, 8)), HorizonError);
    PrimeOptions loose;
    loose.excision_margin = 0.01;
    CHECK_NOTHROW(prime_schwarzschild(1.0, 0.0, Grid1D::uniform(2.05, 3.0, 8), loose));
    CHECK_THROWS_AS(prime_schwarzschild(1.0, 1.0, Grid1D::uniform(3.0, 4.0, 4)), DomainError);
    CHECK_THROWS_AS(prime_schwarzschild(0.0, 0.0, Grid1D::uniform(3.0, 4.0, 4)), DomainError);
}

TEST_CASE("prime metric coefficients") {
    const Setup s = setup(0.0);
    const DMetric g = prime_metric(s.p, s.theta, s.phi, FracOrder(1.0));
    CHECK(g.signs == std::array<int, 4>{-1, -1, -1, 1});
    const std::size_t nt = s.theta.size(), nv = s.phi.size();
    for (std::size_t i = 0; i < s.p.r.size(); ++i)
        for (std::size_t j = 0; j < nt; ++j) {
            const std::size_t id = (i * nt + j) * nv + 3;
            const double r = s.p.r[i], st = std::sin(s.theta[j]);
            CHECK(g.g2[id] == -r * r);
            CHECK(g.h3[id] == doctest::Approx(-r * r * st * st).epsilon(1e-15));
            CHECK(g.h4[id] == doctest::Approx(1.0 - 2.0 / r).epsilon(1e-15));
        }
    CHECK(max_abs(g.w1) == 0.0);
    CHECK(max_abs(g.n2) == 0.0);
    CHECK_THROWS_AS(prime_metric(s.p, Grid1D::uniform(0.0, 1.0, 5), s.phi, FracOrder(1.0)), DomainError);
}

TEST_CASE("prime schwarzschild christoffels at integer order") {
    PrimeOptions opt;
    opt.xi = XiMeasure::Proper;
    const Grid1D r = radii_uniform_in_xi(1.0, 0.0, 2.2, 6.0, 32, XiMeasure::Proper);
    const PrimeData p = prime_schwarzschild(1.0, 0.0, r, opt);
    const Grid1D th = Grid1D::uniform(0.4, 2.7, 20), ph = Grid1D::uniform(0.0, 1.0, 9);
    const DMetric g = prime_metric(p, th, ph, FracOrder(1.0));
    const auto G = canonical_dconnection(g);
    const auto mask = boundary_mask(g.axes, {});
    double err = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = 0; j < th.size(); ++j)
            for (std::size_t k = 0; k < ph.size(); ++k) {
                const std::size_t id = (i * th.size() + j) * ph.size() + k;
                if (mask[id]) continue;
                const double R = p.r[i], rx = std::sqrt(p.varpi2[i]);
                err = std::max(err, std::fabs(G.at(0, 1, 1, id) + R * rx));
                err = std::max(err, std::fabs(G.at(2, 2, 0, id) - rx / R));
                err = std::max(err, std::fabs(G.at(3, 3, 0, id) - rx / (R * R * p.varpi2[i])));
            }
    CHECK(err < 1e-7);
}

TEST_CASE("identity deformation recovers the prime metric") {
    const Setup s = setup(0.0);
    const DMetric g0 = prime_metric(s.p, s.theta, s.phi, FracOrder(0.7));
    DeformationData d;
    d.eta4 = SampledField(g0.axes, 1.0);
    d.eta3 = SampledField(g0.axes, 1.0);
    const DMetric g = fractional_deformation(s.p, s.theta, s.phi, d, FracOrder(0.7));
    CHECK(max_diff(g.g1, g0.g1) == 0.0);
    CHECK(max_diff(g.g2, g0.g2) == 0.0);
    CHECK(max_diff(g.h3, g0.h3) == 0.0);
    CHECK(max_diff(g.h4, g0.h4) == 0.0);
    CHECK(max_diff(g.aux.at("eta1"), SampledField(g.axes, 1.0)) == 0.0);
    CHECK(max_diff(g.aux.at("eta4"), SampledField(g.axes, 1.0)) == 0.0);
}

TEST_CASE("deformation through b") {
    const Setup s = setup(0.0);
    const FracOrder one(1.0);
    const std::vector<Grid1D> ax = {s.p.xi_grid(), s.theta, s.phi};
    // b = (1 + v) varpi gives h4 = (1 + v)^2 varpi^2 and h3 = -4 varpi^2.
    DeformationData d;
    d.b = field(ax, [&](double, double, double v) { return 1.0 + v; });
    std::size_t nr = s.p.r.size(), nt = s.theta.size(), nv = s.phi.size();
    for (std::size_t i = 0; i < d.b->size(); ++i) (*d.b)[i] *= std::sqrt(s.p.varpi2[i / (nt * nv)]);
    d.psi = SampledField({ax[0], ax[1]}, 0.0);
    const DMetric g = fractional_deformation(s.p, s.theta, s.phi, d, one);
    const DMetric g0 = prime_metric(s.p, s.theta, s.phi, one);
    for (std::size_t i = 0; i < nr; ++i) {
        const std::size_t id = (i * nt + 2) * nv + 5;
        CHECK(g.h3[id] == doctest::Approx(-4.0 * s.p.varpi2[i]).epsilon(1e-10));
        // |eta3| = 4 (b*)^2 / |h3 prime|
        CHECK(std::fabs(g.aux.at("eta3")[id]) ==
              doctest::Approx(4.0 * s.p.varpi2[i] / std::fabs(g0.h3[id])).epsilon(1e-10));
    }
    CHECK(max_diff(g.g1, SampledField(ax, -1.0)) == 0.0);
    const auto rep = reduced_residuals(g, SourceSpec::zero(ax));
    CHECK(rep.max_abs() < 1e-8);

    DeformationData bad = d;
    bad.eta4 = SampledField(ax, 1.0);
    CHECK_THROWS_AS(fractional_deformation(s.p, s.theta, s.phi, bad, one), PreconditionError);
    DeformationData h0 = d;
    h0.h0 = 1.0;
    CHECK_THROWS_AS(fractional_deformation(s.p, s.theta, s.phi, h0, one), PreconditionError);
    DeformationData flat;
    flat.b = SampledField(ax, 0.5);
    CHECK_THROWS_AS(fractional_deformation(s.p, s.theta, s.phi, flat, one), PreconditionError);
}

TEST_CASE("rotoid coefficients") {
    const Setup s = setup(0.0);
    RotoidData rot;
    rot.mu1 = [](double, double, double phi) { return 0.1 * std::sin(phi); };
    const DMetric g = rotoid_metric(s.p, s.theta, s.phi, rot, FracOrder(1.0));
    const std::size_t nt = s.theta.size(), nv = s.phi.size();
    for (std::size_t i = 0; i < s.p.r.size(); ++i)
        for (std::size_t k = 0; k < nv; ++k) {
            const std::size_t id = (i * nt + 1) * nv + k;
            CHECK(g.h4[id] == doctest::Approx(1.0 - 2.0 * (1.0 + 0.1 * std::sin(s.phi[k])) / s.p.r[i]).epsilon(1e-15));
        }
    CHECK(max_abs(g.aux.at("eps_s")) == 0.0);
    RotoidOptions lin;
    lin.h3 = RotoidH3::Linearized;
    const DMetric gl = rotoid_metric(s.p, s.theta, s.phi, rot, FracOrder(1.0), lin);
    CHECK(max_diff(gl.h3, g.h3) < 1e-14);

    const Setup e = setup(0.1, 25);
    const DMetric ge = rotoid_metric(e.p, e.theta, e.phi, RotoidData{}, FracOrder(1.0));
    const std::size_t id = 4 * nt * nv + 3;
    CHECK(ge.h4[id] == doctest::Approx(1.0 - 2.0 / e.p.r[4] + 0.1 * std::sin(e.phi[3])).epsilon(1e-15));
    const auto rep = reduced_residuals(ge, SourceSpec::zero(ge.axes));
    CHECK(rep.max_abs() < 1e-5);

    RotoidData zero;
    zero.mu1 = [](double, double, double) { return -1.0; };
    CHECK_THROWS_AS(rotoid_metric(s.p, s.theta, s.phi, zero, FracOrder(1.0)), DomainError);
}

TEST_CASE("rotoid n-connection conditions") {
    const Setup s = setup(0.05);
    const std::vector<Grid1D> chart = {s.p.xi_grid(), s.theta};
    RotoidOptions opt;
    // n1' = x1 = n2.
    opt.n.n1 = field2(chart, [](double x, double y) { return x * y; });
    opt.n.n2 = field2(chart, [](double x, double) { return 0.5 * x * x; });
    const DMetric g = rotoid_metric(s.p, s.theta, s.phi, RotoidData{}, FracOrder(1.0), opt);
    CHECK(rotoid_n_conditions(g).at("n") < 1e-10);
    opt.n.n2 = field2(chart, [](double x, double) { return x; });
    CHECK_THROWS_AS(rotoid_metric(s.p, s.theta, s.phi, RotoidData{}, FracOrder(1.0), opt), PreconditionError);
    opt.n = {};
    opt.n.n1 = SampledField({s.p.xi_grid(), s.theta, s.phi}, 0.0);
    CHECK_THROWS_AS(rotoid_metric(s.p, s.theta, s.phi, RotoidData{}, FracOrder(1.0), opt), ShapeError);
}

TEST_CASE("rotoid horizon") {
    const PrimeData p = prime_schwarzschild(1.0, 0.1, Grid1D::uniform(3.0, 6.0, 4));
    RotoidData rot;
    const double rp = rotoid_horizon(p, rot, 1.0, M_PI / 2.0, 1.0, 4.0);
    CHECK(rp / 2.0 == doctest::Approx(1.0 / 1.1).epsilon(1e-14));
    const auto curve = horizon_curve(p, rot, 1.0, {0.0, 0.7, 2.0, 4.5}, 1.0, 4.0);
    for (const auto& h : curve) CHECK(h.r_plus == doctest::Approx(h.r_formula).epsilon(1e-13));
    CHECK_THROWS_AS(rotoid_horizon(p, rot, 1.0, 0.0, 3.0, 6.0), HorizonError);
}

TEST_CASE("solitonic residual vanishes on constants") {
    const Grid1D x = Grid1D::uniform(0.0, 1.0, 16), v = Grid1D::uniform(-3.0, 3.0, 20);
    CHECK(max_abs(solitonic_residual(SampledField({x, v}, 1.7), -1.0)) == 0.0);
    CHECK(max_abs(solitonic_residual(SampledField({x, x, v}, 0.3), 1.0)) == 0.0);
    const Grid1D bent(std::vector<double>{0.0, 0.1, 0.3, 0.6, 1.0}, 0.0);
    CHECK_THROWS_AS(solitonic_residual(SampledField({x, bent}, 1.0), -1.0), ShapeError);
}

TEST_CASE("solitonic residual of the travelling soliton is second order") {
    const double c = 1.2;
    double prev = 0.0;
    for (std::size_t n : {41, 81, 161}) {
        const Grid1D x = Grid1D::uniform(0.0, 1.0, n), v = Grid1D::uniform(-6.0, 6.0, n);
        const auto eta = SampledField::from_function({x, v}, [&](std::span<const double> a) {
            return soliton(a[1] - c * a[0], c * c);
        });
        const double r = max_abs(solitonic_residual(eta, -1.0));
        if (prev > 0.0) CHECK(prev / r > 3.5);
        prev = r;
    }
}

TEST_CASE("solitonic newton converges to the soliton") {
    const double c = 1.2;
    const Grid1D x = Grid1D::uniform(0.0, 1.0, 64), v = Grid1D::uniform(-5.0, 5.0, 64);
    const auto exact = SampledField::from_function({x, v}, [&](std::span<const double> a) {
        return soliton(a[1] - c * a[0], c * c);
    });
    const auto guess = SampledField::from_function({x, v}, [&](std::span<const double> a) {
        return soliton(a[1] - c * a[0], c * c) + 0.1 * std::sin(M_PI * a[0]) * std::exp(-a[1] * a[1]);
    });
    const SampledField eta = solitonic_eta(guess);
    CHECK(max_abs(solitonic_residual(eta, -1.0)) <= 1e-6);
    CHECK(max_diff(eta, exact) < 2e-3);

    const double d = 0.3;
    const Grid1D y = Grid1D::uniform(0.0, 1.0, 10), w = Grid1D::uniform(-5.0, 5.0, 36);
    const auto guess3 = SampledField::from_function({y, y, w}, [&](std::span<const double> a) {
        return soliton(a[2] - c * a[0] - d * a[1], c * c + d) +
               0.05 * std::sin(M_PI * a[0]) * std::sin(M_PI * a[1]) * std::exp(-a[2] * a[2]);
    });
    CHECK(max_abs(solitonic_residual(solitonic_eta(guess3), -1.0)) <= 1e-6);

    SolitonOptions few;
    few.max_iterations = 0;
    CHECK_THROWS_AS(solitonic_eta(guess, few), SolverError);
}

TEST_CASE("solitonic rotoid embedding") {
    const Setup s = setup(0.05, 25);
    const DMetric g = rotoid_metric(s.p, s.theta, s.phi, RotoidData{}, FracOrder(1.0));
    const SampledField one({g.axes[0], g.axes[2]}, 1.0);
    const DMetric same = solitonic_rotoid(g, one);
    CHECK(max_diff(same.h4, g.h4) == 0.0);
    CHECK(max_diff(same.h3, g.h3) == 0.0);
    CHECK(max_diff(same.n1, g.n1) == 0.0);

    const auto eta = field2({g.axes[0], g.axes[2]}, [](double x, double v) { return 1.0 + 0.1 * x * v; });
    const DMetric gs = solitonic_rotoid(g, eta);
    CHECK(gs.h4[7] == doctest::Approx(eta[7 % s.phi.size()] * g.h4[7]).epsilon(1e-15));
    CHECK(reduced_residuals(gs, SourceSpec::zero(gs.axes)).max_abs() < 1e-5);
    CHECK_THROWS_AS(solitonic_rotoid(g, SampledField({g.axes[0], g.axes[2]}, -1.0)), DomainError);
    CHECK_THROWS_AS(solitonic_rotoid(g, SampledField({g.axes[1], g.axes[2]}, 1.0)), ShapeError);
}

TEST_CASE("oscillator series") {
    const Grid1D v = Grid1D::uniform(0.0, 1.0, 101);
    SUBCASE("vanishing source") {
        const auto z1 = line(v, [](double) { return 2.0; });
        const auto s = oscillator_series(z1, SampledField({v}, 0.0), FracOrder(0.6, {0.0}), 0.5, 1.5);
        for (std::size_t k = 0; k < v.size(); ++k) CHECK(s.rho[k] == 0.5 * v[k] + 1.5);
        CHECK(s.last_term() == 0.0);
    }
    SUBCASE("integer order") {
        const auto z = line(v, [](double) { return 1.0; });
        const auto s = oscillator_series(z, z, FracOrder(1.0, {0.0}), 0.0, 0.0);
        for (std::size_t k = 0; k < v.size(); ++k) CHECK(s.rho[k] == doctest::Approx(v[k]).epsilon(1e-12));
        CHECK(max_abs(oscillator_residual(s, z, z, FracOrder(1.0, {0.0}))) < 1e-9);
    }
    SUBCASE("convergent fractional case") {
        const auto z1 = line(v, [](double) { return 10.0; });
        const auto z2 = line(v, [](double x) { return x * x * x * x; });
        const FracOrder o(0.5, {0.0});
        const auto s = oscillator_series(z1, z2, o, 0.0, 0.0);
        for (std::size_t p = 1; p < s.term_norms.size(); ++p) {
            CHECK(s.term_norms[p] < s.term_norms[p - 1]);
            CHECK(s.ratios[p] < 1.0);
        }
        const auto r = oscillator_residual(s, z1, z2, o);
        double m = 0.0;
        for (std::size_t k = 10; k < 91; ++k) m = std::max(m, std::fabs(r[k]));
        CHECK(m < 1e-4);
    }
    SUBCASE("divergent series is reported") {
        const auto z = line(v, [](double) { return 1.0; });
        CHECK_THROWS_AS(oscillator_series(z, z, FracOrder(0.6, {0.0}), 0.0, 0.0), DivergenceError);
    }
    CHECK_THROWS_AS(oscillator_series(SampledField({v}, 0.0), SampledField({v}, 1.0), FracOrder(1.0), 0, 0),
                    DomainError);
}

TEST_CASE("oscillator embedding") {
    const Setup s = setup(0.05, 25);
    const DMetric g = rotoid_metric(s.p, s.theta, s.phi, RotoidData{}, FracOrder(1.0));
    const auto z1 = line(s.phi, [](double) { return 1.0; });
    const auto unit = oscillator_series(z1, SampledField({s.phi}, 0.0), FracOrder(1.0, {0.0}), 0.0, 1.0);
    const DMetric same = oscillator_embedded_metric(g, unit);
    CHECK(max_diff(same.h4, g.h4) == 0.0);
    CHECK(max_diff(same.h3, g.h3) == 0.0);

    const auto z2 = line(s.phi, [](double x) { return x; });
    const auto rho = oscillator_series(z1, z2, FracOrder(1.0, {0.0}), 0.0, 1.0);
    const DMetric ge = oscillator_embedded_metric(g, rho);
    CHECK(reduced_residuals(ge, SourceSpec::zero(ge.axes)).max_abs() < 1e-4);
    const auto neg = oscillator_series(z1, SampledField({s.phi}, 0.0), FracOrder(1.0, {0.0}), 0.0, -1.0);
    CHECK_THROWS_AS(oscillator_embedded_metric(g, neg), DomainError);
}
