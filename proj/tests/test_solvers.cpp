#include <doctest.h>

#include <cmath>
#include <functional>

#include "frgrav/solvers.hpp"

using namespace frgrav;

namespace {

std::vector<Grid1D> grid3(std::size_t n, std::size_t nv) {
    return {Grid1D::uniform(0.0, 1.0, n), Grid1D::uniform(0.0, 1.0, n), Grid1D::uniform(0.0, 1.0, nv)};
}

std::vector<Grid1D> chart(const std::vector<Grid1D>& ax) { return {ax[0], ax[1]}; }

SampledField field(const std::vector<Grid1D>& ax, const std::function<double(double, double, double)>& f) {
    return SampledField::from_function(ax, [&](std::span<const double> x) { return f(x[0], x[1], x[2]); });
}

SampledField field2(const std::vector<Grid1D>& ax, const std::function<double(double, double)>& f) {
    return SampledField::from_function(ax, [&](std::span<const double> x) { return f(x[0], x[1]); });
}

SourceSpec source(const std::vector<Grid1D>& ax, double y2) {
    SourceSpec s = SourceSpec::zero(ax);
    s.upsilon2 = SampledField(ax, y2);
    return s;
}

double max_abs(const SampledField& f) {
    double m = 0.0;
    for (double x : f.values()) m = std::max(m, std::fabs(x));
    return m;
}

double max_diff(const SampledField& a, const SampledField& b) { return max_abs(a - b); }

// Poisson psi_xx + psi_yy = 2 on the unit square, psi = 0 on the edge, by double sine series.
double poisson_series(double x, double y) {
    double s = 0.0;
    for (int m = 1; m < 400; m += 2)
        for (int n = 1; n < 400; n += 2) {
            const double k = M_PI * M_PI * (m * m + n * n);
            s += -2.0 * 16.0 / (M_PI * M_PI * m * n * k) * std::sin(m * M_PI * x) * std::sin(n * M_PI * y);
        }
    return s;
}

GeneratingData data_A(const std::vector<Grid1D>& ax) {
    GeneratingData gd;
    gd.phi = field(ax, [](double, double, double v) { return v; });
    gd.h4_0 = SampledField(chart(ax), 2.0);
    return gd;
}

GeneratingData data_B(const std::vector<Grid1D>& ax) {
    GeneratingData gd;
    gd.h3 = field(ax, [](double, double, double v) { return (1 + v) * (1 + v); });
    gd.w1 = field(ax, [](double, double y, double v) { return y * v; });
    gd.w2 = SampledField(ax, 0.0);
    gd.n2_1 = SampledField(chart(ax), 1.0);
    return gd;
}

}  // namespace

TEST_CASE("psi with constant boundary and no source is constant") {
    const auto c = chart(grid3(13, 5));
    const SampledField psi = solve_psi(SampledField(c, 0.0), SampledField(c, 0.7), FracOrder(0.6));
    for (double x : psi.values()) CHECK(x == doctest::Approx(0.7).epsilon(1e-10));
}

TEST_CASE("psi at integer order matches the Poisson series") {
    const auto c = chart(grid3(33, 5));
    const SampledField psi = solve_psi(SampledField(c, 1.0), SampledField(c, 0.0), FracOrder(1.0));
    const SampledField ref = field2(c, poisson_series);
    CHECK(max_diff(psi, ref) < 1e-4);
}

TEST_CASE("psi reproduces a harmonic polynomial") {
    const auto c = chart(grid3(17, 5));
    const SampledField h = field2(c, [](double x, double y) { return x * x - y * y + 0.5 * x * y; });
    const SampledField psi = solve_psi(SampledField(c, 0.0), h, FracOrder(1.0));
    CHECK(max_diff(psi, h) < 1e-8);
}

TEST_CASE("psi solver error carries the residual") {
    const auto c = chart(grid3(9, 5));
    PsiOptions opt;
    opt.tolerance = -1.0;
    try {
        solve_psi(SampledField(c, 1.0), SampledField(c, 0.0), FracOrder(0.5), kDefaultScheme, opt);
        FAIL("expected a solver error");
    } catch (const SolverError& e) {
        CHECK(e.final_residual() >= 0.0);
    }
}

TEST_CASE("fractional exponential") {
    const auto c = chart(grid3(5, 5));
    const SampledField psi(c, 0.3);
    CHECK(fractional_exp(psi, FracOrder(1.0))[0] == doctest::Approx(std::exp(0.3)));
    CHECK(fractional_exp(psi, FracOrder(0.5))[0] == doctest::Approx(mittag_leffler(0.5, 0.3)));
}

TEST_CASE("family A: phi(v) gives w = 0 and 2n = 0 gives v-independent n") {
    const auto ax = grid3(9, 17);
    GeneratingData gd = data_A(ax);
    gd.n1_1 = field2(chart(ax), [](double x, double y) { return x + 2 * y; });
    const DMetric g = family_A(ax, FracOrder(0.8), gd, source(ax, 1.0));
    // d_i phi = 0 up to stencil roundoff
    CHECK(max_abs(g.w1) < 1e-13);
    CHECK(max_abs(g.w2) < 1e-13);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.n1[i] == g.n1[(i / 17) * 17]);
    CHECK(max_abs(g.n2) == 0.0);
}

TEST_CASE("family A signature and integer-order round trip") {
    const auto ax = grid3(17, 33);
    const SourceSpec src = source(ax, 1.0);
    const DMetric g = family_A(ax, FracOrder(1.0), data_A(ax), src);
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(g.h3[i] < 0.0);
        CHECK(g.h4[i] > 0.0);
    }
    CHECK(reduced_residuals(g, src).max_abs() < 5e-3);
}

TEST_CASE("family A branch bookkeeping flips only h3") {
    const auto ax = grid3(9, 17);
    const SourceSpec src = source(ax, 1.0);
    for (FormulaVariant var : {FormulaVariant::Consistent, FormulaVariant::Printed}) {
        FamilyOptions plus, minus;
        plus.variant = minus.variant = var;
        minus.h3_branch = -1.0;
        const DMetric a = family_A(ax, FracOrder(0.7), data_A(ax), src, plus);
        const DMetric b = family_A(ax, FracOrder(0.7), data_A(ax), src, minus);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(b.h3[i] == -a.h3[i]);
            CHECK(b.h4[i] == a.h4[i]);
            CHECK(b.w1[i] == a.w1[i]);
            CHECK(b.n1[i] == a.n1[i]);
            CHECK(b.g1[i] == a.g1[i]);
        }
    }
}

TEST_CASE("family A preconditions") {
    const auto ax = grid3(9, 9);
    GeneratingData gd;
    gd.phi = field(ax, [](double x, double, double) { return x; });
    CHECK_THROWS_AS(family_A(ax, FracOrder(1.0), gd, source(ax, 1.0)), PreconditionError);
    try {
        family_A(ax, FracOrder(1.0), gd, source(ax, 1.0));
    } catch (const PreconditionError& e) {
        CHECK(std::string(e.what()).find("family B") != std::string::npos);
    }
    CHECK_THROWS_AS(family_A(ax, FracOrder(1.0), data_A(ax), source(ax, 0.0)), PreconditionError);
    CHECK_THROWS_AS(family_A(ax, FracOrder(1.0), GeneratingData{}, source(ax, 1.0)), PreconditionError);
}

TEST_CASE("family B: unit h3 integrates to v at integer order") {
    const auto ax = grid3(5, 21);
    GeneratingData gd;
    gd.h3 = SampledField(ax, 1.0);
    gd.n2_1 = SampledField(chart(ax), 1.0);
    gd.n2_2 = SampledField(chart(ax), 1.0);
    const DMetric g = family_B(ax, FracOrder(1.0), gd, SourceSpec::zero(ax));
    const SampledField v = field(ax, [](double, double, double v) { return v; });
    CHECK(max_diff(g.n1, v) < 1e-12);
    CHECK(max_diff(g.n2, v) < 1e-12);
    CHECK(max_abs(partial(g.h4, 2, g.order)) < 1e-12);
}

TEST_CASE("family B: any w solves eq3") {
    const auto ax = grid3(13, 17);
    const SourceSpec src = SourceSpec::zero(ax);
    GeneratingData gd = data_B(ax);
    gd.w1 = field(ax, [](double x, double y, double v) { return std::sin(3 * x * v) + y; });
    gd.w2 = field(ax, [](double x, double y, double v) { return std::exp(x * y - v); });
    for (double a : {0.5, 1.0}) {
        const DMetric g = family_B(ax, FracOrder(a), gd, src);
        CHECK(reduced_residuals(g, src).eq3.max_abs < 1e-10);
    }
}

TEST_CASE("family B rejects a nonzero Y2") {
    const auto ax = grid3(5, 9);
    CHECK_THROWS_AS(family_B(ax, FracOrder(1.0), data_B(ax), source(ax, 0.1)), PreconditionError);
}

TEST_CASE("family B round trip at fractional order") {
    const auto ax = grid3(17, 33);
    const SourceSpec src = SourceSpec::zero(ax);
    for (double a : {0.5, 0.8}) {
        const DMetric g = family_B(ax, FracOrder(a), data_B(ax), src);
        CHECK(reduced_residuals(g, src).max_abs() < 5e-3);
    }
}

TEST_CASE("family C: Y2 = 0 recovers the perfect square") {
    // (v + 1)^2: h4** = 2 = (h4*)^2 / (2 h4)
    const auto ax = grid3(5, 41);
    GeneratingData gd;
    gd.h4_slope = SampledField(chart(ax), 2.0);
    const DMetric g = family_C(ax, FracOrder(1.0), gd, SourceSpec::zero(ax));
    const SampledField sq = field(ax, [](double, double, double v) { return (v + 1) * (v + 1); });
    CHECK(max_diff(g.h4, sq) < 1e-6);
    for (double x : g.h3.values()) CHECK(x == -1.0);
}

TEST_CASE("family C: x-independent data gives w = 0") {
    const auto ax = grid3(7, 33);
    GeneratingData gd;
    gd.h4_slope = SampledField(chart(ax), 4.0);
    const DMetric g = family_C(ax, FracOrder(0.7), gd, source(ax, 1.0));
    CHECK(max_abs(g.w1) < 1e-10);
    CHECK(max_abs(g.w2) < 1e-10);
}

TEST_CASE("family C round trip") {
    const auto ax = grid3(9, 33);
    const SourceSpec src = source(ax, 1.0);
    GeneratingData gd;
    gd.h4_slope = SampledField(chart(ax), 4.0);
    for (double a : {0.7, 1.0}) {
        const DMetric g = family_C(ax, FracOrder(a), gd, src);
        CHECK(reduced_residuals(g, src).max_abs() < 5e-3);
    }
}

TEST_CASE("family C preconditions and solver failure") {
    const auto ax = grid3(5, 17);
    GeneratingData flat;
    flat.h4_slope = SampledField(chart(ax), 0.0);
    CHECK_THROWS_AS(family_C(ax, FracOrder(1.0), flat, SourceSpec::zero(ax)), PreconditionError);
    GeneratingData gd;
    FamilyOptions opt;
    opt.max_iterations = 2;
    CHECK_THROWS_AS(family_C(ax, FracOrder(0.7), gd, source(ax, 1.0), opt), SolverError);
}

TEST_CASE("family D: vanishing Y2 keeps varsigma at its initial value") {
    const auto ax = grid3(9, 17);
    GeneratingData gd;
    gd.f = field(ax, [](double x, double, double v) { return 1 + v * v + 0.1 * x; });
    CHECK_THROWS_AS(family_D(ax, FracOrder(1.0), gd, SourceSpec::zero(ax)), PreconditionError);
    gd.w1 = SampledField(ax, 0.0);
    gd.w2 = SampledField(ax, 0.0);
    const DMetric g = family_D(ax, FracOrder(1.0), gd, SourceSpec::zero(ax));
    for (double s : g.aux.at("varsigma").values()) CHECK(s == 1.0);
    const SampledField fv = partial(*gd.f, 2, g.order);
    CHECK(max_diff(g.h3, -4.0 * fv * fv) < 1e-14);
}

TEST_CASE("family D compatibility sqrt|h3| = 0h (sqrt|h4|)*") {
    const auto ax = grid3(5, 33);
    GeneratingData gd;
    gd.f = field(ax, [](double, double y, double v) { return 1 + v * v + y; });
    gd.w1 = gd.w2 = SampledField(ax, 0.0);
    gd.h0 = 1.5;
    const DMetric g = family_D(ax, FracOrder(1.0), gd, SourceSpec::zero(ax));
    const SampledField dh = partial(g.h4.map([](double x) { return std::sqrt(std::fabs(x)); }), 2, g.order);
    const SampledField c = g.h3.map([](double x) { return std::sqrt(std::fabs(x)); }) - 1.5 * dh;
    CHECK(max_abs(c) < 1e-8);
}

TEST_CASE("family D with f(v) satisfies the LC conditions") {
    const auto ax = grid3(9, 17);
    GeneratingData gd;
    gd.f = field(ax, [](double, double, double v) { return 1 + v * v; });
    gd.varsigma40 = SampledField(chart(ax), 0.05);
    const SourceSpec src = source(ax, 1.0);
    const DMetric g = family_D(ax, FracOrder(1.0), gd, src);
    for (const auto& [k, v] : select_levi_civita(g, Family::D)) CHECK_MESSAGE(v < 1e-9, k);
    CHECK(reduced_residuals(g, src).max_abs() < 5e-2);
}

TEST_CASE("family D printed variant") {
    const auto ax = grid3(5, 17);
    GeneratingData gd;
    gd.f = field(ax, [](double, double, double v) { return 1 + v; });
    FamilyOptions opt;
    opt.variant = FormulaVariant::Printed;
    const DMetric g = family_D(ax, FracOrder(1.0), gd, source(ax, 1.0), opt);
    // varsigma = 1 - (4 / 16) * ((1 + v)^5 - 1) / 5
    const SampledField ref = field(ax, [](double, double, double v) { return 1 - 0.05 * (std::pow(1 + v, 5) - 1); });
    CHECK(max_diff(g.aux.at("varsigma"), ref) < 1e-8);
}

TEST_CASE("aux quantities are consistent") {
    const auto ax = grid3(9, 17);
    const DMetric g = family_A(ax, FracOrder(1.0), data_A(ax), source(ax, 1.0));
    const AuxQuantities q = aux_quantities(g);
    const SampledField h4v = partial(g.h4, 2, g.order);
    CHECK(max_diff(q.beta, h4v * partial(q.phi, 2, g.order)) == 0.0);
    for (std::size_t i = 0; i < g.size(); ++i)
        CHECK(q.phi[i] == doctest::Approx(std::log(std::fabs(h4v[i] / std::sqrt(std::fabs(g.h3[i] * g.h4[i]))))));
}

TEST_CASE("levi-civita selector") {
    const auto ax = grid3(9, 17);
    SUBCASE("family A with phi(v) passes") {
        const DMetric g = family_A(ax, FracOrder(1.0), data_A(ax), source(ax, 1.0));
        for (const auto& [k, v] : select_levi_civita(g, Family::A)) CHECK_MESSAGE(v < 1e-10, k);
    }
    SUBCASE("family B with 2n != 0 fails the 2n = 0 condition") {
        const DMetric g = family_B(ax, FracOrder(1.0), data_B(ax), SourceSpec::zero(ax));
        const auto r = select_levi_civita(g, Family::B);
        CHECK(r.at("family.n2_zero") > 0.5);
        CHECK(r.count("family.w_h0") == 1);
    }
    SUBCASE("family D with generic f reports finite violations") {
        GeneratingData gd;
        gd.f = field(ax, [](double x, double y, double v) { return 1 + v * v + 0.3 * x * v + 0.2 * y; });
        const DMetric g = family_D(ax, FracOrder(1.0), gd, source(ax, 1.0));
        double worst = 0.0;
        for (const auto& [k, v] : select_levi_civita(g, Family::D)) {
            CHECK(std::isfinite(v));
            worst = std::max(worst, v);
        }
        CHECK(worst > 1e-6);
    }
}

TEST_CASE("levi-civita selector is monotone in an added violation") {
    const auto ax = grid3(9, 17);
    const DMetric base = family_A(ax, FracOrder(1.0), data_A(ax), source(ax, 1.0));
    const SampledField bump = field(ax, [](double x, double, double v) { return std::sin(2 * v) * (1 + x); });
    double prev = -1.0;
    for (double eps : {0.0, 1e-3, 1e-2, 1e-1, 1.0}) {
        DMetric g = base;
        g.n1 = g.n1 + eps * bump;
        double worst = 0.0;
        for (const auto& [k, v] : select_levi_civita(g, Family::A)) worst = std::max(worst, v);
        CHECK(worst >= prev);
        prev = worst;
    }
    CHECK(prev > 0.1);
}

TEST_CASE("family parsing") {
    for (Family f : {Family::A, Family::B, Family::C, Family::D}) CHECK(parse_family(to_string(f)) == f);
    CHECK_THROWS_AS(parse_family("E"), ConfigError);
}
