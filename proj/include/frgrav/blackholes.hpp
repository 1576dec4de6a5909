#pragma once
// Schwarzschild prime data and its fractional deformations: vacuum
// deformations, rotoid (black ellipsoid) metrics, solitonic backgrounds and
// the oscillator-series embedding.
//
// Coordinates: x1 = xi, x2 = theta, v = phi, y4 = t. The extra argument theta
// of the polarization functions is an inert constant and is not represented.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "frgrav/geomframe.hpp"

namespace frgrav {

inline constexpr double kHorizonMargin = 0.05;

// Measure defining xi(r): literal |varpi^2|^(1/2) dr, or the proper radial
// length dr / |varpi|.
enum class XiMeasure { Literal, Proper };

struct PrimeOptions {
    double excision_margin = kHorizonMargin;  // nodes need |varpi^2| >= margin
    XiMeasure xi = XiMeasure::Literal;
};

double varpi2(double mu0, double eps, double r);
// Real roots of varpi^2 = 0, ascending.
std::vector<double> horizon_radii(double mu0, double eps);

struct PrimeData {
    double mu0 = 1.0;
    double eps = 0.0;
    XiMeasure measure = XiMeasure::Literal;
    std::vector<double> r, xi, varpi2;  // per radial node; xi(r[0]) = 0

    Grid1D xi_grid() const;
    double xi_at(double r) const;  // xi relative to r[0]
};

PrimeData prime_schwarzschild(double mu0, double eps, const Grid1D& r_grid, const PrimeOptions& opt = {});
// Radii whose xi values are equally spaced on [r_lo, r_hi].
Grid1D radii_uniform_in_xi(double mu0, double eps, double r_lo, double r_hi, std::size_t n,
                           XiMeasure measure = XiMeasure::Literal);

// Undeformed metric g1 = -1, g2 = -r^2, h3 = -r^2 sin^2(theta), h4 = varpi^2, N = 0.
DMetric prime_metric(const PrimeData& p, const Grid1D& theta, const Grid1D& phi, const FracOrder& ord);

// N-connection data; w over (x1, x2, v), n over (x1, x2). Absent entries are 0.
struct NData {
    std::optional<SampledField> w1, w2, n1, n2;
};

struct DeformationData {
    // Exactly one of eta4 (h4 = eta4 varpi^2) or b (h4 = b^2) over (x1, x2, v).
    std::optional<SampledField> eta4, b;
    // Explicit eta3 replaces h3 = -0h^2 (b*)^2 and skips the b* != 0 check.
    std::optional<SampledField> eta3;
    // psi over (x1, x2): g1 = g2 = -E(psi). Without it g1, g2 keep their prime values.
    std::optional<SampledField> psi;
    NData n;
    double h0 = 2.0;
};

// Vacuum deformation; the matching source is SourceSpec::zero. Polarizations
// are recorded as aux "eta1".."eta4".
DMetric fractional_deformation(const PrimeData& p, const Grid1D& theta, const Grid1D& phi, const DeformationData& d,
                               const FracOrder& ord);

struct RotoidData {
    double omega0 = 1.0, phi0 = 0.0;
    std::function<double(double r)> q0;                            // default 4 mu0^2
    std::function<double(double r, double theta, double phi)> mu1;  // default 0
};

// h3 closed forms: -4 [(sqrt|h4|)*]^2, or the form linearized in eps.
enum class RotoidH3 { Exact, Linearized };

struct RotoidOptions {
    RotoidH3 h3 = RotoidH3::Exact;
    std::optional<SampledField> psi;  // over (x1, x2); default 0
    NData n;
    double n_tolerance = 1e-6;  // N-connection conditions
};

// h4 = q + eps s with q = 1 - 2 mu / r, s = q0 / (4 mu^2) sin(omega0 phi + phi0).
// aux: "q", "eps_s", "polarization" (1 here).
DMetric rotoid_metric(const PrimeData& p, const Grid1D& theta, const Grid1D& phi, const RotoidData& rot,
                      const FracOrder& ord, const RotoidOptions& opt = {});

// w2. - w1' (or its w* != 0 form) and 1n1' - 1n2. ; keys "w", "n".
std::map<std::string, double> rotoid_n_conditions(const DMetric& g, const ResidualOptions& ropt = {});

double rotoid_h4(const PrimeData& p, const RotoidData& rot, double r, double theta, double phi);
// r+(phi) = 2 mu0 / [1 + eps q0/(4 mu^2) sin(omega0 phi + phi0)] with mu = mu0.
double rotoid_horizon_formula(const PrimeData& p, const RotoidData& rot, double phi);
// Zero of h4 along r: sign change bracketed on `samples` radii in [r_lo, r_hi],
// then refined on the closed form. Throws HorizonError without a sign change.
double rotoid_horizon(const PrimeData& p, const RotoidData& rot, double theta, double phi, double r_lo, double r_hi,
                      std::size_t samples = 256);

struct HorizonPoint {
    double phi, r_plus, r_formula;
};
std::vector<HorizonPoint> horizon_curve(const PrimeData& p, const RotoidData& rot, double theta,
                                        const std::vector<double>& phis, double r_lo, double r_hi);

struct SolitonOptions {
    double eps_sign = -1.0;
    double tolerance = 1e-6;  // max |equation residual| over interior nodes
    std::size_t max_iterations = 50;
    double damping = 1.0;
};

// Residual of eta.. + e (eta' + 6 eta eta* + eta***)* on uniform grids, by
// central differences; zero on the clamped layers (1 in x, 2 in v).
// Rank 2 fields are (x1, v) and drop eta'; rank 3 fields are (x1, x2, v).
SampledField solitonic_residual(const SampledField& eta, double eps_sign);
// Newton iteration with the boundary layers held at the initial guess.
SampledField solitonic_eta(const SampledField& initial, const SolitonOptions& opt = {});

// eta over (x1, v) repeated along x2, or a 3-D field passed through.
SampledField on_metric_grid(const SampledField& f, const std::vector<Grid1D>& axes);

// h4 -> eta h4 with h3 recomputed; N unchanged. Requires eta > 0.
DMetric solitonic_rotoid(const DMetric& g_rot, const SampledField& eta, RotoidH3 h3 = RotoidH3::Exact);

struct SeriesOptions {
    std::size_t order = 8;        // terms p = 0..order
    std::size_t growth_limit = 3;  // consecutive growing terms before DivergenceError
    double rel_tolerance = 1e-6;   // stop once max |term| <= this times max |partial sum|
    Scheme scheme = kDefaultScheme;
};

struct SeriesSolution {
    SampledField rho;
    std::vector<double> term_norms;  // max |term_p| for the terms actually summed
    std::vector<double> ratios;      // max |term_p| / max |partial sum_p|
    double c1 = 0.0, c2 = 0.0, v1 = 0.0;
    double last_term() const { return term_norms.empty() ? 0.0 : term_norms.back(); }
};

// rho = sum_p (-1)^p I[(z1^-1 D)^p (z2 / z1)] + c1 (v - v1) + c2, D the left
// RL derivative, over a 1-D v grid with terminal v1.
SeriesSolution oscillator_series(const SampledField& z1, const SampledField& z2, const FracOrder& ord, double c1,
                                 double c2, const SeriesOptions& opt = {});
// RL D(rho*) + z1 rho* - z2 with rho* the Caputo derivative.
SampledField oscillator_residual(const SeriesSolution& s, const SampledField& z1, const SampledField& z2,
                                 const FracOrder& ord, Scheme scheme = kDefaultScheme);

// h4 -> rho h4 with h3 recomputed; N unchanged. Requires rho > 0.
DMetric oscillator_embedded_metric(const DMetric& g_solrot, const SeriesSolution& rho,
                                   RotoidH3 h3 = RotoidH3::Exact);

}  // namespace frgrav
