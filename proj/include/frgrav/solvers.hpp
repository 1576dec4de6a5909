#pragma once
// Exact-solution families of the reduced system, the fractional Laplace solve
// for psi and the Levi-Civita constraint selector.

#include <map>
#include <optional>
#include <string>

#include "frgrav/geomframe.hpp"

namespace frgrav {

struct PsiOptions {
    double tolerance = 1e-8;  // max interior residual, relative to max(1, |2 Y4|)
};

// Solves d1^a d1^a psi + d2^a d2^a psi = 2 Y4 on the (x1, x2) chart with
// Dirichlet data taken from the edge nodes of `boundary`.
SampledField solve_psi(const SampledField& src4, const SampledField& boundary, const FracOrder& ord,
                       Scheme scheme = kDefaultScheme, const PsiOptions& opt = {});

// Fractional exponential of psi: E_alpha(psi) for alpha < 1, exp(psi) at alpha = 1.
SampledField fractional_exp(const SampledField& psi, const FracOrder& ord);

// Copies a 2-D (x1, x2) field along v.
SampledField extend_along_v(const SampledField& f2, const Grid1D& v);

enum class Family { A, B, C, D };
Family parse_family(const std::string& s);
std::string to_string(Family f);

// Closed forms used for families A and D. Consistent forms satisfy the reduced
// equations at integer order; printed forms reproduce the displayed coefficients.
enum class FormulaVariant { Consistent, Printed };

struct GeneratingData {
    std::optional<SampledField> phi;  // A
    std::optional<SampledField> f;    // D
    std::optional<SampledField> h3;   // B
    std::optional<SampledField> w1, w2;  // B (free), D (when varsigma* vanishes)
    // Integration functions over (x1, x2); absent entries take defaults.
    std::optional<SampledField> n1_1, n1_2, n2_1, n2_2;
    std::optional<SampledField> h4_0;       // A: 0h4 (default 0); B: 0h4 (default 1); C: h4 at the v terminal (default 1)
    std::optional<SampledField> h4_slope;   // C: h4* at the v terminal (default 1)
    std::optional<SampledField> h3_0;       // C: 0h3 (default 1)
    std::optional<SampledField> varsigma40; // D (default 1)
    double h0 = 2.0;                        // D: constant 0h
    std::optional<SampledField> psi_boundary;  // Dirichlet data for psi (default 0)
};

struct FamilyOptions {
    double sign = -1.0;     // branch of the +- in h4 (A) and of varsigma (D)
    double w_sign = 1.0;    // w_i = w_sign * d_i phi / phi*; the displayed solutions use -1
    double h3_branch = 1.0; // A: multiplies h3 (the +- in front of |phi*|)
    FormulaVariant variant = FormulaVariant::Consistent;
    PsiOptions psi;
    double nonzero_tol = 1e-12;
    // Family C fixed-point iteration
    std::size_t max_iterations = 500;
    double damping = 0.5;
    double ode_tolerance = 1e-12;
};

DMetric family_A(const std::vector<Grid1D>& axes, const FracOrder& ord, const GeneratingData& gen,
                 const SourceSpec& src, const FamilyOptions& opt = {});
DMetric family_B(const std::vector<Grid1D>& axes, const FracOrder& ord, const GeneratingData& gen,
                 const SourceSpec& src, const FamilyOptions& opt = {});
DMetric family_C(const std::vector<Grid1D>& axes, const FracOrder& ord, const GeneratingData& gen,
                 const SourceSpec& src, const FamilyOptions& opt = {});
DMetric family_D(const std::vector<Grid1D>& axes, const FracOrder& ord, const GeneratingData& gen,
                 const SourceSpec& src, const FamilyOptions& opt = {});
DMetric build_family(Family fam, const std::vector<Grid1D>& axes, const FracOrder& ord, const GeneratingData& gen,
                     const SourceSpec& src, const FamilyOptions& opt = {});

// gamma, alpha_i, beta of the auxiliary parametrization, from h3 and h4.
struct AuxQuantities {
    SampledField phi, gamma, beta;
    std::array<SampledField, 2> alpha;
};
AuxQuantities aux_quantities(const DMetric& g);

// Family constraint set plus the generic LC conditions; keys are prefixed
// "family." and "lc." respectively.
std::map<std::string, double> select_levi_civita(const DMetric& g, Family fam, const ResidualOptions& opt = {});

}  // namespace frgrav
