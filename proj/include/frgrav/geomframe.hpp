#pragma once
// N-adapted geometry on a (x1, x2, v) grid with a Killing direction y4:
// frames, canonical d-connection, curvature, distortion and the reduced
// field-equation residuals.
//
// Index layout for 4-index objects: 0, 1 = x1, x2 (h-part), 2 = v = y3,
// 3 = y4 (v-part). Connection coefficients follow D_c e_b = G^a_bc e_a.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "frgrav/fraccore.hpp"

namespace frgrav {

inline constexpr double kDegeneracyTol = 1e-12;
inline constexpr std::size_t kDefaultBoundaryLayers = 2;

// N^a_i with a in {3, 4} stored as N[a - 3][i - 1]; N[0] = w, N[1] = n.
struct NConnection {
    std::array<std::array<SampledField, 2>, 2> N;
    const SampledField& operator()(std::size_t a, std::size_t i) const { return N[a][i]; }
    void validate() const;
};

struct DMetric {
    std::vector<Grid1D> axes;  // x1, x2, v
    FracOrder order{1.0};
    Scheme scheme = kDefaultScheme;
    SampledField g1, g2, h3, h4, w1, w2, n1, n2;
    std::array<int, 4> signs{};  // sign of g1, g2, h3, h4 as constructed
    std::vector<std::uint8_t> singular;  // nodes flagged by the constructor
    // Diagnostics from constructors. Entries "terminal.<c>_v" over (x1, x2) give the
    // limit of the v-derivative of coefficient <c> (h4, n1, n2) at the v terminal;
    // residuals use them in nested derivatives instead of extrapolating.
    std::map<std::string, SampledField> aux;

    // Metric with every coefficient set to the given constants and N = 0.
    static DMetric constant(std::vector<Grid1D> axes, const FracOrder& ord, std::array<double, 4> diag);

    void validate() const;  // shapes, finiteness, non-degeneracy
    void record_signs();
    NConnection nconnection() const;
    const SampledField& coeff(std::size_t alpha) const;  // diagonal entry alpha = 0..3
    std::size_t size() const { return h4.size(); }
};

struct SourceSpec {
    SampledField upsilon2;  // over (x1, x2, v)
    SampledField upsilon4;  // over (x1, x2)

    static SourceSpec zero(const std::vector<Grid1D>& axes);
    // Upsilon4 repeated along v.
    SampledField upsilon4_3d(const std::vector<Grid1D>& axes) const;
    void validate(const std::vector<Grid1D>& axes) const;
};

// Nodewise frame and coframe of the N-connection.
class FrameOps {
public:
    FrameOps(NConnection N, FracOrder ord, Scheme scheme = kDefaultScheme);
    // e_beta f for beta = 0..3; e_3 vanishes on Killing-invariant fields.
    SampledField e(std::size_t beta, const SampledField& f) const;
    SampledField partial(std::size_t axis, const SampledField& f) const;
    // Component matrices at one node in the coordinate basis (x1, x2, v, y4).
    std::array<std::array<double, 4>, 4> frame_matrix(std::size_t node) const;
    std::array<std::array<double, 4>, 4> coframe_matrix(std::size_t node) const;
    const NConnection& N() const { return N_; }
    const FracOrder& order() const { return ord_; }
    Scheme scheme() const { return scheme_; }

private:
    NConnection N_;
    FracOrder ord_;
    Scheme scheme_;
};

// Four-index field tables; empty fields stand for identically zero entries.
class Table3 {
public:
    explicit Table3(const std::vector<Grid1D>& axes);
    SampledField& operator()(std::size_t a, std::size_t b, std::size_t c) { return t_[idx(a, b, c)]; }
    const SampledField& operator()(std::size_t a, std::size_t b, std::size_t c) const { return t_[idx(a, b, c)]; }
    bool zero(std::size_t a, std::size_t b, std::size_t c) const { return t_[idx(a, b, c)].size() == 0; }
    double at(std::size_t a, std::size_t b, std::size_t c, std::size_t node) const;
    const std::vector<Grid1D>& axes() const { return axes_; }

private:
    static std::size_t idx(std::size_t a, std::size_t b, std::size_t c) { return (a * 4 + b) * 4 + c; }
    std::vector<Grid1D> axes_;
    std::array<SampledField, 64> t_;
};

// W^c_ab with [e_a, e_b] = W^c_ab e_c; the h-h block equals Omega^c_ab = e_b N^c_a - e_a N^c_b.
Table3 nonholonomy_coefficients(const FrameOps& frames);

using DConnectionCoeffs = Table3;
DConnectionCoeffs canonical_dconnection(const DMetric& g);

// T^a_bc = G^a_cb - G^a_bc - W^a_bc.
Table3 torsion(const DMetric& g, const DConnectionCoeffs& G);
// D_c g_ab for the diagonal d-metric; index order (a, b, c).
Table3 metricity(const DMetric& g, const DConnectionCoeffs& G);

Table3 distortion_tensor(const DMetric& g);
Table3 distortion_tensor(const DMetric& g, const DConnectionCoeffs& G);

struct RicciDTensor {
    std::array<std::array<SampledField, 4>, 4> R;  // R_{ab} per (dricci) block conventions
    SampledField scalar;                            // g^ij R_ij + g^ab R_ab
    std::array<std::array<SampledField, 4>, 4> G;   // Einstein d-tensor
};

// Ricci from the full contraction R_bd = M^a_bad of the curvature of G.
RicciDTensor einstein_dtensor(const DMetric& g);
RicciDTensor einstein_dtensor(const DMetric& g, const DConnectionCoeffs& G);
// Curvature component M^a_bcd = e_c G^a_bd - e_d G^a_bc + G^f_bd G^a_fc - G^f_bc G^a_fd - W^f_cd G^a_bf.
SampledField curvature(const DMetric& g, const DConnectionCoeffs& G, const Table3& W, std::size_t a, std::size_t b,
                       std::size_t c, std::size_t d);

struct EqStat {
    double max_abs = 0.0;
    double mean_abs = 0.0;
};

struct ResidualOptions {
    bool include_boundary = false;
    std::size_t boundary_layers = kDefaultBoundaryLayers;
    double singular_tol = 1e-10;
};

struct ResidualFields {
    SampledField eq1, eq2;
    std::array<SampledField, 2> eq3, eq4;
    std::vector<std::uint8_t> mask;  // 1 = excluded (boundary or singular)
    std::size_t singular_nodes = 0;
};

struct ResidualReport {
    EqStat eq1, eq2, eq3, eq4;
    std::map<std::string, double> lc;  // LC violations when evaluated
    std::size_t evaluated_nodes = 0;
    std::size_t singular_nodes = 0;
    std::vector<std::size_t> shape;
    bool boundary_included = false;
    std::string source_frame = "N-adapted";
    double max_abs() const;
};

ResidualFields reduced_residual_fields(const DMetric& g, const SourceSpec& src, const ResidualOptions& opt = {});
ResidualReport reduced_residuals(const DMetric& g, const SourceSpec& src, const ResidualOptions& opt = {});

// Generic LC conditions: w_i* - e_i ln|h4|, e_2 w_1 - e_1 w_2, n_i*, d_1 n_2 - d_2 n_1.
std::map<std::string, SampledField> lc_condition_fields(const DMetric& g);
std::map<std::string, double> lc_conditions(const DMetric& g, const ResidualOptions& opt = {});

// Max |f| over nodes not excluded by mask.
double masked_max(const SampledField& f, const std::vector<std::uint8_t>& mask);
std::vector<std::uint8_t> boundary_mask(const std::vector<Grid1D>& axes, const ResidualOptions& opt);

}  // namespace frgrav
