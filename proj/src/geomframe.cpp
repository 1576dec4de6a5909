#include "frgrav/geomframe.hpp"

#include <cmath>
#include <map>
#include <tuple>

namespace frgrav {

namespace {

bool is_zero(const SampledField& f) { return f.size() == 0; }

SampledField zeros_like(const SampledField& f) { return SampledField(f.axes(), 0.0); }

// acc += c * x, treating empty fields as zero.
void axpy(SampledField& acc, double c, const SampledField& x) {
    if (is_zero(x) || c == 0.0) return;
    if (is_zero(acc)) {
        acc = c * x;
        return;
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c * x[i];
}

// acc += c * x * y
void axpy2(SampledField& acc, double c, const SampledField& x, const SampledField& y) {
    if (is_zero(x) || is_zero(y) || c == 0.0) return;
    if (is_zero(acc)) acc = zeros_like(x);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c * x[i] * y[i];
}

// acc += c * x * y / z
void axpy3(SampledField& acc, double c, const SampledField& x, const SampledField& y, const SampledField& z) {
    if (is_zero(x) || is_zero(y) || c == 0.0) return;
    if (is_zero(acc)) acc = zeros_like(x);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c * x[i] * y[i] / z[i];
}

bool all_zero(const SampledField& f) {
    for (double v : f.values())
        if (v != 0.0) return false;
    return true;
}

void check_axes(const SampledField& f, const std::vector<Grid1D>& axes, const char* name) {
    if (f.axes() != axes) throw ShapeError(std::string("field ") + name + " is not sampled on the metric grid");
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

EqStat stat(const SampledField& f, const std::vector<std::uint8_t>& mask) {
    EqStat s;
    std::vector<double> vals;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (mask[i]) continue;
        const double a = std::fabs(f[i]);
        s.max_abs = std::max(s.max_abs, a);
        vals.push_back(a);
    }
    s.mean_abs = mean_of(vals);
    return s;
}

}  // namespace

void NConnection::validate() const {
    const auto& axes = N[0][0].axes();
    for (const auto& row : N)
        for (const auto& f : row) {
            if (f.axes() != axes) throw ShapeError("N-connection components must share a grid");
            f.validate();
        }
}

DMetric DMetric::constant(std::vector<Grid1D> axes, const FracOrder& ord, std::array<double, 4> diag) {
    if (axes.size() != 3) throw ShapeError("a d-metric lives on a (x1, x2, v) grid");
    DMetric m;
    m.axes = axes;
    m.order = ord;
    m.g1 = SampledField(axes, diag[0]);
    m.g2 = SampledField(axes, diag[1]);
    m.h3 = SampledField(axes, diag[2]);
    m.h4 = SampledField(axes, diag[3]);
    m.w1 = m.w2 = m.n1 = m.n2 = SampledField(axes, 0.0);
    m.singular.assign(m.h4.size(), 0);
    m.record_signs();
    return m;
}

const SampledField& DMetric::coeff(std::size_t alpha) const {
    switch (alpha) {
        case 0: return g1;
        case 1: return g2;
        case 2: return h3;
        case 3: return h4;
    }
    throw ShapeError("metric index out of range");
}

void DMetric::validate() const {
    if (axes.size() != 3) throw ShapeError("a d-metric lives on a (x1, x2, v) grid");
    const std::pair<const SampledField*, const char*> fs[] = {{&g1, "g1"}, {&g2, "g2"}, {&h3, "h3"}, {&h4, "h4"},
                                                               {&w1, "w1"}, {&w2, "w2"}, {&n1, "n1"}, {&n2, "n2"}};
    for (auto [f, name] : fs) {
        check_axes(*f, axes, name);
        f->validate();
    }
    if (!singular.empty() && singular.size() != h4.size()) throw ShapeError("singular mask has the wrong length");
}

void DMetric::record_signs() {
    for (std::size_t a = 0; a < 4; ++a) {
        const auto& f = coeff(a);
        int s = 0;
        for (double v : f.values()) {
            const int sv = v > 0 ? 1 : (v < 0 ? -1 : 0);
            if (sv == 0) continue;
            if (s == 0) s = sv;
            else if (s != sv) {
                s = 0;
                break;
            }
        }
        signs[a] = s;
    }
}

NConnection DMetric::nconnection() const {
    NConnection N;
    N.N = {{{w1, w2}, {n1, n2}}};
    return N;
}

SourceSpec SourceSpec::zero(const std::vector<Grid1D>& axes) {
    return {SampledField(axes, 0.0), SampledField({axes[0], axes[1]}, 0.0)};
}

SampledField SourceSpec::upsilon4_3d(const std::vector<Grid1D>& axes) const {
    SampledField out(axes, 0.0);
    const std::size_t nv = axes[2].size();
    for (std::size_t i = 0; i < upsilon4.size(); ++i)
        for (std::size_t k = 0; k < nv; ++k) out[i * nv + k] = upsilon4[i];
    return out;
}

void SourceSpec::validate(const std::vector<Grid1D>& axes) const {
    check_axes(upsilon2, axes, "upsilon2");
    if (upsilon4.rank() != 2 || upsilon4.axis(0) != axes[0] || upsilon4.axis(1) != axes[1])
        throw ShapeError("upsilon4 must be sampled on the (x1, x2) grid");
    upsilon2.validate();
    upsilon4.validate();
}

FrameOps::FrameOps(NConnection N, FracOrder ord, Scheme scheme) : N_(std::move(N)), ord_(std::move(ord)), scheme_(scheme) {
    N_.validate();
    if (N_.N[0][0].rank() != 3) throw ShapeError("N-connection must be sampled on a (x1, x2, v) grid");
}

SampledField FrameOps::partial(std::size_t axis, const SampledField& f) const {
    return frgrav::partial(f, axis, ord_, scheme_);
}

SampledField FrameOps::e(std::size_t beta, const SampledField& f) const {
    if (!f.same_grid(N_.N[0][0])) throw ShapeError("field and N-connection grids differ");
    if (beta == 3) return zeros_like(f);
    if (beta == 2) return partial(2, f);
    if (beta > 3) throw ShapeError("frame index out of range");
    SampledField out = partial(beta, f);
    const SampledField& w = N_.N[0][beta];
    if (!all_zero(w)) {
        const SampledField fv = partial(2, f);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= w[i] * fv[i];
    }
    return out;
}

std::array<std::array<double, 4>, 4> FrameOps::frame_matrix(std::size_t node) const {
    // row beta: coordinate components of e_beta
    std::array<std::array<double, 4>, 4> E{};
    for (std::size_t j = 0; j < 2; ++j) {
        E[j][j] = 1.0;
        E[j][2] = -N_.N[0][j][node];
        E[j][3] = -N_.N[1][j][node];
    }
    E[2][2] = E[3][3] = 1.0;
    return E;
}

std::array<std::array<double, 4>, 4> FrameOps::coframe_matrix(std::size_t node) const {
    // row beta: coordinate components of e^beta
    std::array<std::array<double, 4>, 4> C{};
    C[0][0] = C[1][1] = C[2][2] = C[3][3] = 1.0;
    for (std::size_t k = 0; k < 2; ++k) {
        C[2][k] = N_.N[0][k][node];
        C[3][k] = N_.N[1][k][node];
    }
    return C;
}

Table3::Table3(const std::vector<Grid1D>& axes) : axes_(axes) {}

double Table3::at(std::size_t a, std::size_t b, std::size_t c, std::size_t node) const {
    const auto& f = t_[idx(a, b, c)];
    return f.size() == 0 ? 0.0 : f[node];
}

Table3 nonholonomy_coefficients(const FrameOps& frames) {
    const auto& N = frames.N();
    Table3 W(N.N[0][0].axes());
    for (std::size_t a = 0; a < 2; ++a) {
        std::array<std::array<SampledField, 2>, 2> eN;  // eN[k][j] = e_k N^a_j
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t j = 0; j < 2; ++j) eN[k][j] = frames.e(k, N(a, j));
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t k = 0; k < 2; ++k)
                if (j != k) W(a + 2, j, k) = eN[k][j] - eN[j][k];
        for (std::size_t j = 0; j < 2; ++j) {
            SampledField dv = frames.partial(2, N(a, j));
            W(a + 2, 2, j) = -dv;
            W(a + 2, j, 2) = std::move(dv);
        }
    }
    return W;
}

namespace {

struct Derivs {
    // e[beta][alpha] = e_beta of the diagonal coefficient alpha, beta = 0..2
    std::array<std::array<SampledField, 4>, 3> e;
    // dN[a][k] = e_v N^a_k
    std::array<std::array<SampledField, 2>, 2> dN;
};

Derivs metric_derivs(const DMetric& g, const FrameOps& fr) {
    Derivs d;
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t a = 0; a < 4; ++a) d.e[b][a] = fr.e(b, g.coeff(a));
    const auto N = g.nconnection();
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t k = 0; k < 2; ++k) d.dN[a][k] = fr.partial(2, N(a, k));
    return d;
}

const SampledField& eg(const Derivs& d, std::size_t beta, std::size_t alpha) {
    static const SampledField empty;
    return beta == 3 ? empty : d.e[beta][alpha];
}

// e_b N^a_k for v-indices a, b in {2, 3}
const SampledField& eN(const Derivs& d, std::size_t b, std::size_t a, std::size_t k) {
    static const SampledField empty;
    return b == 3 ? empty : d.dN[a - 2][k];
}

void check_degeneracy(const DMetric& g) {
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!g.singular.empty() && g.singular[i]) continue;
        if (std::fabs(g.g1[i] * g.g2[i]) < kDegeneracyTol || std::fabs(g.h3[i] * g.h4[i]) < kDegeneracyTol)
            throw DegeneracyError("metric block determinant below 1e-12 at node " + std::to_string(i));
    }
}

}  // namespace

DConnectionCoeffs canonical_dconnection(const DMetric& g) {
    g.validate();
    check_degeneracy(g);
    const FrameOps fr(g.nconnection(), g.order, g.scheme);
    const Derivs d = metric_derivs(g, fr);
    Table3 G(g.axes);

    for (std::size_t i = 0; i < 2; ++i) {
        const SampledField& gi = g.coeff(i);
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t k = 0; k < 2; ++k) {
                SampledField acc;
                if (j == i) axpy(acc, 1.0, eg(d, k, i));
                if (k == i) axpy(acc, 1.0, eg(d, j, i));
                if (j == k) axpy(acc, -1.0, eg(d, i, j));
                if (!is_zero(acc)) G(i, j, k) = 0.5 * acc / gi;
            }
        for (std::size_t c = 2; c < 4; ++c)
            if (!is_zero(eg(d, c, i))) G(i, i, c) = 0.5 * eg(d, c, i) / gi;
    }
    for (std::size_t a = 2; a < 4; ++a) {
        const SampledField& ha = g.coeff(a);
        for (std::size_t b = 2; b < 4; ++b) {
            const SampledField& hb = g.coeff(b);
            for (std::size_t k = 0; k < 2; ++k) {
                // e_b N^a_k + (1/2 h_a)(e_k h_ab - h_a e_b N^a_k - h_b e_a N^b_k)
                SampledField acc;
                axpy(acc, 0.5, eN(d, b, a, k));
                SampledField inner;
                if (b == a) axpy(inner, 1.0, eg(d, k, a));
                axpy2(inner, -1.0, hb, eN(d, a, b, k));
                if (!is_zero(inner)) axpy(acc, 0.5, inner / ha);
                if (!is_zero(acc)) G(a, b, k) = std::move(acc);
            }
            for (std::size_t c = 2; c < 4; ++c) {
                SampledField acc;
                if (b == a) axpy(acc, 1.0, eg(d, c, a));
                if (c == a) axpy(acc, 1.0, eg(d, b, a));
                if (b == c) axpy(acc, -1.0, eg(d, a, b));
                if (!is_zero(acc)) G(a, b, c) = 0.5 * acc / ha;
            }
        }
    }
    return G;
}

Table3 torsion(const DMetric& g, const DConnectionCoeffs& G) {
    const FrameOps fr(g.nconnection(), g.order, g.scheme);
    const Table3 W = nonholonomy_coefficients(fr);
    Table3 T(g.axes);
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t c = 0; c < 4; ++c) {
                SampledField acc;
                axpy(acc, 1.0, G(a, c, b));
                axpy(acc, -1.0, G(a, b, c));
                axpy(acc, -1.0, W(a, b, c));
                if (!is_zero(acc)) T(a, b, c) = std::move(acc);
            }
    return T;
}

Table3 metricity(const DMetric& g, const DConnectionCoeffs& G) {
    const FrameOps fr(g.nconnection(), g.order, g.scheme);
    Table3 Q(g.axes);
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t c = 0; c < 4; ++c) {
                SampledField acc;
                if (a == b && c < 3) axpy(acc, 1.0, fr.e(c, g.coeff(a)));
                axpy2(acc, -1.0, G(b, a, c), g.coeff(b));
                axpy2(acc, -1.0, G(a, b, c), g.coeff(a));
                if (!is_zero(acc)) Q(a, b, c) = std::move(acc);
            }
    return Q;
}

Table3 distortion_tensor(const DMetric& g) { return distortion_tensor(g, canonical_dconnection(g)); }

Table3 distortion_tensor(const DMetric& g, const DConnectionCoeffs& G) {
    const FrameOps fr(g.nconnection(), g.order, g.scheme);
    const Table3 W = nonholonomy_coefficients(fr);
    const Derivs d = metric_derivs(g, fr);
    Table3 Z(g.axes);
    // K^c_dk = L^c_dk - e_d N^c_k
    auto K = [&](std::size_t c, std::size_t dd, std::size_t k) {
        SampledField acc;
        axpy(acc, 1.0, G(c, dd, k));
        axpy(acc, -1.0, eN(d, dd, c, k));
        return acc;
    };
    for (std::size_t a = 2; a < 4; ++a) {
        const SampledField& ha = g.coeff(a);
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t k = 0; k < 2; ++k) {
                // Z^a_jk = -C^k_ja g_k / h_a - Omega^a_jk / 2
                SampledField acc;
                axpy3(acc, -1.0, G(k, j, a), g.coeff(k), ha);
                axpy(acc, -0.5, W(a, j, k));
                if (!is_zero(acc)) Z(a, j, k) = std::move(acc);
            }
        for (std::size_t b = 2; b < 4; ++b) {
            const SampledField& hb = g.coeff(b);
            for (std::size_t k = 0; k < 2; ++k) {
                // Z^a_bk = 1/2 (K^a_bk + h_b / h_a K^b_ak)
                SampledField acc;
                axpy(acc, 0.5, K(a, b, k));
                const SampledField kb = K(b, a, k);
                axpy3(acc, 0.5, hb, kb, ha);
                if (!is_zero(acc)) Z(a, b, k) = std::move(acc);
                // Z^a_kb = -1/2 (K^a_bk - h_b / h_a K^b_ak)
                SampledField acc2;
                axpy(acc2, -0.5, K(a, b, k));
                axpy3(acc2, 0.5, hb, kb, ha);
                if (!is_zero(acc2)) Z(a, k, b) = std::move(acc2);
            }
        }
    }
    for (std::size_t i = 0; i < 2; ++i) {
        const SampledField& gi = g.coeff(i);
        for (std::size_t b = 2; b < 4; ++b) {
            const SampledField& hb = g.coeff(b);
            for (std::size_t k = 0; k < 2; ++k) {
                SampledField om;  // 1/2 Omega^b_ik h_b / g_i
                axpy3(om, 0.5, W(b, i, k), hb, gi);
                SampledField cc;  // 1/2 (C^i_kb - g_k / g_i C^k_ib)
                axpy(cc, 0.5, G(i, k, b));
                axpy3(cc, -0.5, g.coeff(k), G(k, i, b), gi);
                SampledField z1 = om, z2 = om;
                axpy(z1, -1.0, cc);
                axpy(z2, 1.0, cc);
                if (!is_zero(z1)) Z(i, b, k) = std::move(z1);
                if (!is_zero(z2)) Z(i, k, b) = std::move(z2);
            }
            for (std::size_t a = 2; a < 4; ++a) {
                // Z^i_ab = -(1 / 2 g_i) (K^b_ai h_b + K^a_bi h_a)
                SampledField acc;
                axpy3(acc, -0.5, K(b, a, i), hb, gi);
                axpy3(acc, -0.5, K(a, b, i), g.coeff(a), gi);
                if (!is_zero(acc)) Z(i, a, b) = std::move(acc);
            }
        }
    }
    return Z;
}

namespace {

class CurvatureEval {
public:
    CurvatureEval(const DMetric& g, const DConnectionCoeffs& G, const Table3& W)
        : g_(g), G_(G), W_(W), fr_(g.nconnection(), g.order, g.scheme) {}

    // e_c G^a_bd, cached
    const SampledField& eG(std::size_t c, std::size_t a, std::size_t b, std::size_t d) {
        static const SampledField empty;
        if (c == 3 || G_.zero(a, b, d)) return empty;
        const auto key = std::make_tuple(c, a, b, d);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        return cache_.emplace(key, fr_.e(c, G_(a, b, d))).first->second;
    }

    SampledField M(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
        SampledField acc;
        axpy(acc, 1.0, eG(c, a, b, d));
        axpy(acc, -1.0, eG(d, a, b, c));
        for (std::size_t f = 0; f < 4; ++f) {
            axpy2(acc, 1.0, G_(f, b, d), G_(a, f, c));
            axpy2(acc, -1.0, G_(f, b, c), G_(a, f, d));
            axpy2(acc, -1.0, W_(f, c, d), G_(a, b, f));
        }
        if (is_zero(acc)) acc = SampledField(g_.axes, 0.0);
        return acc;
    }

private:
    const DMetric& g_;
    const DConnectionCoeffs& G_;
    const Table3& W_;
    FrameOps fr_;
    std::map<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>, SampledField> cache_;
};

}  // namespace

SampledField curvature(const DMetric& g, const DConnectionCoeffs& G, const Table3& W, std::size_t a, std::size_t b,
                       std::size_t c, std::size_t d) {
    CurvatureEval ev(g, G, W);
    return ev.M(a, b, c, d);
}

RicciDTensor einstein_dtensor(const DMetric& g) { return einstein_dtensor(g, canonical_dconnection(g)); }

RicciDTensor einstein_dtensor(const DMetric& g, const DConnectionCoeffs& G) {
    const FrameOps fr(g.nconnection(), g.order, g.scheme);
    const Table3 W = nonholonomy_coefficients(fr);
    CurvatureEval ev(g, G, W);
    RicciDTensor out;
    const SampledField zero(g.axes, 0.0);
    for (auto& row : out.R) row.fill(zero);
    for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t d = 0; d < 4; ++d) {
            const bool bh = b < 2, dh = d < 2;
            SampledField acc = zero;
            if (bh && dh)  // R_ij = R^k_ijk
                for (std::size_t k = 0; k < 2; ++k) acc = acc + ev.M(k, b, k, d);
            else if (bh && !dh)  // R_ia = -R^k_ika
                for (std::size_t k = 0; k < 2; ++k) acc = acc - ev.M(k, b, d, k);
            else if (!bh && dh)  // R_ai = R^b_aib
                for (std::size_t c = 2; c < 4; ++c) acc = acc + ev.M(c, b, c, d);
            else  // R_ab = R^c_abc
                for (std::size_t c = 2; c < 4; ++c) acc = acc + ev.M(c, b, c, d);
            out.R[b][d] = std::move(acc);
        }
    out.scalar = zero;
    for (std::size_t a = 0; a < 4; ++a) out.scalar = out.scalar + out.R[a][a] / g.coeff(a);
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) {
            out.G[a][b] = out.R[a][b];
            if (a == b) out.G[a][b] = out.G[a][b] - 0.5 * (g.coeff(a) * out.scalar);
        }
    return out;
}

std::vector<std::uint8_t> boundary_mask(const std::vector<Grid1D>& axes, const ResidualOptions& opt) {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.size();
    std::vector<std::uint8_t> mask(n, 0);
    if (opt.include_boundary || opt.boundary_layers == 0) return mask;
    const std::size_t L = opt.boundary_layers;
    std::vector<std::size_t> shape;
    for (const auto& a : axes) shape.push_back(a.size());
    for (std::size_t lin = 0; lin < n; ++lin) {
        std::size_t rem = lin;
        for (std::size_t ax = shape.size(); ax-- > 0;) {
            const std::size_t i = rem % shape[ax];
            rem /= shape[ax];
            if (shape[ax] > 2 * L + 1 && (i < L || i + L >= shape[ax])) mask[lin] = 1;
        }
    }
    return mask;
}

double masked_max(const SampledField& f, const std::vector<std::uint8_t>& mask) {
    double m = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (mask.empty() || !mask[i]) m = std::max(m, std::fabs(f[i]));
    return m;
}

namespace {

// First v-derivative prepared for a second differentiation along v.
SampledField nestable_v(const DMetric& g, const SampledField& dv, const std::string& name) {
    const auto it = g.aux.find("terminal." + name + "_v");
    if (it == g.aux.end() || g.order.integer()) return with_terminal_limit(dv, 2, g.order);
    const SampledField& lim = it->second;
    if (lim.rank() != 2 || lim.axis(0) != g.axes[0] || lim.axis(1) != g.axes[1])
        throw ShapeError("terminal." + name + "_v must be sampled on the (x1, x2) chart");
    const Grid1D& v = g.axes[2];
    const double a = g.order.has_terminal(2) ? g.order.terminal(2) : v.terminal();
    if (v.front() != a) return dv;
    SampledField out = dv;
    const std::size_t nv = v.size();
    for (std::size_t i = 0; i < lim.size(); ++i) out[i * nv] = lim[i];
    return out;
}

}  // namespace

ResidualFields reduced_residual_fields(const DMetric& g, const SourceSpec& src, const ResidualOptions& opt) {
    g.validate();
    src.validate(g.axes);
    const FracOrder& o = g.order;
    const Scheme s = g.scheme;
    auto d = [&](std::size_t axis, const SampledField& f) { return partial(f, axis, o, s); };

    ResidualFields r;
    const std::size_t n = g.size();
    const SampledField& g1 = g.g1;
    const SampledField& g2 = g.g2;
    const SampledField& h3 = g.h3;
    const SampledField& h4 = g.h4;

    std::vector<std::uint8_t> singular(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!g.singular.empty() && g.singular[i]) singular[i] = 1;
        for (std::size_t a = 0; a < 4; ++a)
            if (std::fabs(g.coeff(a)[i]) < opt.singular_tol) singular[i] = 1;
    }

    {
        const SampledField g1a = d(0, g1), g2a = d(0, g2), g1b = d(1, g1), g2b = d(1, g2);
        const SampledField g2aa = d(0, g2a), g1bb = d(1, g1b);
        const SampledField u4 = src.upsilon4_3d(g.axes);
        r.eq1 = SampledField(g.axes, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double br = g2aa[i] - g1a[i] * g2a[i] / (2.0 * g1[i]) - g2a[i] * g2a[i] / (2.0 * g2[i]) + g1bb[i] -
                              g1b[i] * g2b[i] / (2.0 * g2[i]) - g1b[i] * g1b[i] / (2.0 * g1[i]);
            r.eq1[i] = -br / (2.0 * g1[i] * g2[i]) + u4[i];
        }
    }

    const SampledField h3v = d(2, h3), h4v = d(2, h4), h4vv = d(2, nestable_v(g, h4v, "h4"));
    SampledField beta(g.axes, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        beta[i] = h4vv[i] - h4v[i] * h4v[i] / (2.0 * h4[i]) - h3v[i] * h4v[i] / (2.0 * h3[i]);

    r.eq2 = SampledField(g.axes, 0.0);
    for (std::size_t i = 0; i < n; ++i) r.eq2[i] = -beta[i] / (2.0 * h3[i] * h4[i]) + src.upsilon2[i];

    const SampledField* w[2] = {&g.w1, &g.w2};
    const SampledField* nn[2] = {&g.n1, &g.n2};
    for (std::size_t k = 0; k < 2; ++k) {
        // nested: v innermost, then x^k
        const SampledField dh3 = d(k, h3), dh4 = d(k, h4), dh4v = d(k, h4v);
        SampledField e3(g.axes, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            e3[i] = (*w[k])[i] * beta[i] / (2.0 * h4[i]) +
                    h4v[i] / (4.0 * h4[i]) * (dh3[i] / h3[i] + dh4[i] / h4[i]) - dh4v[i] / (2.0 * h4[i]);
        r.eq3[k] = std::move(e3);

        const SampledField nv = d(2, *nn[k]), nvv = d(2, nestable_v(g, nv, k == 0 ? "n1" : "n2"));
        SampledField e4(g.axes, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            e4[i] = h4[i] / (2.0 * h3[i]) * nvv[i] - (h4[i] / h3[i] * h3v[i] - 1.5 * h4v[i]) * nv[i] / (2.0 * h3[i]);
        r.eq4[k] = std::move(e4);
    }

    for (std::size_t i = 0; i < n; ++i) {
        const bool finite = std::isfinite(r.eq1[i]) && std::isfinite(r.eq2[i]) && std::isfinite(r.eq3[0][i]) &&
                            std::isfinite(r.eq3[1][i]) && std::isfinite(r.eq4[0][i]) && std::isfinite(r.eq4[1][i]);
        if (!finite) singular[i] = 1;
    }
    r.mask = boundary_mask(g.axes, opt);
    for (std::size_t i = 0; i < n; ++i) {
        if (singular[i]) {
            ++r.singular_nodes;
            r.mask[i] = 1;
        }
    }
    return r;
}

double ResidualReport::max_abs() const {
    return std::max({eq1.max_abs, eq2.max_abs, eq3.max_abs, eq4.max_abs});
}

ResidualReport reduced_residuals(const DMetric& g, const SourceSpec& src, const ResidualOptions& opt) {
    const ResidualFields f = reduced_residual_fields(g, src, opt);
    ResidualReport r;
    r.eq1 = stat(f.eq1, f.mask);
    r.eq2 = stat(f.eq2, f.mask);
    const EqStat a = stat(f.eq3[0], f.mask), b = stat(f.eq3[1], f.mask);
    r.eq3 = {std::max(a.max_abs, b.max_abs), 0.5 * (a.mean_abs + b.mean_abs)};
    const EqStat c = stat(f.eq4[0], f.mask), e = stat(f.eq4[1], f.mask);
    r.eq4 = {std::max(c.max_abs, e.max_abs), 0.5 * (c.mean_abs + e.mean_abs)};
    r.singular_nodes = f.singular_nodes;
    for (auto m : f.mask) r.evaluated_nodes += m ? 0 : 1;
    for (const auto& a : g.axes) r.shape.push_back(a.size());
    r.boundary_included = opt.include_boundary;
    r.lc = lc_conditions(g, opt);
    return r;
}

std::map<std::string, SampledField> lc_condition_fields(const DMetric& g) {
    g.validate();
    const FrameOps fr(g.nconnection(), g.order, g.scheme);
    std::map<std::string, SampledField> out;
    const SampledField lnh4 = g.h4.map([](double x) { return std::log(std::fabs(x)); });
    const SampledField* w[2] = {&g.w1, &g.w2};
    const SampledField* n[2] = {&g.n1, &g.n2};
    for (std::size_t i = 0; i < 2; ++i) {
        const std::string sfx = std::to_string(i + 1);
        out["w_star_" + sfx] = fr.partial(2, *w[i]) - fr.e(i, lnh4);
        out["n_star_" + sfx] = fr.partial(2, *n[i]);
    }
    out["ew_sym"] = fr.e(1, g.w1) - fr.e(0, g.w2);
    out["dn_sym"] = fr.partial(0, g.n2) - fr.partial(1, g.n1);
    return out;
}

std::map<std::string, double> lc_conditions(const DMetric& g, const ResidualOptions& opt) {
    const auto fields = lc_condition_fields(g);
    std::vector<std::uint8_t> mask = boundary_mask(g.axes, opt);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!g.singular.empty() && g.singular[i]) mask[i] = 1;
        if (std::fabs(g.h4[i]) < opt.singular_tol) mask[i] = 1;
    }
    std::map<std::string, double> out;
    out["w_star"] = std::max(masked_max(fields.at("w_star_1"), mask), masked_max(fields.at("w_star_2"), mask));
    out["ew_sym"] = masked_max(fields.at("ew_sym"), mask);
    out["n_star"] = std::max(masked_max(fields.at("n_star_1"), mask), masked_max(fields.at("n_star_2"), mask));
    out["dn_sym"] = masked_max(fields.at("dn_sym"), mask);
    return out;
}

}  // namespace frgrav
