#pragma once
// Fractional calculus kernel: gamma, Caputo / Riemann-Liouville operators on
// sampled grids, Mittag-Leffler series and the fractional exterior derivative.

#include <array>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "frgrav/errors.hpp"

namespace frgrav {

double gamma(double x);
double log_gamma(double x);

// Order alpha in (0,1] together with one lower terminal per coordinate.
class FracOrder {
public:
    explicit FracOrder(double alpha, std::vector<double> terminals = {});

    double alpha() const { return alpha_; }
    // Terminal for an axis; axes without an explicit entry use 0.
    double terminal(std::size_t axis) const;
    bool has_terminal(std::size_t axis) const { return axis < terminals_.size(); }
    const std::vector<double>& terminals() const { return terminals_; }
    bool integer() const { return alpha_ == 1.0; }

private:
    double alpha_;
    std::vector<double> terminals_;
};

class Grid1D {
public:
    Grid1D() = default;
    Grid1D(std::vector<double> nodes, double terminal);
    static Grid1D uniform(double lo, double hi, std::size_t n, double terminal);
    static Grid1D uniform(double lo, double hi, std::size_t n) { return uniform(lo, hi, n, lo); }

    std::size_t size() const { return nodes_.size(); }
    const std::vector<double>& nodes() const { return nodes_; }
    double operator[](std::size_t i) const { return nodes_[i]; }
    double terminal() const { return terminal_; }
    double front() const { return nodes_.front(); }
    double back() const { return nodes_.back(); }
    Grid1D reflected() const;
    Grid1D with_terminal(double t) const { return Grid1D(nodes_, t); }

    bool operator==(const Grid1D& o) const { return nodes_ == o.nodes_ && terminal_ == o.terminal_; }

private:
    std::vector<double> nodes_;
    double terminal_ = 0.0;
};

// Scalar samples on a tensor-product grid (1-3 axes), last axis fastest.
class SampledField {
public:
    SampledField() = default;
    SampledField(std::vector<Grid1D> axes, std::vector<double> values);
    SampledField(std::vector<Grid1D> axes, double fill);

    // Samples f at every node; f receives the coordinates in axis order.
    static SampledField from_function(std::vector<Grid1D> axes,
                                      const std::function<double(std::span<const double>)>& f);

    std::size_t rank() const { return axes_.size(); }
    std::size_t size() const { return values_.size(); }
    const std::vector<Grid1D>& axes() const { return axes_; }
    const Grid1D& axis(std::size_t a) const { return axes_.at(a); }
    std::vector<std::size_t> shape() const;

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double at(std::initializer_list<std::size_t> idx) const;

    std::size_t stride(std::size_t axis) const;
    bool same_grid(const SampledField& o) const { return axes_ == o.axes_; }

    // Value-array shape and finiteness checks; throws ShapeError / DomainError.
    void validate() const;

    SampledField map(const std::function<double(double)>& f) const;

private:
    std::vector<Grid1D> axes_;
    std::vector<double> values_;
};

enum class Scheme {
    L1,   // piecewise-linear f, order 2 - alpha
    L1_2  // piecewise-quadratic f, order 3 - alpha
};

// Linear operator acting on node values of one axis: out = W f.
class LineOperator {
public:
    LineOperator() = default;
    LineOperator(std::size_t n, std::vector<double> weights) : n_(n), w_(std::move(weights)) {}

    std::size_t size() const { return n_; }
    double weight(std::size_t row, std::size_t col) const { return w_[row * n_ + col]; }
    std::span<const double> row(std::size_t r) const { return {w_.data() + r * n_, n_}; }
    void apply(const double* f, std::size_t stride, double* out, std::size_t out_stride) const;
    std::vector<double> apply(std::span<const double> f) const;
    LineOperator compose(const LineOperator& inner) const;  // this * inner

private:
    std::size_t n_ = 0;
    std::vector<double> w_;
};

inline constexpr Scheme kDefaultScheme = Scheme::L1_2;

// Order of the polynomial stencils used when alpha == 1.
inline constexpr int kIntegerStencilPoints = 9;

LineOperator caputo_operator(const Grid1D& g, double alpha, Scheme scheme = kDefaultScheme);
LineOperator rl_integral_operator(const Grid1D& g, double alpha);
// Plain derivative of the local interpolating polynomial (alpha == 1 path).
LineOperator integer_derivative_operator(const Grid1D& g, int points = kIntegerStencilPoints);

// Pointwise operations on a 1-D field.
double caputo_left(const SampledField& f, const FracOrder& ord, double x, Scheme scheme = kDefaultScheme);
double caputo_right(const SampledField& f, const FracOrder& ord, double x, Scheme scheme = kDefaultScheme);
double rl_left_derivative(const SampledField& f, const FracOrder& ord, double x, Scheme scheme = kDefaultScheme);
double rl_integral(const SampledField& f, const FracOrder& ord, double x);

// Whole-field operations along one axis; results live on the same grid.
SampledField caputo_axis(const SampledField& f, std::size_t axis, double alpha, Scheme scheme = kDefaultScheme);
SampledField rl_derivative_axis(const SampledField& f, std::size_t axis, double alpha, Scheme scheme = kDefaultScheme);
SampledField rl_integral_axis(const SampledField& f, std::size_t axis, double alpha);
SampledField apply_axis(const SampledField& f, std::size_t axis, const LineOperator& op);
// Caputo derivative along an axis, honouring explicit terminals carried by the order.
SampledField partial(const SampledField& f, std::size_t axis, const FracOrder& ord, Scheme scheme = kDefaultScheme);
SampledField integral(const SampledField& f, std::size_t axis, const FracOrder& ord);

// Inverse of the discrete Caputo operator: u vanishes at the terminal and
// partial(u) reproduces f at every later node. Used where constructed fields
// must be exact under the same discretization. Falls back to the quadrature
// integral when the grid does not start at its terminal.
// Replaces the terminal-node values of a Caputo derivative by the limit of a
// fit to the near-terminal expansion. The plain discrete operator returns 0
// there, which is only right for data smooth at the terminal; nested
// derivatives are taken of this corrected field. Identity at alpha = 1.
inline constexpr std::size_t kTerminalLimitPoints = 4;
SampledField with_terminal_limit(const SampledField& df, std::size_t axis, const FracOrder& ord);

LineOperator antiderivative_operator(const Grid1D& g, double alpha, Scheme scheme = kDefaultScheme);
SampledField antiderivative(const SampledField& f, std::size_t axis, const FracOrder& ord,
                            Scheme scheme = kDefaultScheme);

// Nodewise arithmetic; operands must share a grid.
SampledField operator+(const SampledField& a, const SampledField& b);
SampledField operator-(const SampledField& a, const SampledField& b);
SampledField operator*(const SampledField& a, const SampledField& b);
SampledField operator/(const SampledField& a, const SampledField& b);
SampledField operator*(double s, const SampledField& a);
SampledField operator+(double s, const SampledField& a);
SampledField operator-(const SampledField& a);

// Series cutoff and admissible argument range.
inline constexpr double kMittagLefflerMaxArg = 30.0;
inline constexpr double kMittagLefflerRelTol = 1e-14;

double mittag_leffler(double alpha, double z);

double caputo_power_rule(double alpha, double beta, double x, double terminal);

struct OneForm {
    std::vector<SampledField> coeff;  // one per axis
};

// Antisymmetric coefficients; only i < j is stored, so w(i,j) == -w(j,i) exactly.
class TwoForm {
public:
    explicit TwoForm(std::size_t dim);
    std::size_t dim() const { return dim_; }
    SampledField& upper(std::size_t i, std::size_t j);
    const SampledField& upper(std::size_t i, std::size_t j) const;
    double operator()(std::size_t i, std::size_t j, std::size_t node) const;

private:
    std::size_t slot(std::size_t i, std::size_t j) const;
    std::size_t dim_;
    std::vector<SampledField> c_;
};

OneForm exterior_derivative(const SampledField& f, const FracOrder& ord, Scheme scheme = kDefaultScheme);
TwoForm exterior_derivative(const OneForm& w, const FracOrder& ord, Scheme scheme = kDefaultScheme);

}  // namespace frgrav
