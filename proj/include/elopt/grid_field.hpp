#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace elopt {

// absolute tolerance for snapping positions to cell boundaries
inline constexpr double align_tol = 1e-9;
// absolute tolerance for time comparisons
inline constexpr double time_tol = 1e-12;

namespace detail {

template <class... Args>
[[noreturn]] inline void fail(const Args&... args) {
    std::ostringstream os;
    os.precision(17);
    (os << ... << args);
    throw std::invalid_argument(os.str());
}

}  // namespace detail

// uniform 1d mesh of closed cells [x_min + j dx, x_min + (j+1) dx]
struct Grid1D {
    double x_min = 0.0;
    double x_max = 0.0;
    double dx = 0.0;
    int n_cells = 0;

    double midpoint(int j) const { return x_min + (j + 0.5) * dx; }
    double left_edge(int j) const { return x_min + j * dx; }

    bool operator==(const Grid1D& o) const {
        return x_min == o.x_min && x_max == o.x_max && dx == o.dx && n_cells == o.n_cells;
    }
    bool operator!=(const Grid1D& o) const { return !(*this == o); }

    std::string describe() const {
        std::ostringstream os;
        os.precision(17);
        os << "[" << x_min << ", " << x_max << "] dx=" << dx << " n=" << n_cells;
        return os.str();
    }

    // cell index holding x; boundary points belong to the cell on their right,
    // except x_max which belongs to the last cell
    int cell_containing(double x) const {
        double r = (x - x_min) / dx;
        if (r < -align_tol || r > n_cells + align_tol)
            detail::fail("position ", x, " outside grid ", describe());
        double nr = std::round(r);
        long long j = (std::abs(r - nr) <= align_tol) ? static_cast<long long>(nr)
                                                      : static_cast<long long>(std::floor(r));
        if (j < 0) j = 0;
        if (j >= n_cells) j = n_cells - 1;
        return static_cast<int>(j);
    }
};

inline Grid1D make_grid(double x_min, double x_max, double dx) {
    if (!std::isfinite(x_min) || !std::isfinite(x_max) || x_max <= x_min)
        detail::fail("bad grid extent [", x_min, ", ", x_max, "]");
    if (!(dx > 0.0) || !std::isfinite(dx))
        detail::fail("bad cell width dx=", dx);
    double r = (x_max - x_min) / dx;
    long long n = std::llround(r);
    if (n < 1 || std::abs(r - static_cast<double>(n)) > align_tol)
        detail::fail("extent [", x_min, ", ", x_max, "] is not a whole number of cells of width ",
                     dx, " (ratio ", r, ")");
    return Grid1D{x_min, x_max, dx, static_cast<int>(n)};
}

// grid pinned by cell count; x_max derived (used to cover an interval that dx does not divide)
inline Grid1D make_grid_cells(double x_min, double dx, int n_cells) {
    if (!(dx > 0.0) || !std::isfinite(dx) || n_cells < 1)
        detail::fail("bad grid request dx=", dx, " n=", n_cells);
    return Grid1D{x_min, x_min + n_cells * dx, dx, n_cells};
}

struct CellField {
    Grid1D grid;
    std::vector<double> values;
};

inline CellField make_field(const Grid1D& g, double fill = 0.0) {
    return CellField{g, std::vector<double>(static_cast<size_t>(g.n_cells), fill)};
}

// cell averages by 3-point Simpson quadrature (exact for cubics on kink-free cells)
inline CellField project_function(const std::function<double(double)>& f, const Grid1D& g) {
    CellField out = make_field(g);
    for (int j = 0; j < g.n_cells; ++j) {
        double a = g.left_edge(j);
        double val = (f(a) + 4.0 * f(a + 0.5 * g.dx) + f(a + g.dx)) / 6.0;
        if (!std::isfinite(val))
            detail::fail("projection not finite on cell ", j, " (midpoint ", g.midpoint(j), ")");
        out.values[static_cast<size_t>(j)] = val;
    }
    return out;
}

namespace detail {

inline void check_same_grid(const Grid1D& a, const Grid1D& b, const char* what) {
    if (a != b) fail(what, ": grid mismatch between ", a.describe(), " and ", b.describe());
}

// index of the cell boundary nearest to w; w must sit on a boundary within align_tol
inline int boundary_index(const Grid1D& g, double w) {
    double r = (w - g.x_min) / g.dx;
    long long k = std::llround(r);
    if (k < 0 || k > g.n_cells || std::abs(w - (g.x_min + k * g.dx)) > align_tol)
        fail("window endpoint ", w, " is not a cell boundary of grid ", g.describe());
    return static_cast<int>(k);
}

// plain left-to-right sum of |a_j - b_j| over [begin, end); shared so that the
// windowed L1 metric and the p = 1 tracking term agree bitwise
inline double sum_abs_diff(const std::vector<double>& a, const std::vector<double>& b, int begin,
                           int end) {
    double s = 0.0;
    for (int j = begin; j < end; ++j)
        s += std::abs(a[static_cast<size_t>(j)] - b[static_cast<size_t>(j)]);
    return s;
}

}  // namespace detail

inline double l1_distance(const CellField& a, const CellField& b, double w_lo, double w_hi) {
    detail::check_same_grid(a.grid, b.grid, "l1_distance");
    int lo = detail::boundary_index(a.grid, w_lo);
    int hi = detail::boundary_index(a.grid, w_hi);
    if (lo >= hi) detail::fail("empty window [", w_lo, ", ", w_hi, "]");
    return detail::sum_abs_diff(a.values, b.values, lo, hi) * a.grid.dx;
}

inline double l1_distance(const CellField& a, const CellField& b) {
    detail::check_same_grid(a.grid, b.grid, "l1_distance");
    return detail::sum_abs_diff(a.values, b.values, 0, a.grid.n_cells) * a.grid.dx;
}

inline double l1_norm(const CellField& a, double w_lo, double w_hi) {
    CellField zero = make_field(a.grid);
    return l1_distance(a, zero, w_lo, w_hi);
}

inline double total_variation(const CellField& f) {
    double tv = 0.0;
    for (size_t j = 0; j + 1 < f.values.size(); ++j)
        tv += std::abs(f.values[j + 1] - f.values[j]);
    return tv;
}

// largest downward slope between adjacent cells; negative for increasing data
inline double lip_minus_discrete(const CellField& f) {
    if (f.values.size() < 2) return 0.0;
    double m = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j + 1 < f.values.size(); ++j)
        m = std::max(m, -(f.values[j + 1] - f.values[j]) / f.grid.dx);
    return m;
}

struct AdmissibleSpec {
    double box_lo = 0.0;
    double box_hi = 1.0;
    double tv_bound = 10.0;
    // support interval K; cells with midpoint outside are forced to box_lo.
    // empty means the whole domain.
    std::optional<std::pair<double, double>> support;

    void validate() const {
        if (!(box_lo <= box_hi)) detail::fail("admissible box [", box_lo, ", ", box_hi, "] empty");
        if (!(tv_bound > 0.0)) detail::fail("tv_bound must be positive, got ", tv_bound);
        if (support && !(support->first < support->second))
            detail::fail("support interval [", support->first, ", ", support->second, "] empty");
    }
};

struct ProjectionResult {
    CellField field;
    double tv = 0.0;
    bool tv_exceeded = false;  // bound is reported, never enforced
};

inline ProjectionResult project_admissible(const CellField& f, const AdmissibleSpec& spec) {
    spec.validate();
    if (spec.support) {
        const auto& [k_lo, k_hi] = *spec.support;
        if (k_lo < f.grid.x_min - align_tol || k_hi > f.grid.x_max + align_tol)
            detail::fail("support [", k_lo, ", ", k_hi, "] outside grid ", f.grid.describe());
    }
    ProjectionResult out{f, 0.0, false};
    for (int j = 0; j < f.grid.n_cells; ++j) {
        double& v = out.field.values[static_cast<size_t>(j)];
        if (spec.support) {
            double xm = f.grid.midpoint(j);
            if (xm < spec.support->first - time_tol || xm > spec.support->second + time_tol) {
                v = spec.box_lo;
                continue;
            }
        }
        v = std::min(std::max(v, spec.box_lo), spec.box_hi);
    }
    out.tv = total_variation(out.field);
    out.tv_exceeded = out.tv > spec.tv_bound;
    return out;
}

// ghost-padded field; extended index e maps to cell e - n_left of the base grid
struct ExtendedField {
    Grid1D grid;
    int n_left = 0;
    int n_right = 0;
    std::vector<double> values;  // n_left + n_cells + n_right entries
};

}  // namespace elopt
