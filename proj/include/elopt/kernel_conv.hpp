#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "elopt/grid_field.hpp"

namespace elopt {

// convolution kernel shape on the reference support [-1, 0]:
// nonnegative, non-decreasing, vanishing at -1, unit integral
struct KernelSpec {
    std::string name;
    std::function<double(double)> shape;
};

namespace detail {

inline void validate_kernel_shape(const KernelSpec& k) {
    constexpr int n = 10000;  // even, for composite Simpson
    double prev = -std::numeric_limits<double>::infinity();
    std::vector<double> vals(n + 1);
    for (int i = 0; i <= n; ++i) {
        double x = -1.0 + static_cast<double>(i) / n;
        double v = k.shape(x);
        if (!std::isfinite(v) || v < -1e-12)
            fail("kernel '", k.name, "' negative or not finite at ", x, " (", v, ")");
        if (v < prev - 1e-12)
            fail("kernel '", k.name, "' not non-decreasing at ", x);
        prev = std::max(prev, v);
        vals[static_cast<size_t>(i)] = v;
    }
    if (std::abs(vals[0]) > 1e-12)
        fail("kernel '", k.name, "' must vanish at -1, got ", vals[0]);
    double integral = 0.0;
    double h = 1.0 / n;
    for (int i = 0; i + 2 <= n; i += 2)
        integral += h / 3.0 * (vals[i] + 4.0 * vals[i + 1] + vals[i + 2]);
    if (std::abs(integral - 1.0) > 1e-12)
        fail("kernel '", k.name, "' integral is ", integral, ", expected 1");
}

}  // namespace detail

inline KernelSpec make_kernel(std::string name, std::function<double(double)> shape) {
    KernelSpec k{std::move(name), std::move(shape)};
    detail::validate_kernel_shape(k);
    return k;
}

inline KernelSpec affine_kernel() {
    return make_kernel("affine", [](double x) { return 2.0 * (x + 1.0); });
}

// scaled kernel value (1/H) shape(x/H); zero outside [-H, 0]
inline double kernel_value(const KernelSpec& k, double H, double x) {
    if (!(H > 0.0)) detail::fail("kernel horizon must be positive, got ", H);
    if (x < -H || x > 0.0) return 0.0;
    return k.shape(x / H) / H;
}

// downstream-looking quadrature weights: tap i multiplies the value i cells ahead
struct DiscreteKernel {
    double H = 0.0;
    double dx = 0.0;
    int n_taps = 0;
    std::vector<double> weights;  // nonnegative, sum 1
};

inline DiscreteKernel discrete_weights(const KernelSpec& k, double H, double dx) {
    if (!(H > 0.0)) detail::fail("kernel horizon must be positive, got ", H);
    if (!(dx > 0.0)) detail::fail("cell width must be positive, got ", dx);
    double r = H / dx;
    long long nr = std::llround(r);
    // snap near-integer ratios so H == m dx never gains a spurious tap
    long long n = (std::abs(r - static_cast<double>(nr)) <= align_tol * std::max(1.0, r))
                      ? nr
                      : static_cast<long long>(std::ceil(r));
    n = std::max<long long>(n, 1);
    DiscreteKernel dk{H, dx, static_cast<int>(n), {}};
    dk.weights.resize(static_cast<size_t>(n));
    double sum = 0.0;
    for (long long i = 0; i < n; ++i) {
        double s = kernel_value(k, H, -static_cast<double>(i) * dx);
        dk.weights[static_cast<size_t>(i)] = s;
        sum += s;
    }
    if (!(sum > 0.0)) detail::fail("degenerate kernel sampling for H=", H, " dx=", dx);
    for (auto& w : dk.weights) w /= sum;
    return dk;
}

// out_j = sum_i w_i f_{j+i}; taps read the current cell and its downstream side only
inline CellField convolve(const ExtendedField& f, const DiscreteKernel& k) {
    if (f.grid.dx != k.dx)
        detail::fail("convolve: kernel sampled at dx=", k.dx, " but field has dx=", f.grid.dx);
    if (f.n_right < k.n_taps - 1)
        detail::fail("convolve: needs ", k.n_taps - 1, " right ghost cells, field has ", f.n_right);
    CellField out = make_field(f.grid);
    int n = f.grid.n_cells;
    for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < k.n_taps; ++i)
            acc += k.weights[static_cast<size_t>(i)] *
                   f.values[static_cast<size_t>(f.n_left + j + i)];
        out.values[static_cast<size_t>(j)] = acc;
    }
    return out;
}

}  // namespace elopt
