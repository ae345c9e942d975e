#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "elopt/grid_field.hpp"
#include "elopt/kernel_conv.hpp"

namespace elopt {

// demand speed v(r) on densities r in [0, 1]; v(1) = 0, non-increasing
struct SpeedLaw {
    enum class Kind { greenshields, custom };
    Kind kind = Kind::greenshields;
    std::function<double(double)> fn;  // only consulted for custom laws
    double v_max = 1.0;

    double operator()(double r) const { return kind == Kind::greenshields ? 1.0 - r : fn(r); }
};

inline SpeedLaw greenshields() { return SpeedLaw{SpeedLaw::Kind::greenshields, {}, 1.0}; }

inline SpeedLaw custom_speed(std::function<double(double)> fn, double v_max) {
    if (!(v_max > 0.0)) detail::fail("custom speed law needs v_max > 0, got ", v_max);
    if (std::abs(fn(1.0)) > 1e-12) detail::fail("speed law must vanish at r = 1, got ", fn(1.0));
    double prev = fn(0.0);
    for (int i = 1; i <= 256; ++i) {
        double cur = fn(static_cast<double>(i) / 256.0);
        if (cur > prev + 1e-12) detail::fail("speed law must be non-increasing on [0, 1]");
        prev = cur;
    }
    return SpeedLaw{SpeedLaw::Kind::custom, std::move(fn), v_max};
}

// strict step bound under which the averaged update is provably range-preserving
inline double strict_dt_bound(double dx, const SpeedLaw& v) { return dx / (8.0 * v.v_max); }

inline double compute_dt(double dx, const SpeedLaw& v, double cfl_factor = 1.0) {
    if (!(dx > 0.0)) detail::fail("compute_dt: dx must be positive, got ", dx);
    if (!(v.v_max > 0.0)) detail::fail("compute_dt: v_max must be positive, got ", v.v_max);
    if (!(cfl_factor > 0.0)) detail::fail("compute_dt: cfl_factor must be positive");
    return cfl_factor * dx / (8.0 * v.v_max);
}

struct SchemeConfig {
    double dx = 0.0;
    std::optional<double> dt;          // exactly one of dt, cfl_factor
    std::optional<double> cfl_factor;
    double T = 0.0;
    std::optional<double> H;           // nonlocal horizon; empty runs the local scheme
    KernelSpec kernel = affine_kernel();
    int store_every = 1;

    double resolved_dt(const SpeedLaw& v) const {
        if (dt && cfl_factor) detail::fail("give either dt or cfl_factor, not both");
        if (dt) {
            if (!(*dt > 0.0)) detail::fail("dt must be positive, got ", *dt);
            return *dt;
        }
        if (cfl_factor) return compute_dt(dx, v, *cfl_factor);
        detail::fail("neither dt nor cfl_factor given");
    }

    // T must be a whole number of steps; T = 0 runs no step
    int step_count(double dt_) const {
        if (T == 0.0) return 0;
        double r = T / dt_;
        long long m = std::llround(r);
        if (m < 1 || std::abs(r - static_cast<double>(m)) > 1e-9)
            detail::fail("horizon T=", T, " is not a whole number of steps of dt=", dt_,
                         " (ratio ", r, ")");
        return static_cast<int>(m);
    }
};

struct Trajectory {
    Grid1D grid;
    double dt = 0.0;
    int step_count = 0;  // M; final time is step_count * dt
    int store_every = 1;
    std::vector<double> times;
    std::vector<std::vector<double>> states;
    double run_min = 0.0;
    double run_max = 0.0;
    // set when dt exceeds the strict bound; harmless for the shipped speed law
    // with dt <= dx, but worth surfacing
    bool relaxed_dt = false;
};

inline ExtendedField extend_boundary(const CellField& f, int n_left, int n_right) {
    if (n_left < 0 || n_right < 0) detail::fail("negative ghost counts");
    if (f.values.empty()) detail::fail("cannot extend an empty field");
    ExtendedField out{f.grid, n_left, n_right, {}};
    out.values.reserve(f.values.size() + static_cast<size_t>(n_left + n_right));
    out.values.insert(out.values.end(), static_cast<size_t>(n_left), f.values.front());
    out.values.insert(out.values.end(), f.values.begin(), f.values.end());
    out.values.insert(out.values.end(), static_cast<size_t>(n_right), f.values.back());
    return out;
}

namespace detail {

// one averaged-characteristics update. ue and v are indexed on the extended
// range, interior cell j at e = j + 1; v must be filled on [0, n + 2).
// no-flux cell widths h_e = dx + dt (v_{e+1} - v_e) must stay positive.
inline void advance(const double* ue, const double* v, int n, double dx, double dt, double* h,
                    double* flux, double* out) {
    for (int e = 0; e <= n; ++e) {
        h[e] = dx + dt * (v[e + 1] - v[e]);
        if (!(h[e] > 0.0))
            throw std::runtime_error("no-flux cell collapsed: h=" + std::to_string(h[e]) +
                                     " at interface of cell " + std::to_string(e - 1) +
                                     "; reduce dt");
    }
    for (int e = 1; e <= n + 1; ++e)
        flux[e] = (ue[e] + ue[e - 1]) * (v[e] + v[e - 1]) / h[e - 1];
    for (int j = 0; j < n; ++j) {
        int e = j + 1;
        out[j] = (ue[e - 1] + 2.0 * ue[e] + ue[e + 1]) / 4.0 + dt / 4.0 * (flux[e] - flux[e + 1]);
    }
}

// speeds from cell densities
inline void speeds_local(const double* ue, int n, const SpeedLaw& v, double* vout) {
    if (v.kind == SpeedLaw::Kind::greenshields) {
        for (int e = 0; e < n + 2; ++e) vout[e] = 1.0 - ue[e];
    } else {
        for (int e = 0; e < n + 2; ++e) vout[e] = v.fn(ue[e]);
    }
}

// speeds from downstream-averaged densities; reduces bitwise to speeds_local
// when the kernel has a single unit tap
inline void speeds_nonlocal(const double* ue, int n, const SpeedLaw& v, const DiscreteKernel& k,
                            double* vout) {
    for (int e = 0; e < n + 2; ++e) {
        double acc = 0.0;
        for (int i = 0; i < k.n_taps; ++i) acc += k.weights[static_cast<size_t>(i)] * ue[e + i];
        vout[e] = (v.kind == SpeedLaw::Kind::greenshields) ? 1.0 - acc : v.fn(acc);
    }
}

}  // namespace detail

// single local update; expects one ghost cell on each side
inline CellField local_step(const ExtendedField& f, const SpeedLaw& v, double dx, double dt) {
    if (f.n_left < 1 || f.n_right < 1)
        detail::fail("local_step: needs 1 ghost cell per side, got ", f.n_left, "/", f.n_right);
    if (f.grid.dx != dx) detail::fail("local_step: dx=", dx, " but grid has ", f.grid.dx);
    int n = f.grid.n_cells;
    const double* ue = f.values.data() + (f.n_left - 1);
    std::vector<double> vbuf(static_cast<size_t>(n + 2)), h(static_cast<size_t>(n + 1)),
        flux(static_cast<size_t>(n + 2));
    CellField out = make_field(f.grid);
    detail::speeds_local(ue, n, v, vbuf.data());
    detail::advance(ue, vbuf.data(), n, dx, dt, h.data(), flux.data(), out.values.data());
    return out;
}

// single nonlocal update; expects 1 left ghost and at least n_taps right ghosts
inline CellField nonlocal_step(const ExtendedField& f, const SpeedLaw& v, const DiscreteKernel& k,
                               double dx, double dt) {
    if (f.n_left < 1 || f.n_right < k.n_taps)
        detail::fail("nonlocal_step: needs 1 left and ", k.n_taps, " right ghost cells, got ",
                     f.n_left, "/", f.n_right);
    if (f.grid.dx != dx) detail::fail("nonlocal_step: dx=", dx, " but grid has ", f.grid.dx);
    if (k.dx != dx) detail::fail("nonlocal_step: kernel sampled at dx=", k.dx, ", grid has ", dx);
    int n = f.grid.n_cells;
    const double* ue = f.values.data() + (f.n_left - 1);
    std::vector<double> vbuf(static_cast<size_t>(n + 2)), h(static_cast<size_t>(n + 1)),
        flux(static_cast<size_t>(n + 2));
    CellField out = make_field(f.grid);
    detail::speeds_nonlocal(ue, n, v, k, vbuf.data());
    detail::advance(ue, vbuf.data(), n, dx, dt, h.data(), flux.data(), out.values.data());
    return out;
}

// march u_o to T with absorbing (constant-extension) boundaries, storing every
// store_every-th state plus the initial and final ones
inline Trajectory run(const CellField& u_o, const SpeedLaw& v, const SchemeConfig& cfg) {
    if (u_o.grid.dx != cfg.dx)
        detail::fail("run: config dx=", cfg.dx, " but datum grid has ", u_o.grid.dx);
    if (u_o.values.empty()) detail::fail("run: empty initial datum");
    for (int j = 0; j < u_o.grid.n_cells; ++j) {
        double val = u_o.values[static_cast<size_t>(j)];
        if (!(val >= 0.0 && val <= 1.0))
            detail::fail("run: initial datum leaves [0, 1] at cell ", j, " (", val, ")");
    }
    if (cfg.store_every < 1) detail::fail("run: store_every must be >= 1");

    double dt = cfg.resolved_dt(v);
    int M = cfg.step_count(dt);
    int n = u_o.grid.n_cells;

    std::optional<DiscreteKernel> kern;
    int n_right = 1;
    if (cfg.H) {
        kern = discrete_weights(cfg.kernel, *cfg.H, cfg.dx);
        n_right = kern->n_taps + 1;
    }

    Trajectory traj;
    traj.grid = u_o.grid;
    traj.dt = dt;
    traj.step_count = M;
    traj.store_every = cfg.store_every;
    traj.relaxed_dt = dt > strict_dt_bound(cfg.dx, v) * (1.0 + 1e-12);
    traj.states.reserve(static_cast<size_t>(M / cfg.store_every + 2));
    traj.times.reserve(static_cast<size_t>(M / cfg.store_every + 2));
    traj.states.push_back(u_o.values);
    traj.times.push_back(0.0);
    traj.run_min = *std::min_element(u_o.values.begin(), u_o.values.end());
    traj.run_max = *std::max_element(u_o.values.begin(), u_o.values.end());

    size_t L = static_cast<size_t>(1 + n + n_right);
    std::vector<double> ue(L), vbuf(static_cast<size_t>(n + 2)), h(static_cast<size_t>(n + 1)),
        flux(static_cast<size_t>(n + 2)), u(u_o.values), unext(static_cast<size_t>(n));

    for (int m = 0; m < M; ++m) {
        ue[0] = u.front();
        std::copy(u.begin(), u.end(), ue.begin() + 1);
        std::fill(ue.begin() + 1 + n, ue.end(), u.back());
        if (kern)
            detail::speeds_nonlocal(ue.data(), n, v, *kern, vbuf.data());
        else
            detail::speeds_local(ue.data(), n, v, vbuf.data());
        try {
            detail::advance(ue.data(), vbuf.data(), n, cfg.dx, dt, h.data(), flux.data(),
                            unext.data());
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(std::string(e.what()) + " (time step " +
                                     std::to_string(m + 1) + ")");
        }
        u.swap(unext);
        for (double val : u) {
            traj.run_min = std::min(traj.run_min, val);
            traj.run_max = std::max(traj.run_max, val);
        }
        if ((m + 1) % cfg.store_every == 0 || m + 1 == M) {
            traj.states.push_back(u);
            traj.times.push_back((m + 1) * dt);
        }
    }
    return traj;
}

}  // namespace elopt
