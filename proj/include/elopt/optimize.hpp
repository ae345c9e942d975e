#pragma once

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

#include "elopt/objectives.hpp"

namespace elopt {

struct OptimizerConfig {
    int max_iterations = 1000;
    long long max_evaluations = 100000;
    double step_tolerance = 1e-6;        // callers usually set dx^3
    double optimality_tolerance = 1e-4;  // callers usually set dx^2
    double fd_step = 1e-6;
    double armijo_c = 1e-4;
    double armijo_shrink = 0.5;
    int max_backtracks = 30;
    int n_workers = 1;  // parallel gradient probes; reduction order is fixed

    void validate() const {
        if (max_iterations < 1 || max_evaluations < 1) detail::fail("empty optimizer budget");
        if (!(step_tolerance > 0.0) || !(optimality_tolerance > 0.0))
            detail::fail("tolerances must be positive");
        if (!(fd_step > 0.0)) detail::fail("fd_step must be positive");
        if (!(armijo_c > 0.0 && armijo_c < 1.0) || !(armijo_shrink > 0.0 && armijo_shrink < 1.0))
            detail::fail("bad line-search constants");
        if (max_backtracks < 1 || n_workers < 1) detail::fail("bad optimizer limits");
    }
};

inline OptimizerConfig optimizer_defaults_for_mesh(double dx) {
    OptimizerConfig cfg;
    cfg.step_tolerance = dx * dx * dx;
    cfg.optimality_tolerance = dx * dx;
    return cfg;
}

struct Gradient {
    CellField values;
    std::vector<int> pinned_cells;  // zero probe displacement (degenerate box)
    long long n_evals = 0;
};

// forward differences with probes clipped to the box; the divisor is the
// actual displacement. a cell at the upper bound is probed downward instead.
inline Gradient fd_gradient(const ObjectiveFn& obj, const CellField& u, double h,
                            const AdmissibleSpec& adm, double base_value,
                            int n_workers = 1) {
    if (!(h > 0.0)) detail::fail("fd_gradient: step must be positive, got ", h);
    int n = u.grid.n_cells;
    Gradient g{make_field(u.grid), {}, 0};
    std::vector<char> pinned(static_cast<size_t>(n), 0);

    auto probe_range = [&](int j_begin, int j_end) {
        CellField work = u;
        for (int j = j_begin; j < j_end; ++j) {
            double uj = work.values[static_cast<size_t>(j)];
            double target = std::min(uj + h, adm.box_hi);
            double d = target - uj;
            if (d <= 0.0) {
                target = std::max(uj - h, adm.box_lo);
                d = target - uj;
            }
            if (d == 0.0) {
                g.values.values[static_cast<size_t>(j)] = 0.0;
                pinned[static_cast<size_t>(j)] = 1;
                continue;
            }
            work.values[static_cast<size_t>(j)] = target;
            g.values.values[static_cast<size_t>(j)] = (obj(work) - base_value) / d;
            work.values[static_cast<size_t>(j)] = uj;
        }
    };

    int workers = std::min(n_workers, n);
    if (workers <= 1) {
        probe_range(0, n);
    } else {
        std::vector<std::thread> pool;
        int chunk = (n + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            int b = w * chunk, e = std::min(n, b + chunk);
            if (b >= e) break;
            pool.emplace_back(probe_range, b, e);
        }
        for (auto& t : pool) t.join();
    }
    for (int j = 0; j < n; ++j)
        if (pinned[static_cast<size_t>(j)]) g.pinned_cells.push_back(j);
    g.n_evals = n - static_cast<long long>(g.pinned_cells.size());
    return g;
}

inline Gradient fd_gradient(const ObjectiveFn& obj, const CellField& u, double h,
                            const AdmissibleSpec& adm) {
    return fd_gradient(obj, u, h, adm, obj(u), 1);
}

enum class Termination { step_tol, optimality_tol, max_iter, max_eval };

inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::step_tol: return "step_tol";
        case Termination::optimality_tol: return "optimality_tol";
        case Termination::max_iter: return "max_iter";
        case Termination::max_eval: return "max_eval";
    }
    return "?";
}

struct HistoryEntry {
    int iteration = 0;
    double value = 0.0;
    double optimality = 0.0;
    double step_norm = 0.0;  // sup norm of the step that produced this iterate
};

struct OptimizationReport {
    CellField minimizer;
    double value = 0.0;
    int iterations = 0;  // accepted steps
    long long evaluations = 0;
    double first_order_optimality = 0.0;
    Termination termination = Termination::max_iter;
    std::vector<HistoryEntry> history;  // one row per iterate, start included
};

namespace detail {

inline CellField project_box_support(const CellField& u, const AdmissibleSpec& adm) {
    return project_admissible(u, adm).field;
}

// sup norm of the projected gradient residual at u
inline double first_order_optimality(const CellField& u, const CellField& g,
                                     const AdmissibleSpec& adm) {
    double m = 0.0;
    for (size_t j = 0; j < u.values.size(); ++j) {
        double p = std::min(std::max(u.values[j] - g.values[j], adm.box_lo), adm.box_hi);
        m = std::max(m, std::abs(p - u.values[j]));
    }
    return m;
}

}  // namespace detail

// projected gradient descent with Armijo backtracking from unit step length.
// history holds one row per iterate, the start included; a closing row written
// after a budget or small-step stop reuses the last measured optimality.
inline OptimizationReport minimize(const ObjectiveFn& obj, const CellField& u_start,
                                   const AdmissibleSpec& adm, const OptimizerConfig& cfg) {
    cfg.validate();
    adm.validate();
    for (double v : u_start.values)
        if (v < adm.box_lo || v > adm.box_hi)
            detail::fail("start point leaves the box [", adm.box_lo, ", ", adm.box_hi, "]");

    OptimizationReport rep;
    rep.minimizer = u_start;
    rep.value = obj(u_start);
    rep.evaluations = 1;
    int n = u_start.grid.n_cells;
    double last_opt = std::numeric_limits<double>::infinity();
    double incoming_step = 0.0;

    auto finish = [&](Termination why, bool close_row) {
        rep.termination = why;
        rep.first_order_optimality = last_opt;
        if (close_row)
            rep.history.push_back({rep.iterations, rep.value, last_opt, incoming_step});
        return rep;
    };

    for (int it = 0; it < cfg.max_iterations; ++it) {
        if (rep.evaluations + n > cfg.max_evaluations)
            return finish(Termination::max_eval, true);
        Gradient g = fd_gradient(obj, rep.minimizer, cfg.fd_step, adm, rep.value, cfg.n_workers);
        rep.evaluations += g.n_evals;
        last_opt = detail::first_order_optimality(rep.minimizer, g.values, adm);
        rep.history.push_back({it, rep.value, last_opt, incoming_step});
        if (last_opt <= cfg.optimality_tolerance)
            return finish(Termination::optimality_tol, false);

        double alpha = 1.0;
        bool accepted = false;
        CellField trial;
        double f_trial = 0.0;
        for (int bt = 0; bt < cfg.max_backtracks; ++bt) {
            CellField moved = rep.minimizer;
            for (size_t j = 0; j < moved.values.size(); ++j)
                moved.values[j] -= alpha * g.values.values[j];
            trial = detail::project_box_support(moved, adm);
            if (rep.evaluations + 1 > cfg.max_evaluations)
                return finish(Termination::max_eval, false);
            f_trial = obj(trial);
            ++rep.evaluations;
            double decrease = 0.0;
            for (size_t j = 0; j < trial.values.size(); ++j)
                decrease += g.values.values[j] * (rep.minimizer.values[j] - trial.values[j]);
            if (f_trial <= rep.value - cfg.armijo_c * decrease) {
                accepted = true;
                break;
            }
            alpha *= cfg.armijo_shrink;
        }
        if (!accepted) return finish(Termination::step_tol, false);

        incoming_step = 0.0;
        for (size_t j = 0; j < trial.values.size(); ++j)
            incoming_step =
                std::max(incoming_step, std::abs(trial.values[j] - rep.minimizer.values[j]));
        rep.minimizer = std::move(trial);
        rep.value = f_trial;
        ++rep.iterations;
        if (incoming_step <= cfg.step_tolerance) return finish(Termination::step_tol, true);
        if (rep.evaluations >= cfg.max_evaluations) return finish(Termination::max_eval, true);
    }
    return finish(Termination::max_iter, true);
}

}  // namespace elopt
