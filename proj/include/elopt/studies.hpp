#pragma once

#include <atomic>
#include <cmath>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "elopt/optimize.hpp"

namespace elopt {

// target initial datum: parabolic bump on a 0.2 pedestal
inline double reference_datum(double x) {
    return (std::abs(x) <= 0.5 ? 0.25 - x * x : 0.0) + 0.2;
}

// optimization start: upstream pedestal with a downstream step
inline double initial_guess_datum(double x) { return (x >= 0.0 ? 0.25 : 0.0) + 0.2; }

inline double riemann_half_datum(double x) { return x >= 0.0 ? 0.5 : 0.0; }

inline constexpr double reference_dx = 0.002;
inline constexpr double reference_dt = 0.001;
inline constexpr double reference_T = 0.25;

// fine-mesh target trajectory, fully stored
inline ReferenceSolution make_reference(bool nonlocal, double H = 0.5,
                                        const KernelSpec& kernel = affine_kernel()) {
    Grid1D g = make_grid(-1.0, 1.0, reference_dx);
    CellField u0 = project_function(reference_datum, g);
    SchemeConfig cfg;
    cfg.dx = reference_dx;
    cfg.dt = reference_dt;
    cfg.T = reference_T;
    cfg.store_every = 1;
    if (nonlocal) {
        cfg.H = H;
        cfg.kernel = kernel;
    }
    return make_reference_solution(run(u0, greenshields(), cfg), nonlocal,
                                   nonlocal ? std::optional<double>(H) : std::nullopt);
}

// largest cell-aligned window of g inside [lo, hi]
inline std::pair<double, double> snap_window_inside(const Grid1D& g, double lo, double hi) {
    double rlo = (std::max(lo, g.x_min) - g.x_min) / g.dx;
    double rhi = (std::min(hi, g.x_max) - g.x_min) / g.dx;
    long long klo = static_cast<long long>(std::ceil(rlo - align_tol));
    long long khi = static_cast<long long>(std::floor(rhi + align_tol));
    klo = std::max<long long>(klo, 0);
    khi = std::min<long long>(khi, g.n_cells);
    if (klo >= khi)
        detail::fail("no aligned window of ", g.describe(), " inside [", lo, ", ", hi, "]");
    return {g.x_min + klo * g.dx, g.x_min + khi * g.dx};
}

// L1 distance of piecewise-constant fields on possibly different meshes,
// evaluated on the finer one over cells with midpoint in [w_lo, w_hi]
inline double l1_cross_grid(const CellField& a, const CellField& b, double w_lo, double w_hi) {
    const CellField& fine = (a.grid.dx <= b.grid.dx) ? a : b;
    const CellField& coarse = (a.grid.dx <= b.grid.dx) ? b : a;
    double s = 0.0;
    for (int j = 0; j < fine.grid.n_cells; ++j) {
        double xm = fine.grid.midpoint(j);
        if (xm < w_lo - time_tol || xm > w_hi + time_tol) continue;
        s += std::abs(fine.values[static_cast<size_t>(j)] -
                      coarse.values[static_cast<size_t>(coarse.grid.cell_containing(xm))]);
    }
    return s * fine.grid.dx;
}

enum class StudyKind {
    grid_convergence_local,
    grid_convergence_nonlocal,
    gamma_minimizers,
    double_limit,
    nl2l_solutions
};

enum class Coupling { half_h, pow_1_1 };

inline double coupled_dx(Coupling c, double H) {
    return c == Coupling::half_h ? H / 2.0 : std::pow(H, 1.1);
}

struct StudySpec {
    StudyKind kind = StudyKind::grid_convergence_local;
    std::vector<double> dx_list = {0.08, 0.04, 0.02, 0.01};
    std::vector<double> H_list;   // per-kind defaults applied by the runners
    double dx = 0.01;             // single-mesh studies
    double T = 0.25;
    double domain_lo = -1.0;
    double domain_hi = 1.0;
    double ref_H = 0.5;
    std::vector<Coupling> couplings = {Coupling::half_h, Coupling::pow_1_1};
    AdmissibleSpec admissible;
    OptimizerConfig optimizer;
    bool auto_tolerances = true;  // step dx^3, optimality dx^2
    bool parallel_rows = false;
    KernelSpec kernel = affine_kernel();
};

struct StudyRow {
    double dx = 0.0;
    double H = 0.0;  // 0 marks a local-scheme row
    double rel_error = 0.0;
    double objective = 0.0;
    int iterations = 0;
    long long evaluations = 0;
    double optimality = 0.0;
    std::string status = "ok";
};

struct StudyResult {
    std::vector<StudyRow> rows;
    std::vector<std::pair<double, double>> curve;  // (mesh or horizon, error)
    std::string curve_label;
    std::vector<CellField> minimizers;  // aligned with rows; empty field on failure
};

namespace detail {

inline void check_strictly_monotone(const std::vector<double>& xs, const char* what) {
    if (xs.empty()) fail(what, " must not be empty");
    if (xs.size() == 1) return;
    bool inc = xs[1] > xs[0];
    for (size_t i = 0; i + 1 < xs.size(); ++i) {
        bool ok = inc ? xs[i + 1] > xs[i] : xs[i + 1] < xs[i];
        if (!ok) fail(what, " must be strictly monotone");
    }
}

// horizon truncated to a whole number of steps, never exceeding T
inline std::pair<double, int> truncated_horizon(double T, double dt) {
    int M = static_cast<int>(std::floor(T / dt + 1e-9));
    if (M < 1) fail("horizon T=", T, " shorter than one step dt=", dt);
    return {M * dt, M};
}

template <class Fn>
inline void for_each_index(int count, int workers, Fn fn) {
    if (workers <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::thread> pool;
    int np = std::min(workers, count);
    pool.reserve(static_cast<size_t>(np));
    for (int w = 0; w < np; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

struct RowSetup {
    double dx = 0.0;
    double H = 0.0;  // 0 -> local scheme
    OptimizerConfig opt;
    Grid1D grid;
};

// one tracking minimization: start from the projected step guess
inline std::pair<StudyRow, CellField> run_tracking_row(
    const RowSetup& row, const StudySpec& spec,
    const std::shared_ptr<const ReferenceSolution>& ref) {
    StudyRow out;
    out.dx = row.dx;
    out.H = row.H;
    SchemeConfig cfg;
    cfg.dx = row.dx;
    double dt = row.dx / 2.0;
    auto [T_run, M] = truncated_horizon(spec.T, dt);
    (void)M;
    cfg.dt = dt;
    cfg.T = T_run;
    cfg.store_every = 1;
    cfg.kernel = spec.kernel;
    if (row.H > 0.0) cfg.H = row.H;

    auto window = snap_window_inside(row.grid, spec.domain_lo, spec.domain_hi);
    ObjectiveSpec ospec;
    ospec.terms = {{TermKind::distributed_tracking, 1.0, window.first, window.second, 1.0}};
    ospec.reference = ref;
    ObjectiveFn obj = make_objective(ospec, greenshields(), cfg, row.grid);

    CellField u_start =
        project_admissible(project_function(initial_guess_datum, row.grid), spec.admissible)
            .field;
    OptimizationReport rep = minimize(obj, u_start, spec.admissible, row.opt);
    out.objective = rep.value;
    out.iterations = rep.iterations;
    out.evaluations = rep.evaluations;
    out.optimality = rep.first_order_optimality;
    return {out, rep.minimizer};
}

}  // namespace detail

// sup-in-time L1 gap between the nonlocal and local solutions from one datum,
// swept over the horizon list
inline StudyResult nl2l_solutions_study(const CellField& u_o, const std::vector<double>& H_list,
                                        double T, const KernelSpec& kernel = affine_kernel()) {
    detail::check_strictly_monotone(H_list, "H_list");
    double dx = u_o.grid.dx;
    double dt = dx / 2.0;
    auto [T_run, M] = detail::truncated_horizon(T, dt);
    (void)M;
    SchemeConfig cfg;
    cfg.dx = dx;
    cfg.dt = dt;
    cfg.T = T_run;
    cfg.store_every = 1;
    cfg.kernel = kernel;
    Trajectory local = run(u_o, greenshields(), cfg);

    StudyResult res;
    res.curve_label = "sup_l1_gap";
    for (double H : H_list) {
        StudyRow row;
        row.dx = dx;
        row.H = H;
        try {
            SchemeConfig ncfg = cfg;
            ncfg.H = H;
            Trajectory nl = run(u_o, greenshields(), ncfg);
            double sup = 0.0;
            for (size_t m = 0; m < local.states.size(); ++m) {
                double d = detail::sum_abs_diff(nl.states[m], local.states[m], 0,
                                                u_o.grid.n_cells) *
                           dx;
                sup = std::max(sup, d);
            }
            row.rel_error = sup;
            res.curve.emplace_back(H, sup);
        } catch (const std::exception& e) {
            row.status = std::string("error: ") + e.what();
        }
        res.rows.push_back(row);
        res.minimizers.push_back({});
    }
    return res;
}

// tracking minimizations over a mesh sweep, error against the fine target datum
inline StudyResult grid_convergence_study(const StudySpec& spec) {
    detail::check_strictly_monotone(spec.dx_list, "dx_list");
    bool nonlocal = spec.kind == StudyKind::grid_convergence_nonlocal;
    auto ref = std::make_shared<const ReferenceSolution>(
        make_reference(nonlocal, spec.ref_H, spec.kernel));
    CellField fine_datum{ref->traj.grid, ref->traj.states.front()};
    double denom = l1_norm(fine_datum, spec.domain_lo, spec.domain_hi);

    int count = static_cast<int>(spec.dx_list.size());
    StudyResult res;
    res.curve_label = "rel_l1_error";
    res.rows.resize(static_cast<size_t>(count));
    res.minimizers.resize(static_cast<size_t>(count));
    detail::for_each_index(count, spec.parallel_rows ? spec.optimizer.n_workers : 1, [&](int i) {
        double dx = spec.dx_list[static_cast<size_t>(i)];
        detail::RowSetup row;
        row.dx = dx;
        row.H = nonlocal ? spec.ref_H : 0.0;
        row.grid = make_grid(spec.domain_lo, spec.domain_hi, dx);
        row.opt = spec.optimizer;
        if (spec.parallel_rows) row.opt.n_workers = 1;
        if (spec.auto_tolerances) {
            row.opt.step_tolerance = dx * dx * dx;
            row.opt.optimality_tolerance = dx * dx;
        }
        try {
            auto [r, minimizer] = detail::run_tracking_row(row, spec, ref);
            r.rel_error = l1_cross_grid(minimizer, fine_datum, spec.domain_lo, spec.domain_hi) /
                          denom;
            res.rows[static_cast<size_t>(i)] = r;
            res.minimizers[static_cast<size_t>(i)] = std::move(minimizer);
        } catch (const std::exception& e) {
            res.rows[static_cast<size_t>(i)] =
                StudyRow{dx, row.H, 0, 0, 0, 0, 0, std::string("error: ") + e.what()};
        }
    });
    for (const auto& r : res.rows) res.curve.emplace_back(r.dx, r.rel_error);
    return res;
}

// nonlocal minimizers against the local one at fixed mesh, horizon shrinking
// past the mesh width; both track the same local reference
inline StudyResult gamma_minimizers_study(const StudySpec& spec) {
    detail::check_strictly_monotone(spec.H_list, "H_list");
    if (spec.H_list.front() < spec.H_list.back() || !(spec.H_list.back() < spec.dx))
        detail::fail("gamma study expects a decreasing H_list ending below dx=", spec.dx);
    auto ref = std::make_shared<const ReferenceSolution>(make_reference(false));
    Grid1D grid = make_grid(spec.domain_lo, spec.domain_hi, spec.dx);

    detail::RowSetup base;
    base.dx = spec.dx;
    base.grid = grid;
    base.opt = spec.optimizer;
    if (spec.auto_tolerances) {
        base.opt.step_tolerance = spec.dx * spec.dx * spec.dx;
        base.opt.optimality_tolerance = spec.dx * spec.dx;
    }

    detail::RowSetup local_row = base;
    local_row.H = 0.0;
    auto [row0, u_local] = detail::run_tracking_row(local_row, spec, ref);
    double denom = l1_norm(u_local, spec.domain_lo, spec.domain_hi);

    int count = static_cast<int>(spec.H_list.size());
    StudyResult res;
    res.curve_label = "rel_l1_gap_to_local_minimizer";
    res.rows.resize(static_cast<size_t>(count) + 1);
    res.minimizers.resize(static_cast<size_t>(count) + 1);
    res.rows[0] = row0;
    res.minimizers[0] = u_local;
    detail::for_each_index(count, spec.parallel_rows ? spec.optimizer.n_workers : 1, [&](int i) {
        detail::RowSetup row = base;
        row.H = spec.H_list[static_cast<size_t>(i)];
        if (spec.parallel_rows) row.opt.n_workers = 1;
        try {
            auto [r, minimizer] = detail::run_tracking_row(row, spec, ref);
            r.rel_error =
                l1_cross_grid(minimizer, u_local, spec.domain_lo, spec.domain_hi) / denom;
            res.rows[static_cast<size_t>(i) + 1] = r;
            res.minimizers[static_cast<size_t>(i) + 1] = std::move(minimizer);
        } catch (const std::exception& e) {
            res.rows[static_cast<size_t>(i) + 1] =
                StudyRow{spec.dx, row.H, 0, 0, 0, 0, 0, std::string("error: ") + e.what()};
        }
    });
    for (size_t i = 1; i < res.rows.size(); ++i)
        res.curve.emplace_back(res.rows[i].H, res.rows[i].rel_error);
    return res;
}

// simultaneous horizon-and-mesh refinement along a coupling; error against the
// fine target datum. tolerances are pinned by the smallest mesh of the sweep.
inline StudyResult double_limit_study(const StudySpec& spec, Coupling coupling) {
    detail::check_strictly_monotone(spec.H_list, "H_list");
    auto ref = std::make_shared<const ReferenceSolution>(make_reference(false));
    CellField fine_datum{ref->traj.grid, ref->traj.states.front()};
    double denom = l1_norm(fine_datum, spec.domain_lo, spec.domain_hi);

    double dx_min = std::numeric_limits<double>::infinity();
    for (double H : spec.H_list) dx_min = std::min(dx_min, coupled_dx(coupling, H));

    int count = static_cast<int>(spec.H_list.size());
    StudyResult res;
    res.curve_label = "rel_l1_error";
    res.rows.resize(static_cast<size_t>(count));
    res.minimizers.resize(static_cast<size_t>(count));
    detail::for_each_index(count, spec.parallel_rows ? spec.optimizer.n_workers : 1, [&](int i) {
        double H = spec.H_list[static_cast<size_t>(i)];
        double dx = coupled_dx(coupling, H);
        detail::RowSetup row;
        row.dx = dx;
        row.H = H;
        // smallest grid covering the domain; dx need not divide it
        int n = static_cast<int>(
            std::ceil((spec.domain_hi - spec.domain_lo) / dx - align_tol));
        row.grid = make_grid_cells(spec.domain_lo, dx, n);
        row.opt = spec.optimizer;
        if (spec.parallel_rows) row.opt.n_workers = 1;
        if (spec.auto_tolerances) {
            row.opt.step_tolerance = dx_min * dx_min * dx_min;
            row.opt.optimality_tolerance = dx_min * dx_min;
        }
        try {
            auto [r, minimizer] = detail::run_tracking_row(row, spec, ref);
            r.rel_error = l1_cross_grid(minimizer, fine_datum, spec.domain_lo, spec.domain_hi) /
                          denom;
            res.rows[static_cast<size_t>(i)] = r;
            res.minimizers[static_cast<size_t>(i)] = std::move(minimizer);
        } catch (const std::exception& e) {
            res.rows[static_cast<size_t>(i)] =
                StudyRow{dx, H, 0, 0, 0, 0, 0, std::string("error: ") + e.what()};
        }
    });
    for (const auto& r : res.rows) res.curve.emplace_back(r.H, r.rel_error);
    return res;
}

}  // namespace elopt
