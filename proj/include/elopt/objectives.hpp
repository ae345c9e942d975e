#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "elopt/el_scheme.hpp"

namespace elopt {

// fully stored trajectory used as tracking target
struct ReferenceSolution {
    Trajectory traj;
    bool nonlocal = false;
    std::optional<double> H;
};

inline ReferenceSolution make_reference_solution(Trajectory traj, bool nonlocal = false,
                                                 std::optional<double> H = {}) {
    if (traj.store_every != 1 ||
        traj.times.size() != static_cast<size_t>(traj.step_count) + 1)
        detail::fail("reference must store every step (store_every=", traj.store_every,
                     ", stored ", traj.times.size(), " of ", traj.step_count + 1, ")");
    return ReferenceSolution{std::move(traj), nonlocal, H};
}

// piecewise-constant lookup: latest stored time <= t, cell containing x
inline double sample_reference(const ReferenceSolution& ref, double t, double x) {
    const auto& times = ref.traj.times;
    if (t < -time_tol || t > times.back() + time_tol)
        detail::fail("sample time ", t, " outside stored range [0, ", times.back(), "]");
    auto it = std::upper_bound(times.begin(), times.end(), t + time_tol);
    size_t m = static_cast<size_t>(std::distance(times.begin(), it));
    m = (m == 0) ? 0 : m - 1;
    int j = ref.traj.grid.cell_containing(x);
    return ref.traj.states[m][static_cast<size_t>(j)];
}

namespace detail {

// reference resampled onto the evaluation grid and step times; row m holds the
// window cells [j_lo, j_hi) at time m dt
struct SampledReference {
    int j_lo = 0;
    int j_hi = 0;
    std::vector<double> table;

    static SampledReference build(const ReferenceSolution& ref, const Grid1D& grid, double dt,
                                  int steps, double w_lo, double w_hi) {
        SampledReference s;
        s.j_lo = boundary_index(grid, w_lo);
        s.j_hi = boundary_index(grid, w_hi);
        if (s.j_lo >= s.j_hi) fail("empty tracking window [", w_lo, ", ", w_hi, "]");
        int width = s.j_hi - s.j_lo;
        s.table.resize(static_cast<size_t>(steps + 1) * static_cast<size_t>(width));
        for (int m = 0; m <= steps; ++m) {
            double t = m * dt;
            for (int k = 0; k < width; ++k)
                s.table[static_cast<size_t>(m) * width + k] =
                    sample_reference(ref, t, grid.midpoint(s.j_lo + k));
        }
        return s;
    }
};

inline double tracking_sum(const std::vector<std::vector<double>>& states,
                           const SampledReference& s, double dx, double dt) {
    int width = s.j_hi - s.j_lo;
    double acc = 0.0;
    for (size_t m = 0; m < states.size(); ++m) {
        const double* row = s.table.data() + m * static_cast<size_t>(width);
        const double* u = states[m].data() + s.j_lo;
        for (int k = 0; k < width; ++k) acc += std::abs(u[k] - row[k]);
    }
    return acc * dx * dt;
}

inline void check_fully_stored(const Trajectory& traj) {
    if (traj.store_every != 1 ||
        traj.times.size() != static_cast<size_t>(traj.step_count) + 1)
        fail("tracking in time needs a fully stored trajectory (store_every=",
             traj.store_every, ")");
}

}  // namespace detail

// space-time L1 misfit against the reference over a cell-aligned window,
// initial and final states included
inline double distributed_tracking(const Trajectory& traj, const ReferenceSolution& ref,
                                   double w_lo, double w_hi) {
    detail::check_fully_stored(traj);
    auto s = detail::SampledReference::build(ref, traj.grid, traj.dt, traj.step_count, w_lo, w_hi);
    return detail::tracking_sum(traj.states, s, traj.grid.dx, traj.dt);
}

// windowed end-state misfit sum |f - target|^p dx; p = 1 agrees bitwise with
// the windowed L1 metric
inline double final_time_tracking(const CellField& f, const CellField& target, double p,
                                  double w_lo, double w_hi) {
    detail::check_same_grid(f.grid, target.grid, "final_time_tracking");
    if (!(p >= 1.0)) detail::fail("final_time_tracking: p must be >= 1, got ", p);
    if (p == 1.0) return l1_distance(f, target, w_lo, w_hi);
    int lo = detail::boundary_index(f.grid, w_lo);
    int hi = detail::boundary_index(f.grid, w_hi);
    if (lo >= hi) detail::fail("empty window [", w_lo, ", ", w_hi, "]");
    double acc = 0.0;
    for (int j = lo; j < hi; ++j)
        acc += std::pow(std::abs(f.values[static_cast<size_t>(j)] -
                                 target.values[static_cast<size_t>(j)]),
                        p);
    return acc * f.grid.dx;
}

inline double bv_regularization(const CellField& u_o) { return total_variation(u_o); }

enum class TermKind { distributed_tracking, final_time_tracking, bv_regularization };

struct ObjectiveTerm {
    TermKind kind = TermKind::distributed_tracking;
    double weight = 1.0;
    double w_lo = -1.0;
    double w_hi = 1.0;
    double p = 1.0;  // final-time terms only
};

struct ObjectiveSpec {
    std::vector<ObjectiveTerm> terms;
    std::shared_ptr<const ReferenceSolution> reference;  // needed by tracking terms

    void validate() const {
        if (terms.empty()) detail::fail("objective needs at least one term");
        for (const auto& t : terms) {
            if (!(t.weight >= 0.0) || !std::isfinite(t.weight))
                detail::fail("bad term weight ", t.weight);
            if (!(t.w_lo < t.w_hi)) detail::fail("bad term window [", t.w_lo, ", ", t.w_hi, "]");
            if (t.kind != TermKind::bv_regularization && !reference)
                detail::fail("tracking terms need a reference solution");
        }
    }
};

// single forward run, then the weighted term sum
inline double evaluate(const ObjectiveSpec& spec, const CellField& u_o, const SpeedLaw& v,
                       const SchemeConfig& cfg) {
    spec.validate();
    bool needs_full = std::any_of(spec.terms.begin(), spec.terms.end(), [](const auto& t) {
        return t.kind == TermKind::distributed_tracking;
    });
    if (needs_full && cfg.store_every != 1)
        detail::fail("distributed tracking needs store_every=1, config has ", cfg.store_every);
    Trajectory traj = run(u_o, v, cfg);
    double total = 0.0;
    for (const auto& t : spec.terms) {
        double val = 0.0;
        switch (t.kind) {
            case TermKind::distributed_tracking:
                val = distributed_tracking(traj, *spec.reference, t.w_lo, t.w_hi);
                break;
            case TermKind::final_time_tracking: {
                CellField target = make_field(u_o.grid);
                double tf = traj.times.back();
                for (int j = 0; j < u_o.grid.n_cells; ++j)
                    target.values[static_cast<size_t>(j)] =
                        sample_reference(*spec.reference, tf, u_o.grid.midpoint(j));
                val = final_time_tracking({u_o.grid, traj.states.back()}, target, t.p, t.w_lo,
                                          t.w_hi);
                break;
            }
            case TermKind::bv_regularization:
                val = bv_regularization(u_o);
                break;
        }
        total += t.weight * val;
    }
    return total;
}

using ObjectiveFn = std::function<double(const CellField&)>;

// closure with the reference pre-sampled once; evaluations agree bitwise with
// evaluate() on the same spec
inline ObjectiveFn make_objective(const ObjectiveSpec& spec, const SpeedLaw& v,
                                  const SchemeConfig& cfg, const Grid1D& eval_grid) {
    spec.validate();
    double dt = cfg.resolved_dt(v);
    int M = cfg.step_count(dt);
    struct Prepared {
        ObjectiveTerm term;
        std::optional<detail::SampledReference> sampled;  // distributed terms
        std::optional<CellField> target;                  // final-time terms
    };
    auto prepared = std::make_shared<std::vector<Prepared>>();
    for (const auto& t : spec.terms) {
        Prepared p{t, {}, {}};
        if (t.kind == TermKind::distributed_tracking) {
            if (cfg.store_every != 1)
                detail::fail("distributed tracking needs store_every=1, config has ",
                             cfg.store_every);
            p.sampled = detail::SampledReference::build(*spec.reference, eval_grid, dt, M, t.w_lo,
                                                        t.w_hi);
        } else if (t.kind == TermKind::final_time_tracking) {
            CellField target = make_field(eval_grid);
            for (int j = 0; j < eval_grid.n_cells; ++j)
                target.values[static_cast<size_t>(j)] =
                    sample_reference(*spec.reference, M * dt, eval_grid.midpoint(j));
            p.target = std::move(target);
        }
        prepared->push_back(std::move(p));
    }
    return [prepared, v, cfg, eval_grid](const CellField& u_o) -> double {
        if (u_o.grid != eval_grid)
            detail::fail("objective called on grid ", u_o.grid.describe(), ", prepared for ",
                         eval_grid.describe());
        Trajectory traj = run(u_o, v, cfg);
        double total = 0.0;
        for (const auto& p : *prepared) {
            double val = 0.0;
            switch (p.term.kind) {
                case TermKind::distributed_tracking:
                    val = detail::tracking_sum(traj.states, *p.sampled, eval_grid.dx, traj.dt);
                    break;
                case TermKind::final_time_tracking:
                    val = final_time_tracking({eval_grid, traj.states.back()}, *p.target, p.term.p,
                                              p.term.w_lo, p.term.w_hi);
                    break;
                case TermKind::bv_regularization:
                    val = bv_regularization(u_o);
                    break;
            }
            total += p.term.weight * val;
        }
        return total;
    };
}

}  // namespace elopt
