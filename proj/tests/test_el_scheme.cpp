#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <random>

#include "elopt/el_scheme.hpp"

using namespace elopt;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

CellField bump_datum(const Grid1D& g) {
    return project_function(
        [](double x) { return (std::abs(x) <= 0.5 ? 0.25 - x * x : 0.0) + 0.2; }, g);
}

double mass(const std::vector<double>& u, double dx) {
    return std::accumulate(u.begin(), u.end(), 0.0) * dx;
}

}  // namespace

TEST_CASE("speed laws") {
    SpeedLaw v = greenshields();
    REQUIRE(v(0.0) == 1.0);
    REQUIRE(v(1.0) == 0.0);
    REQUIRE(v.v_max == 1.0);

    SpeedLaw c = custom_speed([](double r) { return (1.0 - r) * (1.0 - r); }, 1.0);
    REQUIRE_THAT(c(0.5), WithinAbs(0.25, 1e-15));

    // must vanish at r = 1
    REQUIRE_THROWS_AS(custom_speed([](double r) { return 1.0 - 0.5 * r; }, 1.0),
                      std::invalid_argument);
    // must be non-increasing
    REQUIRE_THROWS_AS(custom_speed([](double r) { return r * (1.0 - r); }, 0.25),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(custom_speed([](double r) { return 1.0 - r; }, 0.0), std::invalid_argument);
}

TEST_CASE("time step bounds") {
    REQUIRE(strict_dt_bound(0.1, greenshields()) == 0.0125);
    REQUIRE(compute_dt(0.1, greenshields()) == 0.0125);
    REQUIRE_THAT(compute_dt(0.01, greenshields(), 4.0), WithinAbs(0.005, 1e-18));
    REQUIRE_THROWS_AS(compute_dt(0.0, greenshields()), std::invalid_argument);
    REQUIRE_THROWS_AS(compute_dt(0.1, greenshields(), -1.0), std::invalid_argument);
}

TEST_CASE("scheme config resolution") {
    SchemeConfig cfg;
    cfg.dx = 0.1;
    cfg.T = 0.25;

    cfg.dt = 0.0125;
    REQUIRE(cfg.resolved_dt(greenshields()) == 0.0125);
    REQUIRE(cfg.step_count(0.0125) == 20);

    cfg.cfl_factor = 1.0;  // both given
    REQUIRE_THROWS_AS(cfg.resolved_dt(greenshields()), std::invalid_argument);

    cfg.dt.reset();
    REQUIRE(cfg.resolved_dt(greenshields()) == 0.0125);

    cfg.cfl_factor.reset();
    REQUIRE_THROWS_AS(cfg.resolved_dt(greenshields()), std::invalid_argument);

    // horizon must be a whole number of steps
    cfg.T = 0.25 + 0.004;
    REQUIRE_THROWS_AS(cfg.step_count(0.0125), std::invalid_argument);
    cfg.T = 0.0;
    REQUIRE(cfg.step_count(0.0125) == 0);
}

TEST_CASE("extend_boundary pads with edge values") {
    CellField f{make_grid_cells(0.0, 0.01, 3), {0.1, 0.5, 0.9}};
    ExtendedField e = extend_boundary(f, 1, 51);  // e.g. H = 0.5 on dx = 0.01 plus one
    REQUIRE(e.values.size() == 55);
    REQUIRE(e.values.front() == 0.1);
    REQUIRE(e.values[1] == 0.1);
    REQUIRE(e.values[4] == 0.9);
    REQUIRE(e.values.back() == 0.9);
    REQUIRE_THROWS_AS(extend_boundary(f, -1, 0), std::invalid_argument);
}

TEST_CASE("single local step oracle") {
    // two interior cells 0.2, 0.7 with constant extension, dx = 0.1, dt = 0.0125:
    // speeds (0.8, 0.8, 0.3, 0.3), widths (0.1, 0.09375, 0.1),
    // fluxes (6.4, 10.56, 8.4) give (0.312, 0.58175)
    CellField f{make_grid_cells(0.0, 0.1, 2), {0.2, 0.7}};
    CellField out = local_step(extend_boundary(f, 1, 1), greenshields(), 0.1, 0.0125);
    REQUIRE_THAT(out.values[0], WithinAbs(0.312, 1e-15));
    REQUIRE_THAT(out.values[1], WithinAbs(0.58175, 1e-15));
}

TEST_CASE("single nonlocal step oracle") {
    // same state, kernel horizon 0.2 over dx = 0.1 giving taps (2/3, 1/3):
    // downstream averages (0.2, 11/30, 0.7, 0.7), widths (47/480, 23/240, 0.1)
    CellField f{make_grid_cells(0.0, 0.1, 2), {0.2, 0.7}};
    DiscreteKernel k = discrete_weights(affine_kernel(), 0.2, 0.1);
    REQUIRE(k.n_taps == 2);
    CellField out = nonlocal_step(extend_boundary(f, 1, 2), greenshields(), k, 0.1, 0.0125);
    REQUIRE_THAT(out.values[0], WithinAbs(68299.0 / 216200.0, 1e-13));
    REQUIRE_THAT(out.values[1], WithinAbs(10601.0 / 18400.0, 1e-13));
}

TEST_CASE("step functions enforce ghost counts") {
    CellField f{make_grid_cells(0.0, 0.1, 2), {0.2, 0.7}};
    REQUIRE_THROWS_AS(local_step(extend_boundary(f, 0, 1), greenshields(), 0.1, 0.0125),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(local_step(extend_boundary(f, 1, 0), greenshields(), 0.1, 0.0125),
                      std::invalid_argument);
    DiscreteKernel k = discrete_weights(affine_kernel(), 0.2, 0.1);
    REQUIRE_THROWS_AS(nonlocal_step(extend_boundary(f, 1, 1), greenshields(), k, 0.1, 0.0125),
                      std::invalid_argument);
    // kernel sampled on a different mesh
    DiscreteKernel k2 = discrete_weights(affine_kernel(), 0.2, 0.05);
    REQUIRE_THROWS_AS(nonlocal_step(extend_boundary(f, 1, 4), greenshields(), k2, 0.1, 0.0125),
                      std::invalid_argument);
}

TEST_CASE("run with T = 0 returns the datum alone") {
    Grid1D g = make_grid(-1.0, 1.0, 0.01);
    CellField f = bump_datum(g);
    SchemeConfig cfg;
    cfg.dx = g.dx;
    cfg.dt = 0.005;
    cfg.T = 0.0;
    Trajectory traj = run(f, greenshields(), cfg);
    REQUIRE(traj.step_count == 0);
    REQUIRE(traj.states.size() == 1);
    REQUIRE(traj.times == std::vector<double>{0.0});
    REQUIRE(traj.states[0] == f.values);
}

TEST_CASE("run validates its inputs") {
    Grid1D g = make_grid(-1.0, 1.0, 0.01);
    SchemeConfig cfg;
    cfg.dx = 0.01;
    cfg.dt = 0.005;
    cfg.T = 0.1;

    CellField bad = make_field(g, 1.2);
    REQUIRE_THROWS_AS(run(bad, greenshields(), cfg), std::invalid_argument);
    CellField neg = make_field(g, 0.5);
    neg.values[7] = -0.1;
    REQUIRE_THROWS_AS(run(neg, greenshields(), cfg), std::invalid_argument);

    CellField ok = make_field(g, 0.5);
    cfg.dx = 0.02;  // datum grid disagrees
    REQUIRE_THROWS_AS(run(ok, greenshields(), cfg), std::invalid_argument);
    cfg.dx = 0.01;
    cfg.store_every = 0;
    REQUIRE_THROWS_AS(run(ok, greenshields(), cfg), std::invalid_argument);
}

TEST_CASE("constant data are fixed points of both schemes") {
    Grid1D g = make_grid(-1.0, 1.0, 0.02);
    CellField f = make_field(g, 0.37);
    SchemeConfig cfg;
    cfg.dx = g.dx;
    cfg.dt = 0.01;
    cfg.T = 0.2;
    Trajectory loc = run(f, greenshields(), cfg);
    for (const auto& s : loc.states) REQUIRE(s == f.values);
    cfg.H = 0.1;
    Trajectory nl = run(f, greenshields(), cfg);
    for (const auto& s : nl.states) REQUIRE(s == f.values);
}

TEST_CASE("nonlocal run coincides bitwise with local when H <= dx") {
    Grid1D g = make_grid(-1.0, 1.0, 0.01);
    CellField f = bump_datum(g);
    SchemeConfig cfg;
    cfg.dx = g.dx;
    cfg.dt = 0.005;
    cfg.T = 0.25;
    Trajectory loc = run(f, greenshields(), cfg);
    for (double H : {0.01, 0.005}) {
        cfg.H = H;
        Trajectory nl = run(f, greenshields(), cfg);
        REQUIRE(nl.states.size() == loc.states.size());
        for (size_t s = 0; s < nl.states.size(); ++s) REQUIRE(nl.states[s] == loc.states[s]);
    }
}

TEST_CASE("randomized data respect the maximum principle under the strict bound") {
    Grid1D g = make_grid(-1.0, 1.0, 0.02);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    SchemeConfig cfg;
    cfg.dx = g.dx;
    cfg.cfl_factor = 1.0;  // dt = dx / 8
    cfg.T = 0.25;
    for (int trial = 0; trial < 10; ++trial) {
        CellField f = make_field(g);
        for (auto& v : f.values) v = uni(rng);
        double lo = *std::min_element(f.values.begin(), f.values.end());
        double hi = *std::max_element(f.values.begin(), f.values.end());

        Trajectory loc = run(f, greenshields(), cfg);
        REQUIRE_FALSE(loc.relaxed_dt);
        REQUIRE(loc.run_min >= lo - 1e-12);
        REQUIRE(loc.run_max <= hi + 1e-12);

        cfg.H = 0.1;
        Trajectory nl = run(f, greenshields(), cfg);
        REQUIRE(nl.run_min >= lo - 1e-12);
        REQUIRE(nl.run_max <= hi + 1e-12);
        cfg.H.reset();
    }
}

TEST_CASE("relaxed step sizes are flagged") {
    Grid1D g = make_grid(-1.0, 1.0, 0.01);
    CellField f = bump_datum(g);
    SchemeConfig cfg;
    cfg.dx = g.dx;
    cfg.dt = 0.005;  // dx / 2, four times the strict bound
    cfg.T = 0.1;
    REQUIRE(run(f, greenshields(), cfg).relaxed_dt);
    cfg.dt = 0.00125;
    REQUIRE_FALSE(run(f, greenshields(), cfg).relaxed_dt);
}

TEST_CASE("cell collapse reports the failing time step") {
    // an upward jump steeper than dx/dt collapses the first no-flux cell
    Grid1D g = make_grid(-1.0, 1.0, 0.01);
    CellField f = make_field(g);
    for (int j = 0; j < g.n_cells; ++j)
        f.values[static_cast<size_t>(j)] = g.midpoint(j) > 0.0 ? 1.0 : 0.0;
    SchemeConfig cfg;
    cfg.dx = g.dx;
    cfg.dt = 0.02;  // 2 dx; the unit jump shrinks h by 0.02
    cfg.T = 0.1;
    REQUIRE_THROWS_WITH(run(f, greenshields(), cfg),
                        ContainsSubstring("time step 1") && ContainsSubstring("h="));
}

TEST_CASE("mass is conserved while the support stays interior") {
    Grid1D g = make_grid(-1.0, 1.0, 0.01);
    CellField f = bump_datum(g);
    SchemeConfig cfg;
    cfg.dx = g.dx;
    cfg.dt = 0.00125;
    cfg.T = 0.125;
    cfg.store_every = 1;
    for (std::optional<double> H : {std::optional<double>{}, std::optional<double>{0.05}}) {
        cfg.H = H;
        Trajectory traj = run(f, greenshields(), cfg);
        double m0 = mass(traj.states.front(), g.dx);
        for (const auto& s : traj.states)
            REQUIRE_THAT(mass(s, g.dx), WithinAbs(m0, 1e-10));
    }
}

TEST_CASE("storage honours store_every and always keeps the final state") {
    Grid1D g = make_grid(-1.0, 1.0, 0.01);
    CellField f = bump_datum(g);
    SchemeConfig cfg;
    cfg.dx = g.dx;
    cfg.dt = 0.005;
    cfg.T = 0.125;  // 25 steps
    cfg.store_every = 7;
    Trajectory traj = run(f, greenshields(), cfg);
    REQUIRE(traj.step_count == 25);
    std::vector<double> expect = {0.0, 7 * 0.005, 14 * 0.005, 21 * 0.005, 25 * 0.005};
    REQUIRE(traj.times.size() == expect.size());
    for (size_t i = 0; i < expect.size(); ++i)
        REQUIRE_THAT(traj.times[i], WithinAbs(expect[i], 1e-15));

    // the sparse run sees the same states as the dense one at matching times
    cfg.store_every = 1;
    Trajectory dense = run(f, greenshields(), cfg);
    REQUIRE(dense.states.size() == 26);
    REQUIRE(traj.states.front() == dense.states.front());
    REQUIRE(traj.states.back() == dense.states.back());
    REQUIRE(traj.states[1] == dense.states[7]);
    REQUIRE(traj.states[3] == dense.states[21]);
    REQUIRE(traj.run_min == dense.run_min);
    REQUIRE(traj.run_max == dense.run_max);
}

TEST_CASE("shock speed and first-order self convergence") {
    // upward Riemann datum 0.5 chi_{x >= 0}: with flux u(1-u) the entropy
    // solution is a shock of speed 1/2, sitting at x = t/2
    auto exact_avg = [](const Grid1D& g, double t) {
        CellField e = make_field(g);
        double xs = 0.5 * t;
        for (int j = 0; j < g.n_cells; ++j) {
            double a = g.left_edge(j), b = g.left_edge(j + 1);
            double covered = std::min(std::max(b - xs, 0.0), b - a);
            e.values[static_cast<size_t>(j)] = 0.5 * covered / g.dx;
        }
        return e;
    };

    std::vector<double> dxs = {0.02, 0.01, 0.005};
    std::vector<double> errs;
    for (double dx : dxs) {
        Grid1D g = make_grid(-1.0, 1.0, dx);
        CellField f = make_field(g);
        for (int j = 0; j < g.n_cells; ++j)
            f.values[static_cast<size_t>(j)] = g.midpoint(j) > 0.0 ? 0.5 : 0.0;
        SchemeConfig cfg;
        cfg.dx = dx;
        cfg.dt = dx / 2.0;
        cfg.T = 0.25;
        cfg.store_every = 1000000;
        Trajectory traj = run(f, greenshields(), cfg);
        CellField last{g, traj.states.back()};
        errs.push_back(l1_distance(last, exact_avg(g, 0.25)));
    }
    REQUIRE(errs[1] < errs[0]);
    REQUIRE(errs[2] < errs[1]);

    // least-squares slope of log err against log dx
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < dxs.size(); ++i) {
        double lx = std::log(dxs[i]), ly = std::log(errs[i]);
        sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
    }
    double npt = static_cast<double>(dxs.size());
    double slope = (npt * sxy - sx * sy) / (npt * sxx - sx * sx);
    REQUIRE(slope >= 0.6);
}
