// command line front end: solve | optimize | study, JSON config in, CSV out
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "elopt/config.hpp"
#include "elopt/csv_io.hpp"
#include "elopt/studies.hpp"
#include "elopt/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliOptions {
    std::string config_path;
    std::string out_dir = "elopt_runs";
    int parallel = 1;
    int store_every = 0;  // 0 keeps the config value
    bool quiet = false;
};

fs::path make_run_dir(const std::string& out, const std::string& verb) {
    std::string base = verb + "-" + elopt::compact_timestamp();
    fs::path dir = fs::path(out) / base;
    for (int k = 2; fs::exists(dir); ++k) dir = fs::path(out) / (base + "-" + std::to_string(k));
    fs::create_directories(dir);
    return dir;
}

void warn_relaxed_dt(double dx, double dt, bool quiet) {
    if (quiet) return;
    double bound = elopt::strict_dt_bound(dx, elopt::greenshields());
    if (dt > bound * (1.0 + 1e-12))
        std::fprintf(stderr,
                     "warning: dt=%.6g exceeds the strict range-preservation bound %.6g; "
                     "the averaged update is not provably monotone at this step\n",
                     dt, bound);
}

// numeric CSV with a fixed header, as written by this tool
std::vector<std::vector<double>> read_csv_columns(const fs::path& path,
                                                  const std::vector<std::string>& header) {
    std::ifstream is(path);
    if (!is) throw elopt::ConfigError("cannot open csv: " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw elopt::ConfigError("empty csv: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string want;
    for (size_t i = 0; i < header.size(); ++i) want += (i ? "," : "") + header[i];
    if (line != want)
        throw elopt::ConfigError("csv " + path.string() + ": expected header '" + want +
                                 "', got '" + line + "'");
    std::vector<std::vector<double>> cols(header.size());
    size_t nrow = 0;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        for (size_t c = 0; c < header.size(); ++c) {
            if (!std::getline(ss, cell, ','))
                throw elopt::ConfigError("csv " + path.string() + ": short row " +
                                         std::to_string(nrow + 1));
            try {
                cols[c].push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw elopt::ConfigError("csv " + path.string() + ": bad number '" + cell + "'");
            }
        }
        ++nrow;
    }
    if (nrow == 0) throw elopt::ConfigError("csv " + path.string() + ": no data rows");
    return cols;
}

elopt::Grid1D build_grid(const elopt::AppConfig::Scheme& sc) {
    return elopt::make_grid(sc.domain_lo, sc.domain_hi, sc.dx);
}

elopt::CellField build_datum(const elopt::AppConfig::Initial& ini, const elopt::Grid1D& g) {
    if (ini.kind == "reference_bump") return elopt::project_function(elopt::reference_datum, g);
    if (ini.kind == "step_guess") return elopt::project_function(elopt::initial_guess_datum, g);
    if (ini.kind == "riemann_half") return elopt::project_function(elopt::riemann_half_datum, g);
    if (ini.kind == "constant") return elopt::make_field(g, ini.value);
    auto cols = read_csv_columns(ini.csv_path, {"x", "u"});
    if (static_cast<int>(cols[0].size()) != g.n_cells)
        throw elopt::ConfigError("initial csv has " + std::to_string(cols[0].size()) +
                                 " rows, grid has " + std::to_string(g.n_cells) + " cells");
    for (int j = 0; j < g.n_cells; ++j) {
        double xm = g.midpoint(j);
        if (std::abs(cols[0][static_cast<size_t>(j)] - xm) > 1e-5 * std::max(1.0, std::abs(xm)))
            throw elopt::ConfigError("initial csv row " + std::to_string(j + 1) +
                                     " is not at the cell midpoint " + std::to_string(xm));
    }
    return elopt::CellField{g, cols[1]};
}

elopt::SchemeConfig build_scheme_config(const elopt::AppConfig& app, const CliOptions& cli) {
    const auto& sc = *app.scheme;
    elopt::SchemeConfig cfg;
    cfg.dx = sc.dx;
    cfg.dt = sc.dt;
    cfg.cfl_factor = sc.cfl_factor;
    cfg.T = sc.T;
    cfg.H = sc.H ? sc.H : app.kernel_H;
    cfg.store_every = cli.store_every > 0 ? cli.store_every : sc.store_every;
    return cfg;
}

json grid_json(const elopt::Grid1D& g) {
    return {{"x_min", g.x_min}, {"x_max", g.x_max}, {"dx", g.dx}, {"n_cells", g.n_cells}};
}

struct RunClock {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    std::string started = elopt::timestamp_utc();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void write_manifest(const fs::path& dir, const std::string& verb, const std::string& command,
                    const RunClock& clock, const json& config_echo, const json& effective,
                    const std::vector<std::string>& artifacts) {
    json m;
    m["run_id"] = dir.filename().string();
    m["verb"] = verb;
    m["command"] = command;
    m["tool_version"] = elopt::version;
    m["started_utc"] = clock.started;
    m["finished_utc"] = elopt::timestamp_utc();
    m["wall_seconds"] = clock.seconds();
    m["config"] = config_echo;
    m["effective"] = effective;
    m["artifacts"] = artifacts;
    elopt::write_text_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

json optimizer_json(const elopt::OptimizerConfig& o, const elopt::AdmissibleSpec& adm) {
    json j{{"max_iterations", o.max_iterations},
           {"max_evaluations", o.max_evaluations},
           {"step_tolerance", o.step_tolerance},
           {"optimality_tolerance", o.optimality_tolerance},
           {"fd_step", o.fd_step},
           {"armijo", {{"c", o.armijo_c}, {"shrink", o.armijo_shrink},
                       {"max_backtracks", o.max_backtracks}}},
           {"n_workers", o.n_workers},
           {"admissible", {{"box", {adm.box_lo, adm.box_hi}}, {"tv_bound", adm.tv_bound}}}};
    if (adm.support)
        j["admissible"]["support"] = {adm.support->first, adm.support->second};
    return j;
}

// rebuild a fully stored trajectory from a previous solve run
elopt::ReferenceSolution load_reference_manifest(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw elopt::ConfigError("cannot open reference manifest: " + manifest_path);
    json m;
    try {
        is >> m;
    } catch (const std::exception& e) {
        throw elopt::ConfigError("reference manifest parse failure: " + std::string(e.what()));
    }
    if (!m.contains("effective") || !m["effective"].is_object())
        throw elopt::ConfigError("reference manifest lacks an 'effective' block");
    const json& eff = m["effective"];
    try {
        const json& g = eff.at("grid");
        elopt::Grid1D grid = elopt::make_grid_cells(g.at("x_min").get<double>(),
                                                    g.at("dx").get<double>(),
                                                    g.at("n_cells").get<int>());
        double dt = eff.at("dt").get<double>();
        int steps = eff.at("steps").get<int>();
        if (eff.at("store_every").get<int>() != 1)
            throw elopt::ConfigError("reference run must be stored at every step");
        bool nonlocal = eff.at("scheme").get<std::string>() == "nonlocal";
        std::optional<double> H;
        if (nonlocal) H = eff.at("H").get<double>();

        fs::path traj_path = fs::path(manifest_path).parent_path() / "trajectory.csv";
        auto cols = read_csv_columns(traj_path, {"t", "x", "u"});
        size_t expect = static_cast<size_t>(steps + 1) * static_cast<size_t>(grid.n_cells);
        if (cols[2].size() != expect)
            throw elopt::ConfigError("trajectory.csv has " + std::to_string(cols[2].size()) +
                                     " rows, expected " + std::to_string(expect));

        elopt::Trajectory traj;
        traj.grid = grid;
        traj.dt = dt;
        traj.step_count = steps;
        traj.store_every = 1;
        for (int s = 0; s <= steps; ++s) {
            traj.times.push_back(s * dt);
            auto b = cols[2].begin() + static_cast<long>(s) * grid.n_cells;
            traj.states.emplace_back(b, b + grid.n_cells);
        }
        traj.run_min = *std::min_element(cols[2].begin(), cols[2].end());
        traj.run_max = *std::max_element(cols[2].begin(), cols[2].end());
        return elopt::make_reference_solution(std::move(traj), nonlocal, H);
    } catch (const json::exception& e) {
        throw elopt::ConfigError("reference manifest field error: " + std::string(e.what()));
    }
}

elopt::TermKind term_kind_of(const std::string& s) {
    if (s == "distributed_tracking") return elopt::TermKind::distributed_tracking;
    if (s == "final_time_tracking") return elopt::TermKind::final_time_tracking;
    return elopt::TermKind::bv_regularization;
}

int run_solve(const elopt::AppConfig& app, const CliOptions& cli, const std::string& command) {
    if (!app.scheme) throw elopt::ConfigError("solve needs a 'scheme' block");
    if (!app.initial) throw elopt::ConfigError("solve needs an 'initial' block");
    RunClock clock;
    elopt::Grid1D grid = build_grid(*app.scheme);
    elopt::CellField u0 = build_datum(*app.initial, grid);
    elopt::SchemeConfig cfg = build_scheme_config(app, cli);

    elopt::Trajectory traj = elopt::run(u0, elopt::greenshields(), cfg);
    if (traj.relaxed_dt) warn_relaxed_dt(cfg.dx, traj.dt, cli.quiet);

    fs::path dir = make_run_dir(cli.out_dir, "solve");
    elopt::write_csv_atomic(dir / "trajectory.csv", elopt::trajectory_csv(traj));

    json eff;
    eff["grid"] = grid_json(grid);
    eff["dt"] = traj.dt;
    eff["steps"] = traj.step_count;
    eff["store_every"] = traj.store_every;
    eff["T"] = cfg.T;
    eff["scheme"] = cfg.H ? "nonlocal" : "local";
    if (cfg.H) {
        eff["H"] = *cfg.H;
        eff["kernel_taps"] = elopt::discrete_weights(cfg.kernel, *cfg.H, cfg.dx).n_taps;
    }
    eff["relaxed_dt"] = traj.relaxed_dt;
    eff["run_min"] = traj.run_min;
    eff["run_max"] = traj.run_max;
    write_manifest(dir, "solve", command, clock, app.raw, eff, {"trajectory.csv"});
    if (!cli.quiet) std::printf("%s\n", dir.string().c_str());
    return 0;
}

int run_optimize(const elopt::AppConfig& app, const CliOptions& cli, const std::string& command) {
    if (!app.scheme) throw elopt::ConfigError("optimize needs a 'scheme' block");
    if (!app.initial) throw elopt::ConfigError("optimize needs an 'initial' block");
    if (!app.objective) throw elopt::ConfigError("optimize needs an 'objective' block");
    RunClock clock;
    elopt::Grid1D grid = build_grid(*app.scheme);
    elopt::SchemeConfig cfg = build_scheme_config(app, cli);
    cfg.store_every = 1;  // distributed tracking needs every state

    elopt::OptimizerConfig opt = app.optimizer.cfg;
    opt.n_workers = cli.parallel;
    if (app.optimizer.auto_step_tol) opt.step_tolerance = cfg.dx * cfg.dx * cfg.dx;
    if (app.optimizer.auto_opt_tol) opt.optimality_tolerance = cfg.dx * cfg.dx;

    std::shared_ptr<const elopt::ReferenceSolution> ref;
    bool needs_ref = false;
    for (const auto& t : app.objective->terms)
        if (t.kind != "bv_regularization") needs_ref = true;
    if (needs_ref) {
        const auto& r = app.objective->reference;
        if (!r.manifest.empty())
            ref = std::make_shared<const elopt::ReferenceSolution>(
                load_reference_manifest(r.manifest));
        else
            ref = std::make_shared<const elopt::ReferenceSolution>(
                elopt::make_reference(r.scheme == "nonlocal", r.H.value_or(0.5)));
    }

    elopt::ObjectiveSpec ospec;
    ospec.reference = ref;
    for (const auto& t : app.objective->terms) {
        auto window = elopt::snap_window_inside(grid, t.w_lo, t.w_hi);
        ospec.terms.push_back({term_kind_of(t.kind), t.weight, window.first, window.second, t.p});
    }

    double dt = cfg.resolved_dt(elopt::greenshields());
    warn_relaxed_dt(cfg.dx, dt, cli.quiet);

    elopt::CellField u_start =
        elopt::project_admissible(build_datum(*app.initial, grid), app.optimizer.admissible)
            .field;
    elopt::ObjectiveFn obj = elopt::make_objective(ospec, elopt::greenshields(), cfg, grid);
    elopt::OptimizationReport rep = elopt::minimize(obj, u_start, app.optimizer.admissible, opt);

    fs::path dir = make_run_dir(cli.out_dir, "optimize");
    elopt::write_csv_atomic(dir / "minimizer.csv", elopt::field_csv(rep.minimizer));
    elopt::write_csv_atomic(dir / "history.csv", elopt::history_csv(rep));

    json eff;
    eff["grid"] = grid_json(grid);
    eff["dt"] = dt;
    eff["steps"] = cfg.step_count(dt);
    eff["store_every"] = 1;
    eff["T"] = cfg.T;
    eff["scheme"] = cfg.H ? "nonlocal" : "local";
    if (cfg.H) eff["H"] = *cfg.H;
    eff["value"] = rep.value;
    eff["iterations"] = rep.iterations;
    eff["evaluations"] = rep.evaluations;
    eff["first_order_optimality"] = rep.first_order_optimality;
    eff["termination"] = elopt::to_string(rep.termination);
    eff["minimizer_tv"] = elopt::total_variation(rep.minimizer);
    eff["optimizer"] = optimizer_json(opt, app.optimizer.admissible);
    write_manifest(dir, "optimize", command, clock, app.raw, eff,
                   {"minimizer.csv", "history.csv"});
    if (!cli.quiet) std::printf("%s\n", dir.string().c_str());
    return 0;
}

int run_study(const elopt::AppConfig& app, const CliOptions& cli, const std::string& command) {
    if (!app.study) throw elopt::ConfigError("study needs a 'study' block");
    RunClock clock;
    const auto& st = *app.study;

    elopt::StudySpec spec;
    spec.dx_list = st.dx_list;
    spec.H_list = st.H_list;
    spec.dx = st.dx;
    spec.T = st.T;
    spec.domain_lo = st.domain_lo;
    spec.domain_hi = st.domain_hi;
    spec.ref_H = st.ref_H;
    spec.admissible = app.optimizer.admissible;
    spec.optimizer = app.optimizer.cfg;
    spec.optimizer.n_workers = cli.parallel;
    spec.auto_tolerances = app.optimizer.auto_step_tol && app.optimizer.auto_opt_tol;
    spec.parallel_rows = st.parallel_rows;

    // results gathered first so a failed study leaves no partial run directory
    std::vector<std::pair<std::string, elopt::CsvTable>> outputs;
    auto emit = [&](const elopt::StudyResult& res, const std::string& rows_name,
                    const std::string& curve_name, const std::string& x_name) {
        outputs.emplace_back(rows_name, elopt::study_rows_csv(res));
        outputs.emplace_back(curve_name, elopt::curve_csv(res, x_name));
        for (const auto& r : res.rows)
            if (r.status != "ok" && !cli.quiet)
                std::fprintf(stderr, "warning: row dx=%g H=%g: %s\n", r.dx, r.H,
                             r.status.c_str());
    };

    if (st.kind == "grid_convergence_local" || st.kind == "grid_convergence_nonlocal") {
        spec.kind = st.kind == "grid_convergence_local"
                        ? elopt::StudyKind::grid_convergence_local
                        : elopt::StudyKind::grid_convergence_nonlocal;
        elopt::StudyResult res = elopt::grid_convergence_study(spec);
        std::string tag = st.kind == "grid_convergence_local" ? "local" : "nonlocal";
        emit(res, "rows.csv", "fig_grid_convergence_" + tag + ".csv", "dx");
    } else if (st.kind == "gamma_minimizers") {
        spec.kind = elopt::StudyKind::gamma_minimizers;
        if (spec.H_list.empty()) spec.H_list = {0.08, 0.04, 0.02, 0.01, 0.005};
        elopt::StudyResult res = elopt::gamma_minimizers_study(spec);
        emit(res, "rows.csv", "fig_discrete_gamma_conv.csv", "H");
    } else if (st.kind == "double_limit") {
        spec.kind = elopt::StudyKind::double_limit;
        if (spec.H_list.empty())
            for (int i = 0; i < 10; ++i) spec.H_list.push_back(0.01 * (i + 1));
        if (st.coupling == "h_half" || st.coupling == "both") {
            elopt::StudyResult res = elopt::double_limit_study(spec, elopt::Coupling::half_h);
            emit(res, "rows_h_half.csv", "fig_double_limit_h_half.csv", "H");
        }
        if (st.coupling == "h_pow11" || st.coupling == "both") {
            elopt::StudyResult res = elopt::double_limit_study(spec, elopt::Coupling::pow_1_1);
            emit(res, "rows_h_pow11.csv", "fig_double_limit_h_pow11.csv", "H");
        }
    } else {  // nl2l_solutions
        spec.kind = elopt::StudyKind::nl2l_solutions;
        if (spec.H_list.empty()) spec.H_list = {0.4, 0.2, 0.1, 0.05, 0.01};
        elopt::Grid1D grid = elopt::make_grid(st.domain_lo, st.domain_hi, st.dx);
        elopt::CellField u0 = app.initial
                                  ? build_datum(*app.initial, grid)
                                  : elopt::project_function(elopt::reference_datum, grid);
        elopt::StudyResult res = elopt::nl2l_solutions_study(u0, spec.H_list, st.T);
        emit(res, "rows.csv", "fig_nl2l_gap.csv", "H");
    }

    fs::path dir = make_run_dir(cli.out_dir, "study");
    std::vector<std::string> artifacts;
    for (const auto& [name, table] : outputs) {
        elopt::write_csv_atomic(dir / name, table);
        artifacts.push_back(name);
    }

    json eff;
    eff["kind"] = st.kind;
    eff["T"] = spec.T;
    eff["domain"] = {spec.domain_lo, spec.domain_hi};
    eff["dx"] = spec.dx;
    eff["dx_list"] = spec.dx_list;
    eff["H_list"] = spec.H_list;
    eff["ref_H"] = spec.ref_H;
    eff["coupling"] = st.coupling;
    eff["parallel_rows"] = spec.parallel_rows;
    eff["auto_tolerances"] = spec.auto_tolerances;
    eff["optimizer"] = optimizer_json(spec.optimizer, spec.admissible);
    write_manifest(dir, "study", command, clock, app.raw, eff, artifacts);
    if (!cli.quiet) std::printf("%s\n", dir.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Eulerian-Lagrangian solver and optimizer for scalar conservation laws"};
    app.require_subcommand(1);
    CliOptions cli;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", cli.config_path, "JSON configuration file")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", cli.out_dir, "output root directory");
        sub->add_option("--parallel", cli.parallel, "worker threads for gradients or rows")
            ->check(CLI::PositiveNumber);
        sub->add_option("--store-every", cli.store_every, "override state storage stride")
            ->check(CLI::PositiveNumber);
        sub->add_flag("--quiet", cli.quiet, "suppress warnings and the run path echo");
    };
    CLI::App* solve = app.add_subcommand("solve", "march one initial datum to the horizon");
    CLI::App* optimize =
        app.add_subcommand("optimize", "projected gradient descent over the initial datum");
    CLI::App* study = app.add_subcommand("study", "run a predefined experiment sweep");
    add_common(solve);
    add_common(optimize);
    add_common(study);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // bad invocation is a configuration error
    }

    std::string command;
    for (int i = 0; i < argc; ++i) command += (i ? " " : "") + std::string(argv[i]);

    try {
        elopt::AppConfig config = elopt::load_config_file(cli.config_path);
        if (solve->parsed()) return run_solve(config, cli, command);
        if (optimize->parsed()) return run_optimize(config, cli, command);
        return run_study(config, cli, command);
    } catch (const elopt::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return 2;
    }
}
